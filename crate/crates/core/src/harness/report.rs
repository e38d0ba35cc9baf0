//! Report records and their JSON / CSV forms.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diameter::{DiameterLimit, DiameterResult};
use crate::error::Result;
use crate::harness::presets::{Oracle, Quantity};
use crate::spectrum::PerssonResult;

pub const SCHEMA: &str = "capbound/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioStatus {
    /// Both factors finite and positive.
    Finite,
    /// `λ = 0` together with `D = +∞`.
    BothDegenerate,
    /// One factor degenerate while the other is not.
    Inconsistent,
}

/// `λ D²` classified.
pub fn classify(lambda_is_zero: bool, lambda: f64, d: f64) -> (RatioStatus, Option<f64>) {
    let d_inf = d.is_infinite();
    let lambda_inf = lambda.is_infinite();
    if lambda_is_zero && d_inf {
        return (RatioStatus::BothDegenerate, None);
    }
    // an empty region has λ = +∞ and no cube, D = 0
    if lambda_inf && d == 0.0 {
        return (RatioStatus::BothDegenerate, None);
    }
    if lambda_is_zero || d_inf || lambda_inf || d == 0.0 {
        return (RatioStatus::Inconsistent, None);
    }
    (RatioStatus::Finite, Some(lambda * d * d))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCheck {
    #[serde(flatten)]
    pub oracle: Oracle,
    #[serde(with = "crate::serde_f64")]
    pub got: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema: String,
    pub preset: String,
    pub dim: usize,
    pub shape: Vec<usize>,
    pub h: f64,
    pub gamma: f64,
    pub seed: u64,
    #[serde(with = "crate::serde_f64")]
    pub lambda: f64,
    pub lambda_residual: f64,
    pub lambda_iterations: usize,
    pub lambda_is_zero: bool,
    #[serde(with = "crate::serde_f64")]
    pub d: f64,
    pub d_bracketed: bool,
    pub status: RatioStatus,
    #[serde(with = "crate::serde_f64::option")]
    pub ratio: Option<f64>,
    pub diameter: DiameterResult,
    pub persson: Option<PerssonResult>,
    pub d_limit: Option<DiameterLimit>,
    #[serde(with = "crate::serde_f64::option")]
    pub lambda_inf: Option<f64>,
    #[serde(with = "crate::serde_f64::option")]
    pub d_inf: Option<f64>,
    pub status_inf: Option<RatioStatus>,
    #[serde(with = "crate::serde_f64::option")]
    pub ratio_inf: Option<f64>,
    pub oracles: Vec<OracleCheck>,
    /// Wall-clock seconds per stage; excluded from comparisons.
    pub runtimes: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn check_oracles(&mut self, oracles: &[Oracle]) {
        self.oracles = oracles
            .iter()
            .map(|o| {
                let got = match o.quantity {
                    Quantity::Lambda => self.lambda,
                    Quantity::Diameter => self.d,
                };
                OracleCheck {
                    oracle: o.clone(),
                    got,
                    pass: o.accepts(got),
                }
            })
            .collect();
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifySummary {
    pub schema: String,
    pub gamma: f64,
    pub seed: u64,
    pub reports: Vec<BoundReport>,
    /// Smallest and largest finite `λD²`.
    #[serde(with = "crate::serde_f64::option")]
    pub ratio_min: Option<f64>,
    #[serde(with = "crate::serde_f64::option")]
    pub ratio_max: Option<f64>,
    /// Smallest `C` with every finite ratio in `[1/C, C]`.
    #[serde(with = "crate::serde_f64::option")]
    pub c_fit: Option<f64>,
    /// Largest pairwise relative spread of `λD²` over the constant-potential
    /// family, when at least two of its members ran.
    #[serde(with = "crate::serde_f64::option")]
    pub constant_family_spread: Option<f64>,
    pub failures: Vec<String>,
    pub pass: bool,
}

impl VerifySummary {
    /// JSON with all runtimes cleared.
    pub fn canonical_json(&self) -> Result<String> {
        let mut s = self.clone();
        for r in &mut s.reports {
            r.runtimes.clear();
        }
        Ok(serde_json::to_string_pretty(&s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per preset.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "preset", "h", "gamma", "lambda", "d", "ratio", "status", "lambda_inf", "d_inf", "ratio_inf", "oracles_pass",
        ])?;
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.reports {
            out.write_record([
                r.preset.clone(),
                r.h.to_string(),
                r.gamma.to_string(),
                r.lambda.to_string(),
                r.d.to_string(),
                f(r.ratio),
                serde_json::to_string(&r.status)?.trim_matches('"').to_string(),
                f(r.lambda_inf),
                f(r.d_inf),
                f(r.ratio_inf),
                r.oracles.iter().all(|o| o.pass).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-edge qualification table of one diameter run.
pub fn write_levels_csv<W: Write>(d: &DiameterResult, dim: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cells", "d", "cubes", "evaluated", "qualifies", "integral", "threshold"])?;
    for lv in &d.levels {
        out.write_record([
            lv.cells.to_string(),
            lv.d.to_string(),
            lv.cubes.to_string(),
            lv.evaluated.to_string(),
            lv.qualifying.is_some().to_string(),
            lv.qualifying_integral.map(|v| v.to_string()).unwrap_or_default(),
            lv.d.powi(dim as i32 - 2).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

//! Runs presets end to end: `λ` against `D`, `λ_∞` against `D_∞`, and the
//! family-wide consistency of `λD²`.

pub mod presets;
pub mod report;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carving::CarvingConfig;
use crate::diameter::{diameter, diameter_limit, SweepConfig};
use crate::error::{Error, Result};
use crate::spectrum::{bottom, persson_limit, EigenConfig};

pub use presets::{build, Instance, Oracle, OracleKind, Quantity, CATALOG};
pub use report::{classify, BoundReport, OracleCheck, RatioStatus, VerifySummary, SCHEMA};

/// One run, as read from a JSON config document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema: String,
    pub presets: Vec<String>,
    pub gamma: f64,
    /// Relative mesh width; each preset's default when absent.
    pub h: Option<f64>,
    pub seed: u64,
    pub jobs: Option<usize>,
    /// Compute `λ(Ω ∖ B̄_R)` over the preset radii.
    pub persson: bool,
    /// Compute `D_R` over the preset radii as well.
    pub exterior_diameter: bool,
    pub c_max: f64,
    pub eigen: EigenConfig,
    pub carving: CarvingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA.to_string(),
            presets: CATALOG.iter().map(|s| s.to_string()).collect(),
            gamma: 0.5,
            h: None,
            seed: 0,
            jobs: None,
            persson: false,
            exterior_diameter: false,
            c_max: 100.0,
            eigen: EigenConfig::default(),
            carving: CarvingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::InvalidArgument(format!("config schema `{}`, expected `{SCHEMA}`", self.schema)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma {} not in (0, 1)", self.gamma)));
        }
        if let Some(p) = self.presets.iter().find(|p| !presets::is_known(p)) {
            return Err(Error::UnknownPreset(p.clone()));
        }
        Ok(())
    }

    pub fn carving(&self) -> CarvingConfig {
        CarvingConfig {
            gamma: self.gamma,
            seed: self.seed,
            ..self.carving.clone()
        }
    }

    pub fn eigen(&self) -> EigenConfig {
        EigenConfig {
            seed: self.eigen.seed.wrapping_add(self.seed),
            ..self.eigen.clone()
        }
    }

    pub fn sweep(&self, inst: &Instance) -> SweepConfig {
        SweepConfig {
            carving: self.carving(),
            period: inst.period,
            ..SweepConfig::default()
        }
    }
}

fn lambda_is_zero(lambda: f64, h: f64) -> bool {
    lambda.abs() <= 1e-12 * h.powi(-2)
}

pub fn run_preset(inst: &Instance, cfg: &RunConfig) -> Result<BoundReport> {
    let mut runtimes = BTreeMap::new();
    let problem = &inst.problem;
    let lat = problem.lattice();
    let eigen = cfg.eigen();
    let sweep = cfg.sweep(inst);

    let t = Instant::now();
    let op = problem.operator()?;
    let spec = bottom(&op, &eigen)?;
    runtimes.insert("spectrum".to_string(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let diam = diameter(problem, &inst.d_grid, &sweep)?;
    runtimes.insert("diameter".to_string(), t.elapsed().as_secs_f64());

    let (status, ratio) = classify(spec.is_zero(), spec.lambda, diam.d);
    let mut rep = BoundReport {
        schema: SCHEMA.to_string(),
        preset: inst.name.clone(),
        dim: lat.dim(),
        shape: lat.shape()[..lat.dim()].to_vec(),
        h: lat.h(),
        gamma: cfg.gamma,
        seed: cfg.seed,
        lambda: spec.lambda,
        lambda_residual: spec.residual,
        lambda_iterations: spec.iterations,
        lambda_is_zero: spec.is_zero(),
        d: diam.d,
        d_bracketed: diam.bracketed,
        status,
        ratio,
        diameter: diam,
        persson: None,
        d_limit: None,
        lambda_inf: None,
        d_inf: None,
        status_inf: None,
        ratio_inf: None,
        oracles: Vec::new(),
        runtimes,
    };

    if (cfg.persson || cfg.exterior_diameter) && !inst.radii.is_empty() {
        let t = Instant::now();
        let p = persson_limit(&op, &inst.center, &inst.radii, &eigen)?;
        rep.runtimes.insert("persson".to_string(), t.elapsed().as_secs_f64());
        rep.lambda_inf = Some(p.limit);
        rep.persson = Some(p);
    }
    if cfg.exterior_diameter && !inst.radii.is_empty() {
        let t = Instant::now();
        let lim = diameter_limit(problem, &inst.center, &inst.radii, &inst.d_grid, &sweep)?;
        rep.runtimes.insert("exterior_diameter".to_string(), t.elapsed().as_secs_f64());
        rep.d_inf = Some(lim.limit);
        if let Some(l) = rep.lambda_inf {
            let (s, r) = classify(lambda_is_zero(l, lat.h()), l, lim.limit);
            rep.status_inf = Some(s);
            rep.ratio_inf = r;
        }
        rep.d_limit = Some(lim);
    }
    rep.check_oracles(&inst.oracles);
    Ok(rep)
}

/// `C` such that every value lies in `[1/C, C]`.
pub fn fit_interval(ratios: &[f64]) -> Option<f64> {
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    (!ratios.is_empty()).then(|| hi.max(1.0 / lo))
}

fn max_pairwise_spread(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    Some((hi - lo) / lo)
}

fn run_all(cfg: &RunConfig) -> Result<(Vec<Instance>, Vec<Result<BoundReport>>)> {
    cfg.validate()?;
    let instances = cfg
        .presets
        .iter()
        .map(|p| build(p, cfg.h))
        .collect::<Result<Vec<_>>>()?;
    let reports = instances.par_iter().map(|i| run_preset(i, cfg)).collect();
    Ok((instances, reports))
}

fn summarize(cfg: &RunConfig, instances: &[Instance], results: Vec<Result<BoundReport>>) -> VerifySummary {
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for (inst, r) in instances.iter().zip(results) {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(format!("{}: {e}", inst.name)),
        }
    }
    let mut finite = Vec::new();
    let mut family = Vec::new();
    for r in &reports {
        for o in r.oracles.iter().filter(|o| !o.pass) {
            failures.push(format!(
                "{}: {:?} expected {} ± {}, got {}",
                r.preset, o.oracle.quantity, o.oracle.value, o.oracle.tol, o.got
            ));
        }
        match (r.status, r.ratio) {
            (RatioStatus::Inconsistent, _) => failures.push(format!(
                "{}: λ = {} and D = {} are not both degenerate",
                r.preset, r.lambda, r.d
            )),
            (RatioStatus::Finite, Some(x)) => {
                finite.push(x);
                if r.preset.starts_with("const-") {
                    family.push(x);
                }
            }
            _ => {}
        }
        if let Some(p) = &r.persson {
            if !p.monotone {
                failures.push(format!("{}: λ(Ω∖B_R) not monotone: {:?}", r.preset, p.values));
            }
        }
    }
    let c_fit = fit_interval(&finite);
    if let Some(c) = c_fit {
        if c > cfg.c_max {
            failures.push(format!("λD² needs C = {c:.3} > {}", cfg.c_max));
        }
    }
    let spread = max_pairwise_spread(&family);
    if let Some(s) = spread {
        if s > 0.3 {
            failures.push(format!("constant-potential family λD² spread {:.1}% > 30%", 100.0 * s));
        }
    }
    VerifySummary {
        schema: SCHEMA.to_string(),
        gamma: cfg.gamma,
        seed: cfg.seed,
        ratio_min: finite.iter().copied().reduce(f64::min),
        ratio_max: finite.iter().copied().reduce(f64::max),
        c_fit,
        constant_family_spread: spread,
        pass: failures.is_empty(),
        failures,
        reports,
    }
}

/// `λ` against `D` over the configured presets.
pub fn verify_two_sided(cfg: &RunConfig) -> Result<VerifySummary> {
    let (instances, results) = run_all(cfg)?;
    Ok(summarize(cfg, &instances, results))
}

/// As [`verify_two_sided`], adding `λ(Ω ∖ B̄_R)` and `D_R` over each
/// preset's radii.
pub fn verify_essential(cfg: &RunConfig) -> Result<VerifySummary> {
    let cfg = RunConfig {
        persson: true,
        exterior_diameter: true,
        ..cfg.clone()
    };
    let (instances, results) = run_all(&cfg)?;
    let mut s = summarize(&cfg, &instances, results);
    let mut finite = Vec::new();
    for r in &s.reports {
        let inst = instances.iter().find(|i| i.name == r.preset).expect("report of a built preset");
        if r.status_inf == Some(RatioStatus::Inconsistent) {
            s.failures.push(format!(
                "{}: λ_∞ = {:?} and D_∞ = {:?} are not both degenerate",
                r.preset, r.lambda_inf, r.d_inf
            ));
        }
        if let Some(x) = r.ratio_inf {
            finite.push(x);
        }
        let (Some(p), Some(lim)) = (&r.persson, &r.d_limit) else {
            continue;
        };
        if !lim.monotone {
            s.failures.push(format!("{}: D_R not monotone", r.preset));
        }
        if inst.discrete {
            let ds: Vec<f64> = lim.values.iter().map(|v| v.d).collect();
            let shrinking = ds.windows(2).all(|w| w[1] < w[0]);
            let first = p.values[0];
            let last = *p.values.last().expect("radii nonempty");
            if !shrinking || last < 10.0 * first {
                s.failures.push(format!(
                    "{}: D_R = {ds:?} with λ_R from {first} to {last} does not show discreteness",
                    r.preset
                ));
            }
        }
    }
    if let Some(c) = fit_interval(&finite) {
        if c > cfg.c_max {
            s.failures.push(format!("λ_∞D_∞² needs C = {c:.3} > {}", cfg.c_max));
        }
    }
    s.pass = s.failures.is_empty();
    Ok(s)
}

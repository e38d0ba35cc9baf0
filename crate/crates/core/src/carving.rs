//! Minimisation of `∫_{Q∖F} Ṽ` over negligible compact sets `F`, alone and
//! jointly with the choice of gauge.
//!
//! The set search is greedy: nodes are taken in order of decreasing `Ṽ`
//! and the longest prefix whose capacity stays within `γ cap(Q_d)` is kept.
//! Capacity is monotone along the prefix, so that prefix is located by
//! doubling followed by bisection.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{cap, cube_capacity, CapacityConfig, CompactSet};
use crate::error::{Error, Result};
use crate::gauge::{
    effective_potential, optimize_gauge, sample_polynomial_gauges, CubeProblem, EffectivePotential, GaugeCandidate,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarvingConfig {
    pub gamma: f64,
    #[serde(default)]
    pub capacity: CapacityConfig,
    /// Polynomial gauges tried besides the optimised phase (`P ≡ 1` first).
    pub gauge_budget: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for CarvingConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            capacity: CapacityConfig::default(),
            gauge_budget: 4,
            rounds: 2,
            seed: 0,
        }
    }
}

/// One capacity evaluation made while growing `F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityProbe {
    pub nodes: usize,
    pub cap: f64,
    pub feasible: bool,
}

/// The best set found for a fixed effective potential.
#[derive(Clone, Debug)]
pub struct Carving {
    pub f: CompactSet,
    pub integral: f64,
    pub cap_used: f64,
    pub cap_cube: f64,
    pub feasible: bool,
    pub audit: Vec<CapacityProbe>,
}

#[derive(Clone, Debug)]
pub struct CarvingResult {
    pub f: CompactSet,
    pub gauge: GaugeCandidate,
    pub integral: f64,
    pub cap_used: f64,
    pub cap_cube: f64,
    pub feasible: bool,
    pub audit: Vec<CapacityProbe>,
}

impl CarvingResult {
    fn new(c: Carving, gauge: GaugeCandidate) -> Self {
        Self {
            f: c.f,
            gauge,
            integral: c.integral,
            cap_used: c.cap_used,
            cap_cube: c.cap_cube,
            feasible: c.feasible,
            audit: c.audit,
        }
    }

    /// Strictly smaller integral, or equal integral with less capacity.
    pub fn beats(&self, other: &CarvingResult) -> bool {
        match self.integral.partial_cmp(&other.integral) {
            Some(Ordering::Less) => true,
            Some(Ordering::Equal) => self.cap_used < other.cap_used,
            _ => false,
        }
    }

    pub fn record(&self) -> CarvingRecord {
        CarvingRecord {
            cube: self.f.cube().clone(),
            f_runs: self.f.runs(),
            f_nodes: self.f.count(),
            gauge: self.gauge.clone(),
            integral: self.integral,
            cap_used: self.cap_used,
            cap_cube: self.cap_cube,
            feasible: self.feasible,
            audit: self.audit.clone(),
        }
    }
}

/// Serialisable form of a [`CarvingResult`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarvingRecord {
    pub cube: crate::grid::CubeWindow,
    pub f_runs: Vec<(usize, usize)>,
    pub f_nodes: usize,
    pub gauge: GaugeCandidate,
    #[serde(with = "crate::serde_f64")]
    pub integral: f64,
    pub cap_used: f64,
    pub cap_cube: f64,
    pub feasible: bool,
    pub audit: Vec<CapacityProbe>,
}

impl CarvingRecord {
    /// Recomputes `∫_{Q∖F} Ṽ` from the serialised set and gauge.
    pub fn reevaluate(&self, prob: &CubeProblem) -> Result<f64> {
        let n = prob.lattice().len();
        let f = crate::grid::io::mask_from_runs(n, &self.f_runs)?;
        let gauge = self.gauge.rebuild(prob)?;
        Ok(effective_potential(prob, &gauge).integral(&f))
    }

    pub fn set(&self, prob: &CubeProblem) -> Result<CompactSet> {
        let n = prob.lattice().len();
        CompactSet::new(prob.cube().clone(), crate::grid::io::mask_from_runs(n, &self.f_runs)?)
    }
}

/// Greedy superlevel carving of `eff` on the cube. `outside` marks the
/// nodes of `Q_d ∖ Ω`; they and the singular nodes of the gauge are forced
/// into `F`.
pub fn min_over_f(
    eff: &EffectivePotential,
    cube: &crate::grid::CubeWindow,
    outside: &[bool],
    gamma: f64,
    cfg: &CapacityConfig,
) -> Result<Carving> {
    let lat = eff.lattice();
    if outside.len() != lat.len() {
        return Err(Error::ShapeMismatch("outside mask does not match the cube".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let cap_cube = cube_capacity(cube, cfg)?;
    let budget = gamma * cap_cube;
    let base: Vec<bool> = outside.iter().zip(&eff.sentinel).map(|(o, s)| *o || *s).collect();
    let mut audit = Vec::new();
    let base_set = CompactSet::new(cube.clone(), base.clone())?;
    let base_cap = cap(&base_set, cfg)?;
    let base_count = base_set.count();
    audit.push(CapacityProbe {
        nodes: base_count,
        cap: base_cap,
        feasible: base_cap <= budget,
    });
    if base_cap > budget {
        return Ok(Carving {
            f: base_set,
            integral: f64::INFINITY,
            cap_used: base_cap,
            cap_cube,
            feasible: false,
            audit,
        });
    }

    let center = cube.center;
    let dist = |i: usize| {
        let x = lat.coords(i);
        (0..lat.dim()).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>()
    };
    let mut order: Vec<usize> = (0..lat.len()).filter(|&i| !base[i] && eff.node[i] > 0.0).collect();
    order.sort_by(|&p, &q| {
        eff.node[q]
            .total_cmp(&eff.node[p])
            .then(dist(p).total_cmp(&dist(q)))
            .then(p.cmp(&q))
    });

    let mut caps: HashMap<usize, f64> = HashMap::new();
    caps.insert(0, base_cap);
    let mut probe = |k: usize, audit: &mut Vec<CapacityProbe>| -> Result<f64> {
        if let Some(&c) = caps.get(&k) {
            return Ok(c);
        }
        let mut m = base.clone();
        for &i in &order[..k] {
            m[i] = true;
        }
        let c = cap(&CompactSet::new(cube.clone(), m)?, cfg)?;
        audit.push(CapacityProbe {
            nodes: base_count + k,
            cap: c,
            feasible: c <= budget,
        });
        caps.insert(k, c);
        Ok(c)
    };

    // largest k with cap(prefix k) <= budget; k = 0 is feasible
    let mut good = 0usize;
    let mut bad = None;
    let mut step = 1usize;
    while good < order.len() {
        let k = (good + step).min(order.len());
        if probe(k, &mut audit)? <= budget {
            good = k;
            step *= 2;
        } else {
            bad = Some(k);
            break;
        }
    }
    if let Some(mut hi) = bad {
        while hi - good > 1 {
            let mid = good + (hi - good) / 2;
            if probe(mid, &mut audit)? <= budget {
                good = mid;
            } else {
                hi = mid;
            }
        }
    }
    let mut member = base;
    for &i in &order[..good] {
        member[i] = true;
    }
    let cap_used = caps[&good];
    let integral = eff.integral(&member);
    Ok(Carving {
        f: CompactSet::new(cube.clone(), member)?,
        integral,
        cap_used,
        cap_cube,
        feasible: true,
        audit,
    })
}

/// Outcome of [`joint_min`]: the overall best pair and the best pair of
/// each gauge family.
#[derive(Clone, Debug)]
pub struct JointResult {
    pub best: CarvingResult,
    pub optimized: CarvingResult,
    pub polynomial: Option<CarvingResult>,
    /// Incumbent integral after each alternating round.
    pub trace: Vec<f64>,
}

fn keep_better(inc: &mut Option<CarvingResult>, cand: CarvingResult) {
    match inc {
        Some(cur) if !cand.beats(cur) => {}
        _ => *inc = Some(cand),
    }
}

fn optimized_family(prob: &CubeProblem, cfg: &CarvingConfig, start: Option<&CarvingResult>) -> Result<(CarvingResult, Vec<f64>)> {
    let cube = prob.cube();
    let outside = prob.outside();
    let mut incumbent = start.cloned();
    let mut gauge = optimize_gauge(prob, &prob.outside_set())?;
    let mut trace = Vec::with_capacity(cfg.rounds);
    let mut last_f: Option<Vec<bool>> = None;
    for _ in 0..cfg.rounds.max(1) {
        let eff = effective_potential(prob, &gauge);
        let carved = min_over_f(&eff, cube, outside, cfg.gamma, &cfg.capacity)?;
        let f = carved.f.clone();
        let feasible = carved.feasible;
        let this_round = CarvingResult::new(carved, gauge.clone());
        keep_better(&mut incumbent, this_round.clone());
        trace.push(incumbent.as_ref().map_or(f64::INFINITY, |r| r.integral));
        if !feasible || last_f.as_deref() == Some(f.member()) {
            break;
        }
        let next = match optimize_gauge(prob, &f) {
            Ok(g) => g,
            Err(Error::TooManyHoles(_)) => break,
            Err(e) => return Err(e),
        };
        // the new gauge is optimal for the old set; score that pair too
        let eff = effective_potential(prob, &next);
        let integral = eff.integral(f.member());
        keep_better(
            &mut incumbent,
            CarvingResult {
                integral,
                gauge: next.clone(),
                ..this_round
            },
        );
        last_f = Some(f.member().to_vec());
        gauge = next;
    }
    Ok((incumbent.expect("at least one round"), trace))
}

fn polynomial_family(prob: &CubeProblem, cfg: &CarvingConfig) -> Result<Option<CarvingResult>> {
    if cfg.gauge_budget == 0 {
        return Ok(None);
    }
    let cube = prob.cube();
    let gauges = sample_polynomial_gauges(cube, cfg.gauge_budget, cfg.seed)?;
    let results: Vec<Result<CarvingResult>> = gauges
        .into_par_iter()
        .map(|g| {
            let eff = effective_potential(prob, &g);
            let c = min_over_f(&eff, cube, prob.outside(), cfg.gamma, &cfg.capacity)?;
            Ok(CarvingResult::new(c, g))
        })
        .collect();
    let mut best = None;
    for r in results {
        keep_better(&mut best, r?);
    }
    Ok(best)
}

/// Alternating minimisation over `(F, ω)` plus the polynomial gauge family.
pub fn joint_min(prob: &CubeProblem, cfg: &CarvingConfig) -> Result<JointResult> {
    joint_min_from(prob, cfg, None)
}

/// As [`joint_min`], with a previously found pair as the starting incumbent.
/// The pair must be feasible for `cfg.gamma`.
pub fn joint_min_from(prob: &CubeProblem, cfg: &CarvingConfig, incumbent: Option<&JointResult>) -> Result<JointResult> {
    let (optimized, trace) = optimized_family(prob, cfg, incumbent.map(|r| &r.optimized))?;
    let mut polynomial = polynomial_family(prob, cfg)?;
    if let Some(prev) = incumbent.and_then(|r| r.polynomial.clone()) {
        keep_better(&mut polynomial, prev);
    }
    let mut best = Some(optimized.clone());
    if let Some(p) = &polynomial {
        keep_better(&mut best, p.clone());
    }
    Ok(JointResult {
        best: best.expect("set above"),
        optimized,
        polynomial,
        trace,
    })
}

/// [`joint_min`] for each `γ` in ascending order, each run starting from the
/// previous optimum (a set negligible for `γ₁` stays negligible for `γ₂ > γ₁`).
pub fn joint_min_sweep(prob: &CubeProblem, cfg: &CarvingConfig, gammas: &[f64]) -> Result<Vec<JointResult>> {
    if gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("gammas must be ascending".into()));
    }
    let mut out: Vec<JointResult> = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let c = CarvingConfig { gamma: g, ..cfg.clone() };
        let prev = out.last().filter(|r| r.best.feasible);
        out.push(joint_min_from(prob, &c, prev)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::is_negligible;
    use crate::gauge::CubeProblem;
    use crate::grid::{CubeWindow, Lattice};

    fn unit_cube(cells: usize) -> CubeWindow {
        let lat = Lattice::new(&[cells + 1, cells + 1], 1.0 / cells as f64, &[-0.5, -0.5]).unwrap();
        CubeWindow::whole(&lat).unwrap()
    }

    fn problem(c: &CubeWindow, v: impl Fn(&[f64; 3]) -> f64, outside: impl Fn(&[f64; 3]) -> bool) -> CubeProblem {
        let lat = c.local_lattice();
        let theta = vec![vec![0.0; lat.len()]; 2];
        let vv = (0..lat.len()).map(|i| v(&lat.coords(i))).collect();
        let out = (0..lat.len()).map(|i| outside(&lat.coords(i))).collect();
        CubeProblem::from_parts(c, theta, vv, out).unwrap()
    }

    #[test]
    fn zero_potential_carves_nothing() {
        let c = unit_cube(16);
        let p = problem(&c, |_| 0.0, |_| false);
        let r = joint_min(&p, &CarvingConfig::default()).unwrap();
        assert_eq!(r.best.integral, 0.0);
        assert!(r.best.f.is_empty());
        assert!(r.best.feasible);
    }

    #[test]
    fn cube_outside_domain_is_infeasible() {
        let c = unit_cube(8);
        let p = problem(&c, |_| 1.0, |_| true);
        let r = joint_min(&p, &CarvingConfig { gamma: 0.9, ..Default::default() }).unwrap();
        assert!(!r.best.feasible);
        assert_eq!(r.best.integral, f64::INFINITY);
    }

    #[test]
    fn spike_is_carved() {
        let c = unit_cube(16);
        let lat = c.local_lattice();
        let spike = lat.index([5, 9, 0]);
        let sx = lat.coords(spike);
        let p = problem(&c, |x| if *x == sx { 1e6 } else { 1.0 }, |_| false);
        let eff = effective_potential(&p, &GaugeCandidate::identity(&lat));
        let cfg = CapacityConfig::default();
        let r = min_over_f(&eff, &c, p.outside(), 0.5, &cfg).unwrap();
        assert!(r.f.contains(spike));
        let h2 = lat.cell_volume();
        assert!(r.integral <= 1.0 - h2 + 1e-12, "integral {}", r.integral);
        assert!(r.integral > 0.0);
        assert!(is_negligible(&r.f, 0.5, &cfg).unwrap());
    }

    #[test]
    fn greedy_prefix_is_maximal() {
        let c = unit_cube(12);
        let p = problem(&c, |x| 1.0 + x[0] * x[0] + 0.3 * x[1], |_| false);
        let lat = c.local_lattice();
        let eff = effective_potential(&p, &GaugeCandidate::identity(&lat));
        let cfg = CapacityConfig::default();
        let r = min_over_f(&eff, &c, p.outside(), 0.3, &cfg).unwrap();
        let budget = 0.3 * r.cap_cube;
        assert!(r.cap_used <= budget);
        // the next node in the same order breaks the budget
        let infeasible = r.audit.iter().filter(|a| !a.feasible).map(|a| a.nodes).min();
        if let Some(n) = infeasible {
            assert_eq!(n, r.f.count() + 1);
        }
    }

    #[test]
    fn sweep_is_monotone_in_gamma() {
        let c = unit_cube(12);
        let p = problem(&c, |x| 2.0 + x[0] - x[1] * x[1], |x| x[0] > 0.45);
        let gammas = [0.1, 0.3, 0.5, 0.9];
        let rs = joint_min_sweep(&p, &CarvingConfig::default(), &gammas).unwrap();
        for w in rs.windows(2) {
            assert!(w[1].best.integral <= w[0].best.integral);
        }
    }
}

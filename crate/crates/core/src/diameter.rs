//! Capacitary interior diameter: the largest cube edge `d` for which some
//! cube admits a negligible carving with `∫_{Q_d∖F} Ṽ ≤ d^{n−2}`.
//!
//! Cubes are swept with stride `d/2` over a node region, symmetric about
//! its centre, and visited in order of increasing `∫_Q V` so that the
//! search for a qualifying cube usually stops early. Edges are tested on a
//! dyadic grid and the bracket is then bisected twice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carving::{joint_min, CarvingConfig, CarvingRecord, JointResult};
use crate::error::{Error, Result};
use crate::grid::{CubeWindow, Lattice};
use crate::problem::Problem;

/// Inclusive node-index box swept by the cubes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRegion {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl SweepRegion {
    pub fn whole(lat: &Lattice) -> Self {
        let mut hi = [0usize; 3];
        for (a, h) in hi.iter_mut().enumerate().take(lat.dim()) {
            *h = lat.extent(a) - 1;
        }
        Self { lo: [0; 3], hi }
    }

    /// Corners of all cubes with `cells` cells placed at `stride`, symmetric
    /// about the centre of the region, in lexicographic order.
    pub fn corners(&self, dim: usize, cells: usize, stride: usize) -> Vec<[usize; 3]> {
        self.corners_within(dim, cells, stride, None)
    }

    /// As [`corners`](Self::corners); along axes with a `period` (in
    /// cells) only corners `lo, lo + stride, …` below `lo + period` are kept.
    pub fn corners_within(&self, dim: usize, cells: usize, stride: usize, period: Option<&[usize; 3]>) -> Vec<[usize; 3]> {
        let stride = stride.max(1);
        let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(dim);
        for a in 0..dim {
            let (lo, hi) = (self.lo[a], self.hi[a]);
            if hi < lo + cells {
                return Vec::new();
            }
            if let Some(p) = period.map(|p| p[a]).filter(|&p| p > 0) {
                per_axis.push((lo..lo + p).step_by(stride).take_while(|&c| c + cells <= hi).collect());
                continue;
            }
            let mid = (lo + hi - cells) / 2;
            let mut pos = vec![mid];
            let mut k = 1;
            loop {
                let mut any = false;
                if mid >= lo + k * stride {
                    pos.push(mid - k * stride);
                    any = true;
                }
                if mid + k * stride + cells <= hi {
                    pos.push(mid + k * stride);
                    any = true;
                }
                if !any {
                    break;
                }
                k += 1;
            }
            pos.sort_unstable();
            per_axis.push(pos);
        }
        let mut out = vec![[0usize; 3]];
        for (a, pos) in per_axis.iter().enumerate() {
            out = out
                .into_iter()
                .flat_map(|c| {
                    pos.iter().map(move |&p| {
                        let mut c = c;
                        c[a] = p;
                        c
                    })
                })
                .collect();
        }
        out
    }

    pub fn max_cells(&self, dim: usize) -> usize {
        (0..dim).map(|a| self.hi[a] - self.lo[a]).min().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub carving: CarvingConfig,
    pub region: Option<SweepRegion>,
    /// Qualification slack: `∫ ≤ d^{n−2} (1 + slack)`.
    pub slack: f64,
    /// Bisection levels after the dyadic bracket.
    pub refinements: usize,
    /// Period of the data in cells per axis (0 = not periodic); the sweep
    /// covers one period along periodic axes.
    #[serde(default)]
    pub period: Option<[usize; 3]>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            carving: CarvingConfig::default(),
            region: None,
            slack: 0.0,
            refinements: 2,
            period: None,
        }
    }
}

/// Per-edge summary of a sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterLevel {
    pub cells: usize,
    pub d: f64,
    pub cubes: usize,
    /// Cubes evaluated up to and including the first qualifying one.
    pub evaluated: usize,
    pub qualifying: Option<CubeWindow>,
    #[serde(with = "crate::serde_f64::option")]
    pub qualifying_integral: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterResult {
    /// `+inf` when the largest tested edge qualifies, `0` when none does.
    #[serde(with = "crate::serde_f64")]
    pub d: f64,
    pub bracketed: bool,
    pub achieving_cube: Option<CubeWindow>,
    pub witness: Option<CarvingRecord>,
    pub d_grid_tested: Vec<f64>,
    /// Largest edge tested; a lower bound for `D` when not bracketed.
    pub d_max: f64,
    pub sweep_stride: Vec<f64>,
    pub levels: Vec<DiameterLevel>,
}

impl DiameterResult {
    pub fn is_infinite(&self) -> bool {
        self.d.is_infinite()
    }
}

fn threshold(d: f64, dim: usize) -> f64 {
    d.powi(dim as i32 - 2)
}

/// `∫_Q V` by the trapezoid rule; `+inf` entries count as infinite.
fn potential_integral(problem: &Problem, cube: &CubeWindow) -> f64 {
    let lat = problem.lattice();
    let local = cube.local_lattice();
    let v = problem.v.values();
    let mut s = 0.0;
    for i in 0..local.len() {
        let g = cube.global_index(lat, i);
        let w = if problem.omega.contains(g) { v[g] } else { 0.0 };
        s += local.node_weight(i) * w;
    }
    s * local.cell_volume()
}

/// Sorted cubes of one edge length.
fn sweep_cubes(problem: &Problem, region: &SweepRegion, cells: usize, period: Option<&[usize; 3]>) -> Result<Vec<CubeWindow>> {
    let lat = problem.lattice();
    let stride = (cells / 2).max(1);
    let mut cubes: Vec<(f64, usize, CubeWindow)> = region
        .corners_within(lat.dim(), cells, stride, period)
        .into_iter()
        .enumerate()
        .map(|(k, c)| Ok((0.0, k, CubeWindow::new(lat, c, cells)?)))
        .collect::<Result<_>>()?;
    cubes
        .par_iter_mut()
        .for_each(|(key, _, c)| *key = potential_integral(problem, c));
    cubes.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
    Ok(cubes.into_iter().map(|(_, _, c)| c).collect())
}

struct LevelOutcome {
    level: DiameterLevel,
    witness: Option<JointResult>,
}

fn test_level(problem: &Problem, region: &SweepRegion, cells: usize, cfg: &SweepConfig) -> Result<LevelOutcome> {
    let h = problem.lattice().h();
    let d = cells as f64 * h;
    let bound = threshold(d, problem.dim()) * (1.0 + cfg.slack);
    let cubes = sweep_cubes(problem, region, cells, cfg.period.as_ref())?;
    let batch = rayon::current_num_threads().max(1);
    let mut evaluated = 0;
    for chunk in cubes.chunks(batch) {
        let results: Vec<Result<JointResult>> = chunk
            .par_iter()
            .map(|c| joint_min(&problem.cube(c)?, &cfg.carving))
            .collect();
        for (c, r) in chunk.iter().zip(results) {
            let r = r?;
            evaluated += 1;
            if r.best.feasible && r.best.integral <= bound {
                return Ok(LevelOutcome {
                    level: DiameterLevel {
                        cells,
                        d,
                        cubes: cubes.len(),
                        evaluated,
                        qualifying: Some(c.clone()),
                        qualifying_integral: Some(r.best.integral),
                    },
                    witness: Some(r),
                });
            }
        }
    }
    Ok(LevelOutcome {
        level: DiameterLevel {
            cells,
            d,
            cubes: cubes.len(),
            evaluated,
            qualifying: None,
            qualifying_integral: None,
        },
        witness: None,
    })
}

/// `cells` values `c, 2c, 4c, …` not exceeding `max`.
pub fn dyadic_grid(min_cells: usize, max_cells: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut c = min_cells.max(1);
    while c <= max_cells {
        out.push(c);
        c *= 2;
    }
    out
}

/// Capacitary interior diameter over the tested edges `grid` (in cells,
/// ascending), bisected between the largest qualifying and the next edge.
pub fn diameter(problem: &Problem, grid: &[usize], cfg: &SweepConfig) -> Result<DiameterResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty d grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] == 0 {
        return Err(Error::InvalidArgument("d grid must be ascending and positive".into()));
    }
    let lat = problem.lattice();
    let region = cfg.region.unwrap_or_else(|| SweepRegion::whole(lat));
    let h = lat.h();
    let mut outcomes: Vec<LevelOutcome> = Vec::new();
    for &c in grid {
        outcomes.push(test_level(problem, &region, c, cfg)?);
    }
    let best_idx = outcomes.iter().rposition(|o| o.witness.is_some());
    if let Some(k) = best_idx {
        if k + 1 < grid.len() {
            let (mut lo, mut hi) = (grid[k], grid[k + 1]);
            for _ in 0..cfg.refinements {
                if hi - lo <= 1 {
                    break;
                }
                let mid = lo + (hi - lo) / 2;
                let o = test_level(problem, &region, mid, cfg)?;
                if o.witness.is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                outcomes.push(o);
            }
        }
    }
    outcomes.sort_by_key(|o| o.level.cells);
    let d_max = grid.last().copied().unwrap_or(0) as f64 * h;
    let top_qualifies = outcomes.last().is_some_and(|o| o.witness.is_some());
    let best = outcomes.iter().rev().find(|o| o.witness.is_some());
    let (d, bracketed) = match best {
        None => (0.0, true),
        Some(_) if top_qualifies => (f64::INFINITY, false),
        Some(o) => (o.level.d, true),
    };
    Ok(DiameterResult {
        d,
        bracketed,
        achieving_cube: best.and_then(|o| o.level.qualifying.clone()),
        witness: best.and_then(|o| o.witness.as_ref().map(|w| w.best.record())),
        d_grid_tested: outcomes.iter().map(|o| o.level.d).collect(),
        d_max,
        sweep_stride: outcomes.iter().map(|o| (o.level.cells / 2).max(1) as f64 * h).collect(),
        levels: outcomes.into_iter().map(|o| o.level).collect(),
    })
}

/// [`diameter`] on `Ω ∖ B̄_R(center)`.
pub fn diameter_exterior(
    problem: &Problem,
    center: &[f64; 3],
    radius: f64,
    grid: &[usize],
    cfg: &SweepConfig,
) -> Result<DiameterResult> {
    let ext = problem.without_ball(center, radius);
    if ext.omega.count() == 0 {
        return Ok(DiameterResult {
            d: 0.0,
            bracketed: true,
            achieving_cube: None,
            witness: None,
            d_grid_tested: Vec::new(),
            d_max: grid.last().copied().unwrap_or(0) as f64 * problem.lattice().h(),
            sweep_stride: Vec::new(),
            levels: Vec::new(),
        });
    }
    diameter(&ext, grid, cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterLimit {
    pub radii: Vec<f64>,
    pub values: Vec<DiameterResult>,
    #[serde(with = "crate::serde_f64")]
    pub limit: f64,
    /// `D_R` is non-increasing along the radii.
    pub monotone: bool,
}

pub fn diameter_limit(
    problem: &Problem,
    center: &[f64; 3],
    radii: &[f64],
    grid: &[usize],
    cfg: &SweepConfig,
) -> Result<DiameterLimit> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be nonempty and ascending".into()));
    }
    let values = radii
        .iter()
        .map(|&r| diameter_exterior(problem, center, r, grid, cfg))
        .collect::<Result<Vec<_>>>()?;
    let monotone = values.windows(2).all(|w| w[1].d <= w[0].d);
    let limit = values.last().expect("nonempty").d;
    Ok(DiameterLimit {
        radii: radii.to_vec(),
        values,
        limit,
        monotone,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PositivityCertificate {
    pub d: f64,
    pub kappa: f64,
    pub worst_cube: CubeWindow,
    pub worst_value: f64,
    pub cubes: usize,
}

/// `κ = min_Q d^{−n} ∫_{Q∖F} Ṽ` over all swept cubes of `cells` cells.
pub fn positivity_scan(problem: &Problem, cells: usize, cfg: &SweepConfig) -> Result<PositivityCertificate> {
    let lat = problem.lattice();
    let region = cfg.region.unwrap_or_else(|| SweepRegion::whole(lat));
    let cubes = sweep_cubes(problem, &region, cells, cfg.period.as_ref())?;
    if cubes.is_empty() {
        return Err(Error::InvalidArgument(format!("no cube of {cells} cells fits the sweep region")));
    }
    let d = cells as f64 * lat.h();
    let scale = d.powi(-(lat.dim() as i32));
    let values: Vec<f64> = cubes
        .par_iter()
        .map(|c| Ok(joint_min(&problem.cube(c)?, &cfg.carving)?.best.integral * scale))
        .collect::<Result<_>>()?;
    let (k, &worst) = values
        .iter()
        .enumerate()
        .min_by(|p, q| p.1.total_cmp(q.1).then(p.0.cmp(&q.0)))
        .expect("nonempty");
    Ok(PositivityCertificate {
        d,
        kappa: worst,
        worst_cube: cubes[k].clone(),
        worst_value: worst,
        cubes: cubes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_are_symmetric_and_inside() {
        let r = SweepRegion {
            lo: [0, 0, 0],
            hi: [20, 20, 0],
        };
        let cs = r.corners(2, 6, 3);
        assert!(cs.contains(&[7, 7, 0]));
        for c in &cs {
            assert!(c[0] + 6 <= 20 && c[1] + 6 <= 20);
        }
        let xs: Vec<usize> = cs.iter().filter(|c| c[1] == 7).map(|c| c[0]).collect();
        assert_eq!(xs, vec![1, 4, 7, 10, 13]);
        assert!(r.corners(2, 21, 3).is_empty());
        let one = r.corners_within(2, 6, 3, Some(&[1, 0, 0]));
        assert!(one.iter().all(|c| c[0] == 0));
        assert_eq!(one.len(), 5);
    }

    #[test]
    fn dyadic() {
        assert_eq!(dyadic_grid(2, 20), vec![2, 4, 8, 16]);
    }
}

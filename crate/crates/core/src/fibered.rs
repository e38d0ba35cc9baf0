//! Operators whose magnetic potential is `(0, …, 0, a_n(x′))` and whose
//! potential is `V(x′)`: the bottom of the spectrum is `inf_μ λ_μ` over the
//! fiber operators `−Δ_{x′} + (μ + a_n)² + V` in one dimension less.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diameter::{diameter, DiameterResult, SweepConfig};
use crate::error::{Error, Result};
use crate::grid::{DomainMask, Lattice, ScalarField, VectorField};
use crate::problem::Problem;
use crate::spectrum::{bottom, EigenConfig, MagneticOperator};

#[derive(Clone, Debug)]
pub struct FiberedProblem {
    pub omega: DomainMask,
    pub a_fiber: ScalarField,
    pub v_fiber: ScalarField,
    pub mu_grid: Vec<f64>,
}

impl FiberedProblem {
    /// Uses the default μ grid: 64 points on `[−μmax, μmax]` with
    /// `μmax = max|a_n| + √max V + 3`.
    pub fn new(omega: DomainMask, a_fiber: ScalarField, v_fiber: ScalarField) -> Result<Self> {
        if omega.lattice() != a_fiber.lattice() || omega.lattice() != v_fiber.lattice() {
            return Err(Error::ShapeMismatch("fiber fields must share a lattice".into()));
        }
        let v_fiber = v_fiber.into_potential()?;
        let max_a = masked_max(&omega, a_fiber.values(), f64::abs);
        let max_v = masked_max(&omega, v_fiber.values(), |v| v);
        let mu_max = max_a + max_v.sqrt() + 3.0;
        Ok(Self {
            omega,
            a_fiber,
            v_fiber,
            mu_grid: uniform_grid(mu_max, 64),
        })
    }

    pub fn with_mu_grid(mut self, mu_grid: Vec<f64>) -> Result<Self> {
        if mu_grid.len() < 3 || mu_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("mu grid must be ascending with at least 3 points".into()));
        }
        self.mu_grid = mu_grid;
        Ok(self)
    }

    pub fn lattice(&self) -> &Lattice {
        self.omega.lattice()
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_grid.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// `V_μ = (μ + a_n)² + V` on the fiber lattice.
    pub fn fiber_potential(&self, mu: f64) -> ScalarField {
        let vals = self
            .a_fiber
            .values()
            .iter()
            .zip(self.v_fiber.values())
            .map(|(a, v)| (mu + a) * (mu + a) + v)
            .collect();
        ScalarField::new(self.lattice().clone(), vals).expect("same lattice")
    }

    /// Non-magnetic fiber problem at `μ`.
    pub fn fiber_problem(&self, mu: f64) -> Result<Problem> {
        let lat = self.lattice();
        Problem::new(self.omega.clone(), VectorField::zeros(lat), self.fiber_potential(mu))
    }

    /// The full operator on `Ω′ × (period circle)` with `length` cells of
    /// size `h` along the last axis.
    pub fn periodic_strip(&self, length: usize) -> Result<MagneticOperator> {
        let fl = self.lattice();
        let n = fl.dim() + 1;
        if n > 3 {
            return Err(Error::InvalidArgument("fiber lattice must have dimension ≤ 2".into()));
        }
        let mut shape = fl.shape().to_vec();
        shape.truncate(fl.dim());
        shape.push(length);
        let mut origin = fl.origin().to_vec();
        origin.truncate(fl.dim());
        origin.push(0.0);
        let mut lat = Lattice::new(&shape, fl.h(), &origin)?;
        for a in 0..fl.dim() {
            lat = lat.with_periodic(a, fl.is_periodic(a))?;
        }
        let lat = lat.with_periodic(n - 1, true)?;
        let fiber_of = |i: usize| {
            let m = lat.multi_index(i);
            let mut f = m;
            f[n - 1] = 0;
            fl.index(f)
        };
        let inside: Vec<bool> = (0..lat.len()).map(|i| self.omega.contains(fiber_of(i))).collect();
        let omega = DomainMask::new(lat.clone(), inside)?;
        let mut comps = vec![vec![0.0; lat.len()]; n];
        for (i, c) in comps[n - 1].iter_mut().enumerate() {
            *c = self.a_fiber.values()[fiber_of(i)];
        }
        let a = VectorField::new(lat.clone(), comps)?;
        let v = ScalarField::new(lat.clone(), (0..lat.len()).map(|i| self.v_fiber.values()[fiber_of(i)]).collect())?;
        MagneticOperator::new(&omega, &a, &v)
    }
}

fn masked_max(omega: &DomainMask, vals: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    vals.iter()
        .enumerate()
        .filter(|(i, v)| omega.contains(*i) && v.is_finite())
        .map(|(_, &v)| f(v))
        .fold(0.0, f64::max)
}

pub fn uniform_grid(mu_max: f64, points: usize) -> Vec<f64> {
    let k = points.max(2) - 1;
    (0..=k).map(|j| -mu_max + 2.0 * mu_max * j as f64 / k as f64).collect()
}

pub fn fiber_bottom(p: &FiberedProblem, mu: f64, cfg: &EigenConfig) -> Result<f64> {
    if !mu.is_finite() {
        return Err(Error::InvalidArgument("mu must be finite".into()));
    }
    let lat = p.lattice();
    let op = MagneticOperator::new(&p.omega, &VectorField::zeros(lat), &p.fiber_potential(mu))?;
    Ok(bottom(&op, cfg)?.lambda)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberCurve {
    pub mu: Vec<f64>,
    pub lambda_mu: Vec<f64>,
    pub minimizer: f64,
    pub lambda: f64,
    /// Points added by the golden-section refinement, in evaluation order.
    pub refined: Vec<(f64, f64)>,
}

impl FiberCurve {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mu", "lambda_mu"])?;
        let mut pts: Vec<(f64, f64)> = self.mu.iter().copied().zip(self.lambda_mu.iter().copied()).collect();
        pts.extend(&self.refined);
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (m, l) in pts {
            out.write_record([format!("{m}"), format!("{l}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

pub fn infimum_over_fibers(p: &FiberedProblem, cfg: &EigenConfig) -> Result<FiberCurve> {
    let lambda_mu = p
        .mu_grid
        .par_iter()
        .map(|&m| fiber_bottom(p, m, cfg))
        .collect::<Result<Vec<f64>>>()?;
    let len = lambda_mu.len();
    let (k, _) = lambda_mu
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("nonempty grid");
    if k == 0 || k + 1 == len || lambda_mu[0] <= lambda_mu[k] || lambda_mu[len - 1] <= lambda_mu[k] {
        return Err(Error::UnbracketedFiber { index: k, len });
    }
    let mut refined = Vec::new();
    let (mut a, mut b) = (p.mu_grid[k - 1], p.mu_grid[k + 1]);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = fiber_bottom(p, c, cfg)?;
    let mut fd = fiber_bottom(p, d, cfg)?;
    refined.push((c, fc));
    refined.push((d, fd));
    while b - a > 1e-3 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = fiber_bottom(p, c, cfg)?;
            refined.push((c, fc));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = fiber_bottom(p, d, cfg)?;
            refined.push((d, fd));
        }
    }
    let (mut minimizer, mut lambda) = (p.mu_grid[k], lambda_mu[k]);
    for &(m, l) in &refined {
        if l < lambda {
            minimizer = m;
            lambda = l;
        }
    }
    Ok(FiberCurve {
        mu: p.mu_grid.clone(),
        lambda_mu,
        minimizer,
        lambda,
        refined,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberedDiameter {
    pub mu: Vec<f64>,
    pub diameters: Vec<DiameterResult>,
    /// `sup_μ D(V_μ)`; `+inf` when some fiber is unbracketed.
    #[serde(with = "crate::serde_f64")]
    pub d_tilde: f64,
    pub argmax_mu: f64,
}

/// Fiber diameters are computed without a magnetic field in one dimension
/// less, at the μ values given.
pub fn fibered_diameter(p: &FiberedProblem, mus: &[f64], grid: &[usize], cfg: &SweepConfig) -> Result<FiberedDiameter> {
    if mus.is_empty() {
        return Err(Error::InvalidArgument("no mu values".into()));
    }
    let mut diameters = Vec::with_capacity(mus.len());
    for &m in mus {
        diameters.push(diameter(&p.fiber_problem(m)?, grid, cfg)?);
    }
    let (k, best) = diameters
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.d.total_cmp(&b.1.d).then(b.0.cmp(&a.0)))
        .expect("nonempty");
    Ok(FiberedDiameter {
        mu: mus.to_vec(),
        d_tilde: best.d,
        argmax_mu: mus[k],
        diameters,
    })
}

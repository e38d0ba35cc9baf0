//! Lattice magnetic Schrödinger operators and their low spectrum.
//!
//! The quadratic form is
//! `q(u) = Σ_e w_e |u_j e^{iθ_e} − u_i|² / h² + Σ_i m_i V_i |u_i|²`
//! with Peierls phases `θ_e = ∫_e a` and mass `Σ m_i |u_i|²`, so a gauge
//! change `a → a + ∇χ` is exactly a unitary conjugation. With Dirichlet
//! conditions nodes outside the domain and beyond the lattice faces are
//! frozen at zero and all weights are one; on a cube with free boundary the
//! weights are the trapezoid weights of the closed cube.

pub mod galerkin;
pub mod lanczos;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::CubeProblem;
use crate::grid::{DomainMask, Lattice, ScalarField, VectorField};
use lanczos::{default_shift, dense_eigenvalues, lowest_eigenpair, HermitianCsr, LanczosConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Dirichlet,
    NeumannCube,
}

#[derive(Clone, Debug)]
pub struct MagneticOperator {
    lattice: Lattice,
    inside: Vec<bool>,
    theta: Vec<Vec<f64>>,
    v: Vec<f64>,
    bc: Boundary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
    /// Counting switches to a dense solve at or below this many unknowns.
    pub dense_limit: usize,
    /// Upper limit on the number of eigenvalues deflated while counting.
    pub max_count: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_basis: 48,
            max_restarts: 30,
            seed: 0x5eed,
            dense_limit: 1024,
            max_count: 256,
        }
    }
}

impl EigenConfig {
    fn lanczos(&self) -> LanczosConfig {
        LanczosConfig {
            tol: self.tol,
            max_basis: self.max_basis,
            max_restarts: self.max_restarts,
            seed: self.seed,
            ..LanczosConfig::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub lambda: f64,
    /// Eigenvector on the whole lattice (zero on frozen nodes), unit mass.
    pub eigvec: Vec<Complex64>,
    pub lattice: Lattice,
    pub residual: f64,
    pub iterations: usize,
}

impl SpectralResult {
    /// `λ` lies within its own residual of zero.
    pub fn is_zero(&self) -> bool {
        self.lambda.abs() <= self.residual.max(1e-12 * (self.lattice.h().powi(-2)))
    }
}

/// Assembled operator restricted to its unknowns.
struct Assembled {
    csr: HermitianCsr,
    nodes: Vec<usize>,
    mass: Vec<f64>,
}

impl MagneticOperator {
    /// Dirichlet operator on `omega` with edge values of `a` and potential `v`.
    pub fn new(omega: &DomainMask, a: &VectorField, v: &ScalarField) -> Result<Self> {
        if omega.lattice() != a.lattice() || omega.lattice() != v.lattice() {
            return Err(Error::ShapeMismatch("Ω, a and V must share a lattice".into()));
        }
        let lat = omega.lattice().clone();
        let h = lat.h();
        let theta = (0..lat.dim())
            .map(|ax| a.component(ax).iter().map(|x| h * x).collect())
            .collect();
        Self::from_parts(lat, omega.inside().to_vec(), theta, v.values().to_vec(), Boundary::Dirichlet)
    }

    pub fn from_parts(
        lattice: Lattice,
        inside: Vec<bool>,
        theta: Vec<Vec<f64>>,
        v: Vec<f64>,
        bc: Boundary,
    ) -> Result<Self> {
        let n = lattice.len();
        if inside.len() != n || v.len() != n || theta.len() != lattice.dim() || theta.iter().any(|t| t.len() != n) {
            return Err(Error::ShapeMismatch("operator parts do not match the lattice".into()));
        }
        if v.iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(Error::InvalidArgument("potential must be nonnegative".into()));
        }
        if bc == Boundary::NeumannCube && (0..lattice.dim()).any(|a| lattice.is_periodic(a)) {
            return Err(Error::InvalidArgument("free-boundary operator needs a non-periodic cube".into()));
        }
        Ok(Self {
            lattice,
            inside,
            theta,
            v,
            bc,
        })
    }

    /// Free-boundary operator on a cube: natural conditions on `∂Q_d`,
    /// Dirichlet on the nodes outside Ω.
    pub fn neumann(prob: &CubeProblem) -> Result<Self> {
        let inside = prob.outside().iter().map(|b| !b).collect();
        Self::from_parts(
            prob.lattice().clone(),
            inside,
            prob.theta().to_vec(),
            prob.potential().to_vec(),
            Boundary::NeumannCube,
        )
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn potential(&self) -> &[f64] {
        &self.v
    }

    pub fn boundary(&self) -> Boundary {
        self.bc
    }

    /// Same operator on a smaller region `U` (nodes outside `U` frozen).
    pub fn restricted(&self, region: &[bool]) -> Result<Self> {
        if region.len() != self.lattice.len() {
            return Err(Error::ShapeMismatch("region does not match lattice".into()));
        }
        let inside = self.inside.iter().zip(region).map(|(a, b)| *a && *b).collect();
        Ok(Self {
            inside,
            ..self.clone()
        })
    }

    /// `Ω ∖ B̄_R(center)`.
    pub fn without_ball(&self, center: &[f64; 3], radius: f64) -> Self {
        let lat = &self.lattice;
        let inside = (0..lat.len())
            .map(|i| {
                let x = lat.coords(i);
                let r2: f64 = (0..lat.dim()).map(|a| (x[a] - center[a]).powi(2)).sum();
                self.inside[i] && r2 > radius * radius
            })
            .collect();
        Self {
            inside,
            ..self.clone()
        }
    }

    /// Same operator after `a → a + ∇χ`: phases shift by `χ_j − χ_i`.
    pub fn gauge_transformed(&self, chi: &[f64]) -> Result<Self> {
        let lat = &self.lattice;
        if chi.len() != lat.len() {
            return Err(Error::ShapeMismatch("gauge function does not match lattice".into()));
        }
        let mut theta = self.theta.clone();
        for (a, t) in theta.iter_mut().enumerate() {
            for (i, ti) in t.iter_mut().enumerate() {
                if let Some(j) = lat.neighbor(i, a, true) {
                    *ti += chi[j] - chi[i];
                }
            }
        }
        Ok(Self { theta, ..self.clone() })
    }

    /// Same operator with `a = 0`.
    pub fn without_field(&self) -> Self {
        Self {
            theta: vec![vec![0.0; self.lattice.len()]; self.lattice.dim()],
            ..self.clone()
        }
    }

    pub fn unknowns(&self) -> usize {
        self.active().count()
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.lattice.len()).filter(|&i| self.inside[i] && self.v[i].is_finite())
    }

    fn weights(&self, i: usize, axis: usize) -> f64 {
        match self.bc {
            Boundary::Dirichlet => 1.0,
            Boundary::NeumannCube => self.lattice.edge_weight(i, axis),
        }
    }

    fn mass(&self, i: usize) -> f64 {
        match self.bc {
            Boundary::Dirichlet => 1.0,
            Boundary::NeumannCube => self.lattice.node_weight(i),
        }
    }

    /// `M^{-1/2} A M^{-1/2}` on the active nodes.
    fn assemble(&self) -> Assembled {
        let lat = &self.lattice;
        let h2 = lat.h() * lat.h();
        let nodes: Vec<usize> = self.active().collect();
        let mut map = vec![usize::MAX; lat.len()];
        for (k, &i) in nodes.iter().enumerate() {
            map[i] = k;
        }
        let mass: Vec<f64> = nodes.iter().map(|&i| self.mass(i)).collect();
        let mut rows: Vec<Vec<(usize, Complex64)>> = nodes
            .iter()
            .map(|&i| vec![(map[i], Complex64::new(self.v[i], 0.0))])
            .collect();
        let add_diag = |k: usize, x: f64, rows: &mut Vec<Vec<(usize, Complex64)>>| {
            rows[k][0].1 += Complex64::new(x, 0.0);
        };
        for (k, &i) in nodes.iter().enumerate() {
            for a in 0..lat.dim() {
                match lat.neighbor(i, a, true) {
                    Some(j) => {
                        let w = self.weights(i, a) / h2;
                        add_diag(k, w / mass[k], &mut rows);
                        let l = map[j];
                        if l != usize::MAX {
                            let e = Complex64::from_polar(1.0, self.theta[a][i]);
                            let c = -w * e / (mass[k] * mass[l]).sqrt();
                            rows[k].push((l, c));
                            rows[l].push((k, c.conj()));
                        }
                    }
                    None => {
                        if self.bc == Boundary::Dirichlet {
                            add_diag(k, 1.0 / h2, &mut rows);
                        }
                    }
                }
                match lat.neighbor(i, a, false) {
                    Some(j) => {
                        // the edge (j, i) is handled from j when j is active
                        let w = self.weights(j, a) / h2;
                        add_diag(k, w / mass[k], &mut rows);
                    }
                    None => {
                        if self.bc == Boundary::Dirichlet {
                            add_diag(k, 1.0 / h2, &mut rows);
                        }
                    }
                }
            }
        }
        Assembled {
            csr: HermitianCsr::from_rows(rows),
            nodes,
            mass,
        }
    }

    /// `q(u) / ‖u‖²` for a lattice function (frozen nodes ignored).
    pub fn rayleigh_quotient(&self, u: &[Complex64]) -> f64 {
        let asm = self.assemble();
        let x: Vec<Complex64> = asm
            .nodes
            .iter()
            .zip(&asm.mass)
            .map(|(&i, &m)| u[i] * m.sqrt())
            .collect();
        asm.csr.rayleigh(&x)
    }
}

/// Smallest eigenvalue of the operator on its active nodes.
pub fn bottom(op: &MagneticOperator, cfg: &EigenConfig) -> Result<SpectralResult> {
    let asm = op.assemble();
    if asm.nodes.is_empty() {
        return Err(Error::InvalidArgument("region has no interior node".into()));
    }
    let sigma = default_shift(&asm.csr);
    let ep = lowest_eigenpair(&asm.csr, &[], sigma, &cfg.lanczos())?;
    let mut eigvec = vec![Complex64::new(0.0, 0.0); op.lattice.len()];
    for ((&i, &m), x) in asm.nodes.iter().zip(&asm.mass).zip(&ep.vector) {
        eigvec[i] = x / m.sqrt();
    }
    Ok(SpectralResult {
        lambda: ep.value,
        eigvec,
        lattice: op.lattice.clone(),
        residual: ep.residual,
        iterations: ep.iterations,
    })
}

/// Bottom of the free-boundary spectrum on a cube.
pub fn neumann_bottom(prob: &CubeProblem, cfg: &EigenConfig) -> Result<SpectralResult> {
    bottom(&MagneticOperator::neumann(prob)?, cfg)
}

/// Number of eigenvalues strictly below `lambda`.
pub fn counting(op: &MagneticOperator, lambda: f64, cfg: &EigenConfig) -> Result<usize> {
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    if lambda <= 0.0 {
        return Ok(0);
    }
    let asm = op.assemble();
    let n = asm.nodes.len();
    if n == 0 {
        return Ok(0);
    }
    if n <= cfg.dense_limit {
        let vals = dense_eigenvalues(&asm.csr);
        let guard = 1e-10 * vals.last().map_or(1.0, |v| v.abs().max(1.0));
        if let Some(e) = vals.iter().find(|e| (*e - lambda).abs() <= guard) {
            return Err(Error::AmbiguousCount {
                eigenvalue: *e,
                residual: guard,
                threshold: lambda,
            });
        }
        return Ok(vals.iter().filter(|&&e| e < lambda).count());
    }
    let sigma = default_shift(&asm.csr);
    let lcfg = cfg.lanczos();
    let mut found: Vec<Vec<Complex64>> = Vec::new();
    loop {
        if found.len() >= n {
            return Ok(found.len());
        }
        if found.len() >= cfg.max_count {
            return Err(Error::InvalidArgument(format!(
                "more than {} eigenvalues below {lambda}",
                cfg.max_count
            )));
        }
        let ep = lowest_eigenpair(&asm.csr, &found, sigma, &lcfg)?;
        if (ep.value - lambda).abs() <= ep.residual {
            return Err(Error::AmbiguousCount {
                eigenvalue: ep.value,
                residual: ep.residual,
                threshold: lambda,
            });
        }
        if ep.value > lambda {
            return Ok(found.len());
        }
        found.push(ep.vector);
    }
}

/// `λ(Ω ∖ B̄_R)` for ascending radii.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerssonResult {
    pub radii: Vec<f64>,
    #[serde(with = "crate::serde_f64::vec")]
    pub values: Vec<f64>,
    #[serde(with = "crate::serde_f64")]
    pub limit: f64,
    pub monotone: bool,
    /// Relative change over the last two radii is at most 1%.
    pub plateaued: bool,
}

pub fn persson_limit(op: &MagneticOperator, center: &[f64; 3], radii: &[f64], cfg: &EigenConfig) -> Result<PerssonResult> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be nonempty and ascending".into()));
    }
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let sub = op.without_ball(center, r);
        let v = if sub.unknowns() == 0 {
            f64::INFINITY
        } else {
            bottom(&sub, cfg)?.lambda
        };
        values.push(v);
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    let limit = *values.last().expect("nonempty");
    let plateaued = match values.len() {
        0 | 1 => false,
        k => {
            let (a, b) = (values[k - 2], values[k - 1]);
            (a.is_infinite() && b.is_infinite()) || (b - a).abs() <= 0.01 * b.abs()
        }
    };
    Ok(PerssonResult {
        radii: radii.to_vec(),
        values,
        limit,
        monotone,
        plateaued,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square(cells: usize) -> (Lattice, DomainMask) {
        let lat = Lattice::new(&[cells + 1, cells + 1], 1.0 / cells as f64, &[0.0, 0.0]).unwrap();
        let om = DomainMask::interior_of(&lat, |x| x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0);
        (lat, om)
    }

    #[test]
    fn dirichlet_square_matches_lattice_formula() {
        let n = 32;
        let (lat, om) = square(n);
        let op = MagneticOperator::new(&om, &VectorField::zeros(&lat), &ScalarField::zeros(&lat)).unwrap();
        let r = bottom(&op, &EigenConfig::default()).unwrap();
        let h = 1.0 / n as f64;
        let exact = 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!((r.lambda - exact).abs() < 1e-8 * exact, "{} vs {exact}", r.lambda);
        assert!(r.residual <= 1e-7 * (r.lambda + 1.0) * 1e3);
    }

    #[test]
    fn counting_dense_and_sparse_agree() {
        let (lat, om) = square(24);
        let op = MagneticOperator::new(&om, &VectorField::zeros(&lat), &ScalarField::zeros(&lat)).unwrap();
        let dense = counting(&op, 60.0, &EigenConfig::default()).unwrap();
        let sparse = counting(&op, 60.0, &EigenConfig { dense_limit: 0, ..Default::default() }).unwrap();
        assert_eq!(dense, 3);
        assert_eq!(sparse, 3);
        assert_eq!(counting(&op, 0.0, &EigenConfig::default()).unwrap(), 0);
    }

    #[test]
    fn free_boundary_constants() {
        let lat = Lattice::new(&[9, 9], 0.125, &[0.0, 0.0]).unwrap();
        let cube = crate::grid::CubeWindow::whole(&lat).unwrap();
        for c in [0.0, 2.5] {
            let prob = CubeProblem::from_parts(&cube, vec![vec![0.0; 81]; 2], vec![c; 81], vec![false; 81]).unwrap();
            let r = neumann_bottom(&prob, &EigenConfig::default()).unwrap();
            assert!((r.lambda - c).abs() < 1e-9, "{} vs {c}", r.lambda);
        }
    }

    #[test]
    fn rayleigh_quotient_of_eigvec() {
        let (lat, om) = square(16);
        let a = VectorField::from_edge_fn(&lat, |x, ax| if ax == 0 { -x[1] } else { x[0] });
        let op = MagneticOperator::new(&om, &a, &ScalarField::zeros(&lat)).unwrap();
        let r = bottom(&op, &EigenConfig::default()).unwrap();
        let q = op.rayleigh_quotient(&r.eigvec);
        assert!((q - r.lambda).abs() <= 1e-12 * r.lambda + r.residual * r.residual);
    }
}

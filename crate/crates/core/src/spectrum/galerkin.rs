//! Conforming bilinear finite elements for the continuum form
//! `∫ |∇u + i a u|² + V|u|²` on a planar lattice domain, with `u = 0` off
//! the interior nodes.
//!
//! Every Ritz value computed in this space bounds the Dirichlet bottom of
//! the continuum operator from above, so unlike the lattice form the error
//! has a known sign. Element integrals use 3×3 Gauss points, which is exact
//! for `a` affine and `V` quadratic.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lanczos::{cdot, cnorm, shifted_cg, HermitianCsr};
use super::{EigenConfig, SpectralResult};
use crate::error::{Error, Result};
use crate::grid::{DomainMask, Lattice};

const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

pub struct GalerkinOperator {
    lattice: Lattice,
    nodes: Vec<usize>,
    k: HermitianCsr,
    m: HermitianCsr,
    /// `K + σM`, same pattern as `K`.
    shifted: HermitianCsr,
    sigma: f64,
}

impl GalerkinOperator {
    /// `a` and `V` are evaluated at quadrature points inside each cell.
    pub fn new(
        omega: &DomainMask,
        a: impl Fn(&[f64; 3]) -> [f64; 2],
        v: impl Fn(&[f64; 3]) -> f64,
    ) -> Result<Self> {
        let lat = omega.lattice().clone();
        if lat.dim() != 2 || lat.is_periodic(0) || lat.is_periodic(1) {
            return Err(Error::InvalidArgument("finite elements need a planar non-periodic lattice".into()));
        }
        let mut slot = vec![usize::MAX; lat.len()];
        let nodes: Vec<usize> = (0..lat.len()).filter(|&i| omega.contains(i)).collect();
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("region has no interior node".into()));
        }
        for (k, &i) in nodes.iter().enumerate() {
            slot[i] = k;
        }
        let h = lat.h();
        let n = nodes.len();
        let mut krows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        let mut mrows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
        let (nx, ny) = (lat.extent(0), lat.extent(1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corners = [
                    lat.index([i, j, 0]),
                    lat.index([i + 1, j, 0]),
                    lat.index([i, j + 1, 0]),
                    lat.index([i + 1, j + 1, 0]),
                ];
                if corners.iter().all(|&c| slot[c] == usize::MAX) {
                    continue;
                }
                let (ke, me) = element(&lat.coords(corners[0]), h, &a, &v);
                for (p, &cp) in corners.iter().enumerate() {
                    let sp = slot[cp];
                    if sp == usize::MAX {
                        continue;
                    }
                    for (q, &cq) in corners.iter().enumerate() {
                        let sq = slot[cq];
                        if sq == usize::MAX {
                            continue;
                        }
                        krows[sp].push((sq, ke[p][q]));
                        mrows[sp].push((sq, Complex64::new(me[p][q], 0.0)));
                    }
                }
            }
        }
        let k = HermitianCsr::from_rows(krows.clone());
        let m = HermitianCsr::from_rows(mrows.clone());
        let kd = k.diagonal();
        let md = m.diagonal();
        let sigma = 1e-3 * kd.iter().zip(&md).map(|(a, b)| a / b).fold(0.0, f64::max);
        let srows = krows
            .into_iter()
            .zip(mrows)
            .map(|(mut kr, mr)| {
                kr.extend(mr.into_iter().map(|(c, x)| (c, x * sigma)));
                kr
            })
            .collect();
        Ok(Self {
            lattice: lat,
            nodes,
            k,
            m,
            shifted: HermitianCsr::from_rows(srows),
            sigma,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    /// `q(u) / ‖u‖²` for nodal values on the whole lattice.
    pub fn rayleigh_quotient(&self, u: &[Complex64]) -> f64 {
        let x: Vec<Complex64> = self.nodes.iter().map(|&i| u[i]).collect();
        self.ratio(&x)
    }

    fn ratio(&self, x: &[Complex64]) -> f64 {
        form(&self.k, x) / form(&self.m, x)
    }
}

fn form(a: &HermitianCsr, x: &[Complex64]) -> f64 {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    a.apply(x, &mut y);
    cdot(x, &y).re
}

/// Element stiffness and mass of the cell with lower corner `x0`, corner
/// order `(0,0), (1,0), (0,1), (1,1)`.
fn element(
    x0: &[f64; 3],
    h: f64,
    a: &impl Fn(&[f64; 3]) -> [f64; 2],
    v: &impl Fn(&[f64; 3]) -> f64,
) -> ([[Complex64; 4]; 4], [[f64; 4]; 4]) {
    let mut ke = [[Complex64::new(0.0, 0.0); 4]; 4];
    let mut me = [[0.0; 4]; 4];
    for &(gx, wx) in &GAUSS {
        for &(gy, wy) in &GAUSS {
            let (s, t) = (0.5 * (gx + 1.0), 0.5 * (gy + 1.0));
            let w = wx * wy * 0.25 * h * h;
            let x = [x0[0] + s * h, x0[1] + t * h, 0.0];
            let phi = [(1.0 - s) * (1.0 - t), s * (1.0 - t), (1.0 - s) * t, s * t];
            let grad = [
                [-(1.0 - t) / h, -(1.0 - s) / h],
                [(1.0 - t) / h, -s / h],
                [-t / h, (1.0 - s) / h],
                [t / h, s / h],
            ];
            let av = a(&x);
            let a2 = av[0] * av[0] + av[1] * av[1];
            let vv = v(&x);
            for p in 0..4 {
                let adp = av[0] * grad[p][0] + av[1] * grad[p][1];
                for q in 0..4 {
                    let adq = av[0] * grad[q][0] + av[1] * grad[q][1];
                    let re = grad[p][0] * grad[q][0] + grad[p][1] * grad[q][1] + (a2 + vv) * phi[p] * phi[q];
                    let im = phi[q] * adp - phi[p] * adq;
                    ke[p][q] += Complex64::new(re, im) * w;
                    me[p][q] += phi[p] * phi[q] * w;
                }
            }
        }
    }
    (ke, me)
}

/// Lowest Ritz value by locally optimal preconditioned iteration in the
/// `M` inner product, preconditioned by `(K + σM)⁻¹`. `start` is an
/// optional full-lattice initial vector.
pub fn galerkin_bottom(op: &GalerkinOperator, start: Option<&[Complex64]>, cfg: &EigenConfig) -> Result<SpectralResult> {
    let n = op.nodes.len();
    let mut x: Vec<Complex64> = match start {
        Some(s) if s.len() == op.lattice.len() => op.nodes.iter().map(|&i| s[i]).collect(),
        Some(_) => return Err(Error::ShapeMismatch("start vector does not match the lattice".into())),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..n)
                .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect()
        }
    };
    if cnorm(&x) == 0.0 {
        return Err(Error::InvalidArgument("zero start vector".into()));
    }
    let inv_diag: Vec<f64> = op.shifted.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut prev: Option<Vec<Complex64>> = None;
    let mut lambda = op.ratio(&x);
    let mut residual = f64::INFINITY;
    let max_iter = cfg.max_restarts * cfg.max_basis;
    let mut kx = vec![Complex64::new(0.0, 0.0); n];
    let mut mx = vec![Complex64::new(0.0, 0.0); n];
    for it in 0..max_iter {
        op.k.apply(&x, &mut kx);
        op.m.apply(&x, &mut mx);
        let mnorm = cdot(&x, &mx).re.sqrt();
        let r: Vec<Complex64> = kx.iter().zip(&mx).map(|(k, m)| (k - lambda * m) / mnorm).collect();
        residual = cnorm(&r) / (cnorm(&mx) / mnorm);
        if residual <= cfg.tol * (lambda.abs() + op.sigma) {
            return Ok(finish(op, x, lambda, residual, it));
        }
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        shifted_cg(&op.shifted, 0.0, &inv_diag, &r, &mut w, 1e-6, 10 * n)?;
        let mut basis = vec![x.clone(), w];
        if let Some(p) = prev.take() {
            basis.push(p);
        }
        let basis = m_orthonormal(&op.m, basis);
        let k = basis.len();
        let mut kb = DMatrix::<Complex64>::zeros(k, k);
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..k {
            op.k.apply(&basis[j], &mut y);
            for i in 0..k {
                kb[(i, j)] = cdot(&basis[i], &y);
            }
        }
        let kb = (&kb + kb.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(kb);
        let (jmin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty basis");
        let c = eig.eigenvectors.column(jmin);
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for (j, b) in basis.iter().enumerate() {
            for (nv, bv) in next.iter_mut().zip(b) {
                *nv += c[j] * bv;
            }
        }
        prev = Some(std::mem::replace(&mut x, next));
        lambda = op.ratio(&x);
    }
    Err(Error::EigenNotConverged {
        rayleigh: lambda,
        residual,
    })
}

/// Gram–Schmidt in the `M` inner product, dropping dependent vectors.
fn m_orthonormal(m: &HermitianCsr, vs: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let mut out: Vec<Vec<Complex64>> = Vec::new();
    let mut mv = vec![Complex64::new(0.0, 0.0); vs[0].len()];
    for mut v in vs {
        for _ in 0..2 {
            for u in &out {
                m.apply(u, &mut mv);
                let c = cdot(&mv, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
        }
        let nrm = form(m, &v).max(0.0).sqrt();
        if nrm > 1e-10 * cnorm(&v).max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|x| *x /= nrm);
            out.push(v);
        }
    }
    out
}

fn finish(op: &GalerkinOperator, x: Vec<Complex64>, lambda: f64, residual: f64, iterations: usize) -> SpectralResult {
    let nrm = form(&op.m, &x).sqrt();
    let mut eigvec = vec![Complex64::new(0.0, 0.0); op.lattice.len()];
    for (&i, v) in op.nodes.iter().zip(&x) {
        eigvec[i] = v / nrm;
    }
    SpectralResult {
        lambda,
        eigvec,
        lattice: op.lattice.clone(),
        residual,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square(cells: usize) -> DomainMask {
        let lat = Lattice::new(&[cells + 1, cells + 1], 1.0 / cells as f64, &[0.0, 0.0]).unwrap();
        DomainMask::interior_of(&lat, |x| x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0)
    }

    #[test]
    fn square_converges_from_above() {
        let cfg = EigenConfig::default();
        let mut last = f64::INFINITY;
        for cells in [8, 16, 32] {
            let op = GalerkinOperator::new(&square(cells), |_| [0.0, 0.0], |_| 0.0).unwrap();
            let l = galerkin_bottom(&op, None, &cfg).unwrap().lambda;
            assert!(l > 2.0 * PI * PI && l < last, "{l}");
            last = l;
        }
        assert!(last - 2.0 * PI * PI < 0.01 * 2.0 * PI * PI);
    }

    #[test]
    fn matches_dense_generalized_problem() {
        let om = square(6);
        let op = GalerkinOperator::new(&om, |x| [-0.8 * x[1], 0.8 * x[0]], |x| x[0]).unwrap();
        let k = op.k.to_dense();
        let m = op.m.to_dense().map(|z| z.re);
        let chol = nalgebra::Cholesky::new(m).unwrap();
        let linv = chol.l().try_inverse().unwrap().map(|x| Complex64::new(x, 0.0));
        let sym = &linv * k * linv.adjoint();
        let eig = nalgebra::SymmetricEigen::new(sym);
        let exact = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let got = galerkin_bottom(&op, None, &EigenConfig::default()).unwrap().lambda;
        assert!((got - exact).abs() < 1e-8 * exact, "{got} vs {exact}");
    }
}

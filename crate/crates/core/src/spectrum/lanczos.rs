//! Sparse Hermitian kernels: CSR storage, preconditioned conjugate gradient
//! and a shift-invert Krylov eigensolver for the lowest eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

pub fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let parts: Vec<Complex64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum())
        .collect();
    parts.into_iter().sum()
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|x| x.iter().map(|p| p.norm_sqr()).sum())
        .collect();
    parts.into_iter().sum::<f64>().sqrt()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn scale(alpha: f64, x: &mut [Complex64]) {
    x.par_iter_mut().for_each(|xi| *xi *= alpha);
}

/// Hermitian matrix in compressed rows; duplicate entries add up.
#[derive(Clone, Debug)]
pub struct HermitianCsr {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<Complex64>,
}

impl HermitianCsr {
    /// From per-row `(column, value)` lists. The caller guarantees
    /// Hermitian symmetry.
    pub fn from_rows(rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(|r| r.len()).sum();
        let mut col = Vec::with_capacity(nnz);
        let mut val = Vec::with_capacity(nnz);
        for r in rows {
            for (c, v) in r {
                col.push(c);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Self { n, row_ptr, col, val }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.par_iter_mut().enumerate().with_min_len(1024).for_each(|(i, yi)| {
            let mut s = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .filter(|&k| self.col[k] == i)
                    .map(|k| self.val[k].re)
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[k])] += self.val[k];
            }
        }
        m
    }

    pub fn rayleigh(&self, u: &[Complex64]) -> f64 {
        let mut hu = vec![Complex64::new(0.0, 0.0); self.n];
        self.apply(u, &mut hu);
        cdot(u, &hu).re / cdot(u, u).re
    }

    /// `‖H u − λ u‖ / ‖u‖`.
    pub fn residual(&self, u: &[Complex64], lambda: f64) -> f64 {
        let mut hu = vec![Complex64::new(0.0, 0.0); self.n];
        self.apply(u, &mut hu);
        axpy(Complex64::new(-lambda, 0.0), u, &mut hu);
        cnorm(&hu) / cnorm(u)
    }
}

/// Jacobi-preconditioned CG for `(H + σ) x = b`; `x` holds the start.
pub fn shifted_cg(
    h: &HermitianCsr,
    sigma: f64,
    inv_diag: &[f64],
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = h.len();
    let bnorm = cnorm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(0);
    }
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    h.apply(x, &mut r);
    r.par_iter_mut()
        .zip(b.par_iter().zip(x.par_iter()))
        .for_each(|(ri, (bi, xi))| *ri = bi - *ri - sigma * xi);
    let mut z: Vec<Complex64> = r.iter().zip(inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = cdot(&r, &z).re;
    let mut q = vec![Complex64::new(0.0, 0.0); n];
    for it in 0..max_iter {
        if cnorm(&r) <= tol * bnorm {
            return Ok(it);
        }
        h.apply(&p, &mut q);
        axpy(Complex64::new(sigma, 0.0), &p, &mut q);
        let alpha = rz / cdot(&p, &q).re;
        axpy(Complex64::new(alpha, 0.0), &p, x);
        axpy(Complex64::new(-alpha, 0.0), &q, &mut r);
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(zi, (ri, d))| *zi = ri * d);
        let rz_new = cdot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let res = cnorm(&r) / bnorm;
    if res <= tol {
        Ok(max_iter)
    } else {
        Err(Error::CgNotConverged {
            iterations: max_iter,
            residual: res,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LanczosConfig {
    pub tol: f64,
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Ritz vectors retained across a restart.
    pub keep: usize,
    pub inner_tol: f64,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_basis: 48,
            max_restarts: 30,
            keep: 12,
            inner_tol: 1e-12,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    /// `‖H u − λ u‖` for unit `u`.
    pub residual: f64,
    /// Outer Lanczos steps.
    pub iterations: usize,
}

fn orthogonalize(w: &mut [Complex64], basis: &[Vec<Complex64>]) {
    for _ in 0..2 {
        for v in basis {
            let c = cdot(v, w);
            axpy(-c, v, w);
        }
    }
}

/// Default shift: a thousandth of the largest diagonal entry, which keeps
/// `H + σ` definite when `H` is only semidefinite.
pub fn default_shift(h: &HermitianCsr) -> f64 {
    let d = h.diagonal();
    1e-3 * d.iter().cloned().fold(0.0, f64::max).max(1e-300)
}

/// Lowest eigenpair of `h` on the orthogonal complement of `deflate`.
///
/// Krylov subspace of `(H + σ)^{-1}` with full reorthogonalisation and
/// Rayleigh–Ritz extraction; on restart the `keep` leading Ritz vectors
/// are retained (thick restart), which resolves clustered bottoms.
pub fn lowest_eigenpair(
    h: &HermitianCsr,
    deflate: &[Vec<Complex64>],
    sigma: f64,
    cfg: &LanczosConfig,
) -> Result<Eigenpair> {
    let n = h.len();
    if n == 0 {
        return Err(Error::InvalidArgument("operator has no unknowns".into()));
    }
    if deflate.len() >= n {
        return Err(Error::InvalidArgument("nothing left after deflation".into()));
    }
    let zero = Complex64::new(0.0, 0.0);
    let diag = h.diagonal();
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / (d + sigma)).collect();
    // a fresh start per deflation level: the previous start has no component
    // left in a degenerate eigenspace once its projection is deflated
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(deflate.len() as u64));
    let mut next: Vec<Complex64> = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    orthogonalize(&mut next, deflate);
    let limit = cfg.max_basis.max(2).min(n - deflate.len());
    let keep = cfg.keep.clamp(1, limit.saturating_sub(1).max(1));
    let inner_max = 20 * n + 100;

    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(limit);
    let mut images: Vec<Vec<Complex64>> = Vec::with_capacity(limit);
    let mut g = DMatrix::<Complex64>::zeros(0, 0);
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut steps = 0usize;
    let mut restarts = 0usize;
    let mut ritz = vec![zero; n];
    loop {
        let nrm = cnorm(&next);
        if nrm == 0.0 || !nrm.is_finite() {
            break;
        }
        scale(1.0 / nrm, &mut next);
        let mut w = vec![zero; n];
        shifted_cg(h, sigma, &inv_diag, &next, &mut w, cfg.inner_tol, inner_max)?;
        steps += 1;
        orthogonalize(&mut w, deflate);
        let m = basis.len();
        let mut grown = DMatrix::<Complex64>::zeros(m + 1, m + 1);
        grown.view_mut((0, 0), (m, m)).copy_from(&g);
        for (i, v) in basis.iter().chain(std::iter::once(&next)).enumerate() {
            let c = cdot(v, &w);
            grown[(i, m)] = c;
            grown[(m, i)] = c.conj();
        }
        grown[(m, m)] = Complex64::new(grown[(m, m)].re, 0.0);
        g = grown;
        basis.push(std::mem::take(&mut next));
        images.push(w);

        let eig = SymmetricEigen::new(g.clone());
        let mut order: Vec<usize> = (0..basis.len()).collect();
        order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
        let s = eig.eigenvectors.column(order[0]).into_owned();
        ritz.iter_mut().for_each(|v| *v = zero);
        for (i, v) in basis.iter().enumerate() {
            axpy(s[i], v, &mut ritz);
        }
        orthogonalize(&mut ritz, deflate);
        let un = cnorm(&ritz);
        scale(1.0 / un, &mut ritz);
        let lambda = h.rayleigh(&ritz);
        let res = h.residual(&ritz, lambda);
        if res < best.1 {
            best = (lambda, res);
        }
        if res <= cfg.tol * (lambda.abs() + sigma) {
            return Ok(Eigenpair {
                value: lambda,
                vector: ritz,
                residual: res,
                iterations: steps,
            });
        }

        // Krylov direction: the newest image, orthogonalised
        let mut cand = images.last().expect("nonempty").clone();
        orthogonalize(&mut cand, deflate);
        orthogonalize(&mut cand, &basis);
        let exhausted = cnorm(&cand) <= 1e-12 * cnorm(images.last().expect("nonempty"));
        if basis.len() >= limit || exhausted {
            if restarts >= cfg.max_restarts || (exhausted && basis.len() < limit) {
                break;
            }
            restarts += 1;
            // keep the leading Ritz pairs; images follow by linearity
            let k = keep.min(basis.len());
            let mut nb = Vec::with_capacity(limit);
            let mut ni = Vec::with_capacity(limit);
            for &col in &order[..k] {
                let sc = eig.eigenvectors.column(col);
                let mut y = vec![zero; n];
                let mut ty = vec![zero; n];
                for i in 0..basis.len() {
                    axpy(sc[i], &basis[i], &mut y);
                    axpy(sc[i], &images[i], &mut ty);
                }
                nb.push(y);
                ni.push(ty);
            }
            // residual of the leading pair continues the subspace
            let theta = eig.eigenvalues[order[0]];
            let mut r = ni[0].clone();
            axpy(Complex64::new(-theta, 0.0), &nb[0], &mut r);
            basis = nb;
            images = ni;
            g = DMatrix::<Complex64>::zeros(k, k);
            for (a, &col) in order[..k].iter().enumerate() {
                g[(a, a)] = Complex64::new(eig.eigenvalues[col], 0.0);
            }
            orthogonalize(&mut r, deflate);
            orthogonalize(&mut r, &basis);
            cand = r;
        }
        next = cand;
    }
    Err(Error::EigenNotConverged {
        rayleigh: best.0,
        residual: best.1,
    })
}

/// All eigenvalues of a small Hermitian matrix, ascending.
pub fn dense_eigenvalues(h: &HermitianCsr) -> Vec<f64> {
    let eig = SymmetricEigen::new(h.to_dense());
    let mut v: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}

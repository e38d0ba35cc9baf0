//! Matrix-free weighted graph Laplacians on lattices and a preconditioned
//! conjugate-gradient solver.
//!
//! Reductions are summed over fixed-size chunks and then folded in chunk
//! order, so results do not depend on the size of the rayon pool.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Lattice;

const CHUNK: usize = 4096;

/// Dot product, deterministic under any thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// `L x` restricted to the free nodes of a lattice, where
/// `(L x)_i = sum over edges e = {i, j} of w_e (x_i - x_j)`.
///
/// Fixed (non-free) nodes act as zero Dirichlet data: callers move their
/// actual values into the right-hand side.
#[derive(Clone, Debug)]
pub struct EdgeLaplacian {
    lattice: Lattice,
    /// `weights[a][i]` weighs the edge `(i, i + e_a)`; `None` means unit weights.
    weights: Option<Vec<Vec<f64>>>,
    free: Vec<bool>,
}

impl EdgeLaplacian {
    pub fn unit(lattice: &Lattice, free: Vec<bool>) -> Self {
        Self {
            lattice: lattice.clone(),
            weights: None,
            free,
        }
    }

    pub fn weighted(lattice: &Lattice, weights: Vec<Vec<f64>>, free: Vec<bool>) -> Self {
        Self {
            lattice: lattice.clone(),
            weights: Some(weights),
            free,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn free(&self) -> &[bool] {
        &self.free
    }

    #[inline]
    fn weight(&self, axis: usize, i: usize) -> f64 {
        match &self.weights {
            None => 1.0,
            Some(w) => w[axis][i],
        }
    }

    /// Sum of the weights of all edges incident to each node.
    pub fn diagonal(&self) -> Vec<f64> {
        let lat = &self.lattice;
        (0..lat.len())
            .map(|i| {
                let mut s = 0.0;
                for a in 0..lat.dim() {
                    if lat.neighbor(i, a, true).is_some() {
                        s += self.weight(a, i);
                    }
                    if let Some(j) = lat.neighbor(i, a, false) {
                        s += self.weight(a, j);
                    }
                }
                s
            })
            .collect()
    }

    /// `y = L x` on free nodes, zero elsewhere. `x` must vanish off the free set.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let lat = &self.lattice;
        let nx = lat.extent(0);
        let ny = lat.extent(1);
        let nz = lat.extent(2);
        let dim = lat.dim();
        let px = lat.is_periodic(0);
        let wrap = |c: usize, n: usize, periodic: bool, fwd: bool| -> Option<usize> {
            if fwd {
                if c + 1 < n {
                    Some(c + 1)
                } else if periodic {
                    Some(0)
                } else {
                    None
                }
            } else if c > 0 {
                Some(c - 1)
            } else if periodic {
                Some(n - 1)
            } else {
                None
            }
        };
        y.par_chunks_mut(nx).enumerate().for_each(|(row, out)| {
            let j = row % ny;
            let k = row / ny;
            let base = row * nx;
            // (row offset, weight axis, forward?) of every transverse neighbour row
            let mut nbr: [(usize, usize, bool); 4] = [(0, 0, false); 4];
            let mut nn = 0;
            if dim > 1 {
                for fwd in [true, false] {
                    if let Some(jj) = wrap(j, ny, lat.is_periodic(1), fwd) {
                        nbr[nn] = ((k * ny + jj) * nx, 1, fwd);
                        nn += 1;
                    }
                }
            }
            if dim > 2 {
                for fwd in [true, false] {
                    if let Some(kk) = wrap(k, nz, lat.is_periodic(2), fwd) {
                        nbr[nn] = ((kk * ny + j) * nx, 2, fwd);
                        nn += 1;
                    }
                }
            }
            let nbr = &nbr[..nn];
            let xr = &x[base..base + nx];
            let fr = &self.free[base..base + nx];
            match &self.weights {
                None => {
                    for i in 0..nx {
                        out[i] = 0.0;
                    }
                    for &(off, _, _) in nbr {
                        let xn = &x[off..off + nx];
                        for i in 0..nx {
                            out[i] += xr[i] - xn[i];
                        }
                    }
                    for i in 0..nx {
                        let mut acc = out[i];
                        if i + 1 < nx {
                            acc += xr[i] - xr[i + 1];
                        } else if px {
                            acc += xr[i] - xr[0];
                        }
                        if i > 0 {
                            acc += xr[i] - xr[i - 1];
                        } else if px {
                            acc += xr[i] - xr[nx - 1];
                        }
                        out[i] = if fr[i] { acc } else { 0.0 };
                    }
                }
                Some(w) => {
                    for i in 0..nx {
                        out[i] = 0.0;
                    }
                    for &(off, axis, fwd) in nbr {
                        let xn = &x[off..off + nx];
                        // forward edges are stored at this row, backward ones at the neighbour
                        let wr = if fwd {
                            &w[axis][base..base + nx]
                        } else {
                            &w[axis][off..off + nx]
                        };
                        for i in 0..nx {
                            out[i] += wr[i] * (xr[i] - xn[i]);
                        }
                    }
                    let w0 = &w[0][base..base + nx];
                    for i in 0..nx {
                        let mut acc = out[i];
                        if i + 1 < nx {
                            acc += w0[i] * (xr[i] - xr[i + 1]);
                        } else if px {
                            acc += w0[i] * (xr[i] - xr[0]);
                        }
                        if i > 0 {
                            acc += w0[i - 1] * (xr[i] - xr[i - 1]);
                        } else if px {
                            acc += w0[nx - 1] * (xr[i] - xr[nx - 1]);
                        }
                        out[i] = if fr[i] { acc } else { 0.0 };
                    }
                }
            }
        });
    }

    /// Right-hand side produced by fixed boundary values `g` (zero on free
    /// nodes is not required): `b_i = sum over edges to fixed j of w_e g_j`.
    pub fn boundary_rhs(&self, g: &[f64]) -> Vec<f64> {
        let lat = &self.lattice;
        (0..lat.len())
            .into_par_iter()
            .map(|i| {
                if !self.free[i] {
                    return 0.0;
                }
                let mut s = 0.0;
                for a in 0..lat.dim() {
                    if let Some(j) = lat.neighbor(i, a, true) {
                        if !self.free[j] {
                            s += self.weight(a, i) * g[j];
                        }
                    }
                    if let Some(j) = lat.neighbor(i, a, false) {
                        if !self.free[j] {
                            s += self.weight(a, j) * g[j];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Energy `sum over edges of w_e (u_i - u_j)^2` over every lattice edge.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let lat = &self.lattice;
        let partial: Vec<f64> = (0..lat.len())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|c| {
                let mut s = 0.0;
                for &i in c {
                    for a in 0..lat.dim() {
                        if let Some(j) = lat.neighbor(i, a, true) {
                            let w = self.weight(a, i);
                            if w != 0.0 {
                                let du = u[j] - u[i];
                                s += w * du * du;
                            }
                        }
                    }
                }
                s
            })
            .collect();
        partial.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `A x = b` on the free nodes
/// of `op`. `x` holds the initial guess and must vanish off the free set.
/// With unit weights the diagonal is constant on interior nodes and the
/// preconditioner is dropped.
pub fn conjugate_gradient(
    op: &EdgeLaplacian,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let n = b.len();
    let free = op.free();
    let inv: Option<Vec<f64>> = op.weights.as_ref().map(|_| {
        op.diagonal()
            .iter()
            .zip(free)
            .map(|(&d, &f)| if f && d > 0.0 { 1.0 / d } else { 0.0 })
            .collect()
    });
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    r.par_iter_mut()
        .zip(b.par_iter())
        .for_each(|(ri, bi)| *ri = bi - *ri);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol * bnorm {
        return Ok(CgStats {
            iterations: 0,
            residual: rr.sqrt() / bnorm,
        });
    }
    let precondition = |r: &[f64], z: &mut Vec<f64>| -> f64 {
        match &inv {
            Some(inv) => {
                z.par_chunks_mut(CHUNK)
                    .zip(r.par_chunks(CHUNK).zip(inv.par_chunks(CHUNK)))
                    .for_each(|(zc, (rc, dc))| {
                        zc.iter_mut()
                            .zip(rc.iter().zip(dc))
                            .for_each(|(zi, (ri, di))| *zi = ri * di)
                    });
                dot(r, z)
            }
            None => f64::NAN,
        }
    };
    let mut z = if inv.is_some() { vec![0.0; n] } else { Vec::new() };
    let mut rz = if inv.is_some() { precondition(&r, &mut z) } else { rr };
    let mut p = if inv.is_some() { z.clone() } else { r.clone() };
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rz / pap;
        // x += alpha p, r -= alpha Ap, accumulate |r|^2 in fixed chunk order
        let partial: Vec<f64> = x
            .par_chunks_mut(CHUNK)
            .zip(r.par_chunks_mut(CHUNK))
            .zip(p.par_chunks(CHUNK).zip(ap.par_chunks(CHUNK)))
            .map(|((xc, rc), (pc, apc))| {
                let mut s = 0.0;
                for i in 0..xc.len() {
                    xc[i] += alpha * pc[i];
                    rc[i] -= alpha * apc[i];
                    s += rc[i] * rc[i];
                }
                s
            })
            .collect();
        rr = partial.iter().sum();
        if rr.sqrt() <= tol * bnorm {
            return Ok(CgStats {
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let rz_new = if inv.is_some() { precondition(&r, &mut z) } else { rr };
        let beta = rz_new / rz;
        rz = rz_new;
        let src = if inv.is_some() { &z } else { &r };
        p.par_chunks_mut(CHUNK)
            .zip(src.par_chunks(CHUNK))
            .for_each(|(pc, sc)| pc.iter_mut().zip(sc).for_each(|(pi, si)| *pi = si + beta * *pi));
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

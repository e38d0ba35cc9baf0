//! Wiener capacity of node sets through discrete equilibrium potentials.
//!
//! For `n <= 2` capacity is taken relative to the open concentric cube of
//! twice the edge, so `cap(F)` is a condenser capacity between `F` and
//! `∂Q_{2d}`. For `n = 3` the outer conductor is the boundary of a
//! concentric box of edge `T d`, and the result is extrapolated to
//! `T = ∞` from `T` and `T / 2` assuming an `O(1/T)` truncation error.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{io, CubeWindow, DomainMask, Lattice, ScalarField};
use crate::linalg::{conjugate_gradient, EdgeLaplacian};

/// A node set inside a cube, stored on the cube's own lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactSet {
    cube: CubeWindow,
    member: Vec<bool>,
}

impl CompactSet {
    pub fn new(cube: CubeWindow, member: Vec<bool>) -> Result<Self> {
        let n = cube.nodes_per_side().pow(cube.dim() as u32);
        if member.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "set has {} entries, cube has {n} nodes",
                member.len()
            )));
        }
        Ok(Self { cube, member })
    }

    pub fn empty(cube: &CubeWindow) -> Self {
        let n = cube.nodes_per_side().pow(cube.dim() as u32);
        Self {
            cube: cube.clone(),
            member: vec![false; n],
        }
    }

    /// Every node of the cube.
    pub fn whole(cube: &CubeWindow) -> Self {
        let n = cube.nodes_per_side().pow(cube.dim() as u32);
        Self {
            cube: cube.clone(),
            member: vec![true; n],
        }
    }

    pub fn from_fn(cube: &CubeWindow, f: impl Fn(&[f64; 3]) -> bool) -> Self {
        let lat = cube.local_lattice();
        let member = (0..lat.len()).map(|i| f(&lat.coords(i))).collect();
        Self {
            cube: cube.clone(),
            member,
        }
    }

    /// Nodes of the cube lying outside Ω.
    pub fn outside_of(cube: &CubeWindow, omega: &DomainMask) -> Self {
        let local = omega.restrict(cube);
        Self {
            cube: cube.clone(),
            member: local.inside().iter().map(|b| !b).collect(),
        }
    }

    pub fn cube(&self) -> &CubeWindow {
        &self.cube
    }

    pub fn member(&self) -> &[bool] {
        &self.member
    }

    pub fn member_mut(&mut self) -> &mut [bool] {
        &mut self.member
    }

    pub fn lattice(&self) -> Lattice {
        self.cube.local_lattice()
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|&b| b)
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.member[idx]
    }

    pub fn union(&self, other: &CompactSet) -> Result<Self> {
        if self.cube != other.cube {
            return Err(Error::ShapeMismatch("sets live in different cubes".into()));
        }
        let member = self.member.iter().zip(&other.member).map(|(a, b)| *a || *b).collect();
        Ok(Self {
            cube: self.cube.clone(),
            member,
        })
    }

    pub fn is_subset_of(&self, other: &CompactSet) -> bool {
        self.member.iter().zip(&other.member).all(|(a, b)| !*a || *b)
    }

    pub fn runs(&self) -> Vec<(usize, usize)> {
        io::mask_runs(&self.member)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    /// Truncation box edge in units of `d` for `n = 3`; should be even.
    pub truncation: usize,
    /// Relative CG residual.
    pub tol: f64,
    /// CG iteration cap as a multiple of the number of unknowns.
    pub max_iter_factor: usize,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            truncation: 8,
            tol: 1e-8,
            max_iter_factor: 10,
        }
    }
}

/// Solution of the condenser problem between a set and an outer conductor.
#[derive(Clone, Debug)]
pub struct EquilibriumPotential {
    pub field: ScalarField,
    pub cap_value: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Discrete harmonic function equal to 1 on `f` and 0 on `outer`, and its
/// Dirichlet energy over every edge of `lattice`.
pub fn equilibrium_potential(
    lattice: &Lattice,
    f: &[bool],
    outer: &[bool],
    cfg: &CapacityConfig,
) -> Result<EquilibriumPotential> {
    if f.len() != lattice.len() || outer.len() != lattice.len() {
        return Err(Error::ShapeMismatch("set masks do not match lattice".into()));
    }
    if f.iter().zip(outer).any(|(a, b)| *a && *b) {
        return Err(Error::InvalidArgument("set meets the outer conductor".into()));
    }
    let scale = lattice.h().powi(lattice.dim() as i32 - 2);
    if !f.iter().any(|&b| b) {
        return Ok(EquilibriumPotential {
            field: ScalarField::zeros(lattice),
            cap_value: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let free: Vec<bool> = f.iter().zip(outer).map(|(a, b)| !a && !b).collect();
    let unknowns = free.iter().filter(|&&b| b).count();
    let op = EdgeLaplacian::unit(lattice, free);
    let g: Vec<f64> = f.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let rhs = op.boundary_rhs(&g);
    let mut x = vec![0.0; lattice.len()];
    let stats = conjugate_gradient(&op, &rhs, &mut x, cfg.tol, cfg.max_iter_factor * unknowns.max(1))?;
    for (xi, &fi) in x.iter_mut().zip(f) {
        if fi {
            *xi = 1.0;
        }
    }
    let energy = op.energy(&x);
    Ok(EquilibriumPotential {
        field: ScalarField::new(lattice.clone(), x)?,
        cap_value: energy * scale,
        residual: stats.residual,
        iterations: stats.iterations,
    })
}

/// Outer lattice for a cube: the concentric box with `factor * cells` cells
/// (at least one spare cell on every side) and the node offset of the cube
/// inside it.
pub fn context_lattice(cube: &CubeWindow, factor: usize) -> (Lattice, usize) {
    let m = cube.cells;
    let cells = (factor * m).max(m + 2);
    let offset = (cells - m) / 2;
    let h = cube.h();
    let origin: Vec<f64> = (0..cube.dim())
        .map(|a| cube.center[a] - 0.5 * cube.d - offset as f64 * h)
        .collect();
    let shape = vec![cells + 1; cube.dim()];
    let lat = Lattice::new(&shape, h, &origin).expect("context lattice is valid");
    (lat, offset)
}

fn embed(set: &CompactSet, lat: &Lattice, offset: usize) -> Vec<bool> {
    let local = set.lattice();
    let mut out = vec![false; lat.len()];
    for (i, &b) in set.member().iter().enumerate() {
        if b {
            let m = local.multi_index(i);
            let mut g = [0usize; 3];
            for a in 0..local.dim() {
                g[a] = m[a] + offset;
            }
            out[lat.index(g)] = true;
        }
    }
    out
}

fn boundary_mask(lat: &Lattice) -> Vec<bool> {
    (0..lat.len()).map(|i| lat.on_boundary(i)).collect()
}

fn solve_in_context(
    set: &CompactSet,
    factor: usize,
    cfg: &CapacityConfig,
) -> Result<EquilibriumPotential> {
    let (lat, offset) = context_lattice(set.cube(), factor);
    let f = embed(set, &lat, offset);
    equilibrium_potential(&lat, &f, &boundary_mask(&lat), cfg)
}

fn outer_factor(dim: usize, cfg: &CapacityConfig) -> usize {
    if dim <= 2 {
        2
    } else {
        cfg.truncation.max(2)
    }
}

/// Capacity of `set` under the cube-relative convention, together with the
/// equilibrium potential on the (largest) context lattice.
pub fn cap_with_potential(set: &CompactSet, cfg: &CapacityConfig) -> Result<(f64, EquilibriumPotential)> {
    let dim = set.cube().dim();
    let t = outer_factor(dim, cfg);
    let full = solve_in_context(set, t, cfg)?;
    if dim <= 2 || set.is_empty() {
        return Ok((full.cap_value, full));
    }
    let half = solve_in_context(set, (t / 2).max(2), cfg)?;
    let extrapolated = 2.0 * full.cap_value - half.cap_value;
    Ok((extrapolated, full))
}

pub fn cap(set: &CompactSet, cfg: &CapacityConfig) -> Result<f64> {
    Ok(cap_with_potential(set, cfg)?.0)
}

type CacheKey = (usize, usize, usize, u64);

fn cube_cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `cap(Q_d)` with the same outer context as [`cap`]. The lattice energy of
/// a full cube depends only on `(n, cells, T)`, so it is memoised in units
/// of `h^{n-2}`.
pub fn cube_capacity(cube: &CubeWindow, cfg: &CapacityConfig) -> Result<f64> {
    let key = (cube.dim(), cube.cells, outer_factor(cube.dim(), cfg), cfg.tol.to_bits());
    let scale = cube.h().powi(cube.dim() as i32 - 2);
    if let Some(v) = cube_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(v * scale);
    }
    let c = cap(&CompactSet::whole(cube), cfg)?;
    cube_cache()
        .lock()
        .expect("cache poisoned")
        .insert(key, c / scale);
    Ok(c)
}

/// `cap(F) <= gamma * cap(Q_d)`.
pub fn is_negligible(set: &CompactSet, gamma: f64, cfg: &CapacityConfig) -> Result<bool> {
    if set.is_empty() {
        return Ok(true);
    }
    Ok(cap(set, cfg)? <= gamma * cube_capacity(set.cube(), cfg)?)
}

/// For `u = 1 - P_F` restricted to `Q_d`: `∫|∇u|² / (d^{-n} ∫u²)`.
pub fn lemma_ratio(set: &CompactSet, cfg: &CapacityConfig) -> Result<f64> {
    let cube = set.cube();
    let (_, pot) = cap_with_potential(set, cfg)?;
    let lat = pot.field.lattice();
    let (_, offset) = context_lattice(cube, outer_factor(cube.dim(), cfg));
    let local = cube.local_lattice();
    let n = local.dim();
    let h = local.h();
    let u: Vec<f64> = (0..local.len())
        .map(|i| {
            let m = local.multi_index(i);
            let mut g = [0usize; 3];
            for a in 0..n {
                g[a] = m[a] + offset;
            }
            1.0 - pot.field.values()[lat.index(g)]
        })
        .collect();
    let mut grad = 0.0;
    let mut mass = 0.0;
    for i in 0..local.len() {
        mass += local.node_weight(i) * u[i] * u[i];
        for a in 0..n {
            if let Some(j) = local.neighbor(i, a, true) {
                let du = u[j] - u[i];
                grad += local.edge_weight(i, a) * du * du;
            }
        }
    }
    grad *= h.powi(n as i32 - 2);
    mass *= h.powi(n as i32);
    if mass == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(grad / (cube.d.powi(-(n as i32)) * mass))
}

//! Uniform rectangular lattices, domain masks, sampled fields and the
//! discrete differential operators shared by every other module.
//!
//! Scalars live on nodes. Vector components live on edges: component `j`
//! stored at node `i` is the value on the edge from `i` to `i + e_j`.
//! Unused trailing axes have extent 1, so a 2-D lattice is a `[nx, ny, 1]`
//! block and all index arithmetic is shared between dimensions.

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform lattice `origin + index * h` in one, two or three dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    shape: [usize; 3],
    h: f64,
    origin: [f64; 3],
    #[serde(default)]
    periodic: [bool; 3],
}

impl Lattice {
    pub fn new(shape: &[usize], h: f64, origin: &[f64]) -> Result<Self> {
        let dim = shape.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidLattice(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if origin.len() != dim {
            return Err(Error::InvalidLattice(format!(
                "origin has {} coordinates for a {dim}-d lattice",
                origin.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidLattice(format!("spacing must be positive, got {h}")));
        }
        if let Some(n) = shape.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidLattice(format!(
                "every axis needs at least 2 nodes, got {n}"
            )));
        }
        let mut s = [1usize; 3];
        let mut o = [0.0; 3];
        s[..dim].copy_from_slice(shape);
        o[..dim].copy_from_slice(origin);
        Ok(Self {
            dim,
            shape: s,
            h,
            origin: o,
            periodic: [false; 3],
        })
    }

    /// Builds the lattice covering `[lo, hi]` per axis with spacing `h`.
    /// The number of cells is rounded to the nearest integer.
    pub fn covering(lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        let shape: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| ((b - a) / h).round() as usize + 1)
            .collect();
        Self::new(&shape, h, lo)
    }

    /// Marks `axis` as periodic: the last node connects back to the first.
    pub fn with_periodic(mut self, axis: usize, periodic: bool) -> Result<Self> {
        if axis >= self.dim {
            return Err(Error::InvalidLattice(format!("no axis {axis} in a {}-d lattice", self.dim)));
        }
        if periodic && self.shape[axis] < 3 {
            return Err(Error::InvalidLattice("periodic axis needs at least 3 nodes".into()));
        }
        self.periodic[axis] = periodic;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^n`, the volume attached to one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[0] * self.shape[1],
        }
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.shape[0] * (ijk[1] + self.shape[1] * ijk[2])
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.shape[0];
        let rest = idx / self.shape[0];
        [i, rest % self.shape[1], rest / self.shape[1]]
    }

    /// Physical coordinates of a node; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + m[a] as f64 * self.h;
        }
        x
    }

    /// Neighbour one step along `axis`, forward or backward. Periodic axes wrap.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> Option<usize> {
        if axis >= self.dim {
            return None;
        }
        let n = self.shape[axis];
        let s = self.stride(axis);
        let c = (idx / s) % n;
        if forward {
            if c + 1 < n {
                Some(idx + s)
            } else if self.periodic[axis] {
                Some(idx + s - n * s)
            } else {
                None
            }
        } else if c > 0 {
            Some(idx - s)
        } else if self.periodic[axis] {
            Some(idx + (n - 1) * s)
        } else {
            None
        }
    }

    /// True when the node sits on the outer face of a non-periodic axis.
    pub fn on_boundary(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.dim).any(|a| !self.periodic[a] && (m[a] == 0 || m[a] + 1 == self.shape[a]))
    }

    /// Every active axis has the same extent and no axis is periodic.
    pub fn is_cube(&self) -> bool {
        (0..self.dim).all(|a| self.shape[a] == self.shape[0] && !self.periodic[a])
    }

    /// Trapezoid quadrature weight (in units of `h^n`) of a node when the
    /// lattice is read as a closed box.
    pub fn node_weight(&self, idx: usize) -> f64 {
        let m = self.multi_index(idx);
        (0..self.dim)
            .filter(|&a| !self.periodic[a] && (m[a] == 0 || m[a] + 1 == self.shape[a]))
            .fold(1.0, |w, _| w * 0.5)
    }

    /// Trapezoid weight of the edge `(idx, axis)`: halved once per transverse
    /// boundary face the edge lies on.
    pub fn edge_weight(&self, idx: usize, axis: usize) -> f64 {
        let m = self.multi_index(idx);
        (0..self.dim)
            .filter(|&a| a != axis && !self.periodic[a] && (m[a] == 0 || m[a] + 1 == self.shape[a]))
            .fold(1.0, |w, _| w * 0.5)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{what} has {len} entries, lattice has {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Membership of lattice nodes in the open set Ω.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainMask {
    lattice: Lattice,
    inside: Vec<bool>,
}

impl DomainMask {
    pub fn new(lattice: Lattice, inside: Vec<bool>) -> Result<Self> {
        lattice.check_len("mask", inside.len())?;
        Ok(Self { lattice, inside })
    }

    pub fn full(lattice: &Lattice) -> Self {
        Self {
            inside: vec![true; lattice.len()],
            lattice: lattice.clone(),
        }
    }

    pub fn from_fn(lattice: &Lattice, f: impl Fn(&[f64; 3]) -> bool) -> Self {
        let inside = (0..lattice.len()).map(|i| f(&lattice.coords(i))).collect();
        Self {
            lattice: lattice.clone(),
            inside,
        }
    }

    /// Ω with the non-periodic outer faces of the lattice frozen to zero.
    pub fn interior_of(lattice: &Lattice, f: impl Fn(&[f64; 3]) -> bool) -> Self {
        let inside = (0..lattice.len())
            .map(|i| !lattice.on_boundary(i) && f(&lattice.coords(i)))
            .collect();
        Self {
            lattice: lattice.clone(),
            inside,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.inside[idx]
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// `Ω ∖ B̄_R(center)`.
    pub fn without_ball(&self, center: &[f64; 3], radius: f64) -> Self {
        let inside = self
            .inside
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let x = self.lattice.coords(i);
                let r2: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum();
                b && r2 > radius * radius
            })
            .collect();
        Self {
            lattice: self.lattice.clone(),
            inside,
        }
    }

    pub fn intersect(&self, other: &DomainMask) -> Result<Self> {
        if self.lattice != other.lattice {
            return Err(Error::ShapeMismatch("masks live on different lattices".into()));
        }
        let inside = self
            .inside
            .iter()
            .zip(&other.inside)
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(Self {
            lattice: self.lattice.clone(),
            inside,
        })
    }

    pub fn is_subset_of(&self, other: &DomainMask) -> bool {
        self.inside.iter().zip(&other.inside).all(|(a, b)| !*a || *b)
    }

    pub fn restrict(&self, cube: &CubeWindow) -> Self {
        let local = cube.local_lattice();
        let inside = (0..local.len()).map(|i| self.inside[cube.global_index(&self.lattice, i)]).collect();
        Self { lattice: local, inside }
    }
}

/// Real samples on lattice nodes. Potentials may carry `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        lattice.check_len("scalar field", values.len())?;
        Ok(Self { lattice, values })
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        Self {
            values: vec![0.0; lattice.len()],
            lattice: lattice.clone(),
        }
    }

    pub fn from_fn(lattice: &Lattice, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let values = (0..lattice.len()).map(|i| f(&lattice.coords(i))).collect();
        Self {
            lattice: lattice.clone(),
            values,
        }
    }

    /// Validates a potential: every entry must be `>= 0` (`+inf` allowed).
    pub fn into_potential(self) -> Result<Self> {
        if let Some((i, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "potential must be non-negative, node {i} has {v}"
            )));
        }
        Ok(self)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn restrict(&self, cube: &CubeWindow) -> Self {
        let local = cube.local_lattice();
        let values = (0..local.len()).map(|i| self.values[cube.global_index(&self.lattice, i)]).collect();
        Self { lattice: local, values }
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &ScalarField, beta: f64) -> Result<Self> {
        if self.lattice != other.lattice {
            return Err(Error::ShapeMismatch("fields live on different lattices".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Self {
            lattice: self.lattice.clone(),
            values,
        })
    }
}

/// Edge-centred vector field; one component per active axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    lattice: Lattice,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(lattice: Lattice, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != lattice.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} components for a {}-d lattice",
                components.len(),
                lattice.dim()
            )));
        }
        for c in &components {
            lattice.check_len("vector component", c.len())?;
        }
        Ok(Self { lattice, components })
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        Self {
            components: vec![vec![0.0; lattice.len()]; lattice.dim()],
            lattice: lattice.clone(),
        }
    }

    /// Samples `f(edge_start, axis)` on every existing edge.
    pub fn from_edge_fn(lattice: &Lattice, f: impl Fn(&[f64; 3], usize) -> f64) -> Self {
        let components = (0..lattice.dim())
            .map(|a| {
                (0..lattice.len())
                    .map(|i| {
                        if lattice.neighbor(i, a, true).is_some() {
                            f(&lattice.coords(i), a)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            lattice: lattice.clone(),
            components,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    #[inline]
    pub fn edge(&self, idx: usize, axis: usize) -> f64 {
        self.components[axis][idx]
    }

    pub fn restrict(&self, cube: &CubeWindow) -> Self {
        let local = cube.local_lattice();
        let components = (0..local.dim())
            .map(|a| {
                (0..local.len())
                    .map(|i| {
                        if local.neighbor(i, a, true).is_some() {
                            self.components[a][cube.global_index(&self.lattice, i)]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            lattice: local,
            components,
        }
    }

    /// Component-wise `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &VectorField, beta: f64) -> Result<Self> {
        if self.lattice != other.lattice {
            return Err(Error::ShapeMismatch("fields live on different lattices".into()));
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect())
            .collect();
        Ok(Self {
            lattice: self.lattice.clone(),
            components,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A closed axis-parallel cube `Q_d` cut out of a lattice: `cells` cells per
/// side, so `d = cells * h` and the window holds `(cells + 1)^n` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeWindow {
    pub lo: [usize; 3],
    pub cells: usize,
    pub d: f64,
    pub center: [f64; 3],
    dim: usize,
    h: f64,
}

impl CubeWindow {
    pub fn new(lattice: &Lattice, lo: [usize; 3], cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::InvalidArgument("cube needs at least one cell".into()));
        }
        for a in 0..lattice.dim() {
            if lo[a] + cells >= lattice.extent(a) {
                return Err(Error::InvalidArgument(format!(
                    "cube with corner {lo:?} and {cells} cells leaves the lattice along axis {a}"
                )));
            }
        }
        let mut lo3 = [0usize; 3];
        lo3[..lattice.dim()].copy_from_slice(&lo[..lattice.dim()]);
        let corner = lattice.coords(lattice.index(lo3));
        let h = lattice.h();
        let d = cells as f64 * h;
        let mut center = [0.0; 3];
        for a in 0..lattice.dim() {
            center[a] = corner[a] + 0.5 * d;
        }
        Ok(Self {
            lo: lo3,
            cells,
            d,
            center,
            dim: lattice.dim(),
            h,
        })
    }

    /// The whole lattice as a cube; the lattice must be cubic.
    pub fn whole(lattice: &Lattice) -> Result<Self> {
        if !lattice.is_cube() {
            return Err(Error::InvalidArgument("lattice is not a cube".into()));
        }
        Self::new(lattice, [0; 3], lattice.extent(0) - 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells + 1
    }

    /// Standalone lattice covering exactly this cube.
    pub fn local_lattice(&self) -> Lattice {
        let shape = vec![self.cells + 1; self.dim];
        let origin: Vec<f64> = (0..self.dim).map(|a| self.center[a] - 0.5 * self.d).collect();
        Lattice::new(&shape, self.h, &origin).expect("cube lattice is valid by construction")
    }

    /// Maps a node index of the local lattice to the parent lattice.
    #[inline]
    pub fn global_index(&self, parent: &Lattice, local: usize) -> usize {
        let n = self.cells + 1;
        let i = local % n;
        let j = if self.dim > 1 { (local / n) % n } else { 0 };
        let k = if self.dim > 2 { local / (n * n) } else { 0 };
        parent.index([self.lo[0] + i, self.lo[1] + j, self.lo[2] + k])
    }
}

/// Connected components of `member` nodes. With `diagonal` set, nodes
/// touching at a corner are connected (8-/26-neighbourhood); otherwise only
/// lattice edges connect. Returns a label per node (`usize::MAX` for
/// non-members) and the number of components, numbered in order of their
/// lowest node index.
pub fn label_components(lattice: &Lattice, member: &[bool], diagonal: bool) -> (Vec<usize>, usize) {
    let n = lattice.len();
    let dim = lattice.dim();
    let mut label = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    let offsets: Vec<[i64; 3]> = {
        let r: Vec<i64> = vec![-1, 0, 1];
        let mut v = Vec::new();
        for &dz in if dim > 2 { &r[..] } else { &r[1..2] } {
            for &dy in if dim > 1 { &r[..] } else { &r[1..2] } {
                for &dx in &r {
                    let nonzero = (dx != 0) as u32 + (dy != 0) as u32 + (dz != 0) as u32;
                    if nonzero == 0 || (!diagonal && nonzero > 1) {
                        continue;
                    }
                    v.push([dx, dy, dz]);
                }
            }
        }
        v
    };
    for start in 0..n {
        if !member[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let m = lattice.multi_index(i);
            for o in &offsets {
                let mut q = [0usize; 3];
                let mut ok = true;
                for a in 0..3 {
                    let c = m[a] as i64 + o[a];
                    let ext = lattice.extent(a) as i64;
                    let c = if a < dim && lattice.is_periodic(a) {
                        c.rem_euclid(ext)
                    } else {
                        c
                    };
                    if c < 0 || c >= ext {
                        ok = false;
                        break;
                    }
                    q[a] = c as usize;
                }
                if !ok {
                    continue;
                }
                let j = lattice.index(q);
                if member[j] && label[j] == usize::MAX {
                    label[j] = count;
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// Forward differences `(f[i + e_j] - f[i]) / h` on every edge. Edges that
/// touch a `+inf` sample carry `+inf`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let lat = f.lattice();
    let h = lat.h();
    let vals = f.values();
    let components = (0..lat.dim())
        .map(|a| {
            (0..lat.len())
                .map(|i| match lat.neighbor(i, a, true) {
                    Some(j) => {
                        if vals[i].is_infinite() || vals[j].is_infinite() {
                            f64::INFINITY
                        } else {
                            (vals[j] - vals[i]) / h
                        }
                    }
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    VectorField {
        lattice: lat.clone(),
        components,
    }
}

/// Discrete Dirichlet integral `h^n * sum over edges of (df / h)^2`, counting
/// only edges with both endpoints in `region`.
pub fn dirichlet_energy(f: &ScalarField, region: &[bool]) -> f64 {
    let lat = f.lattice();
    let vals = f.values();
    let scale = lat.h().powi(lat.dim() as i32 - 2);
    let mut sum = 0.0;
    for i in 0..lat.len() {
        if !region[i] {
            continue;
        }
        for a in 0..lat.dim() {
            if let Some(j) = lat.neighbor(i, a, true) {
                if region[j] {
                    let df = vals[j] - vals[i];
                    sum += df * df;
                }
            }
        }
    }
    sum * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(n: usize) -> Lattice {
        let h = 1.0 / n as f64;
        Lattice::new(&[n + 1, n + 1], h, &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn lattice_rejects_bad_input() {
        assert!(Lattice::new(&[1, 4], 0.1, &[0.0, 0.0]).is_err());
        assert!(Lattice::new(&[4, 4], 0.0, &[0.0, 0.0]).is_err());
        assert!(Lattice::new(&[4, 4, 4, 4], 0.1, &[0.0; 4]).is_err());
        assert!(Lattice::new(&[4, 4], 0.1, &[0.0]).is_err());
    }

    #[test]
    fn index_round_trip_and_coords() {
        let lat = Lattice::new(&[4, 5, 6], 0.5, &[1.0, -1.0, 2.0]).unwrap();
        for idx in 0..lat.len() {
            assert_eq!(lat.index(lat.multi_index(idx)), idx);
        }
        let idx = lat.index([3, 2, 1]);
        assert_eq!(lat.coords(idx), [2.5, 0.0, 2.5]);
    }

    #[test]
    fn periodic_neighbors_wrap() {
        let lat = Lattice::new(&[4, 3], 1.0, &[0.0, 0.0])
            .unwrap()
            .with_periodic(0, true)
            .unwrap();
        assert_eq!(lat.neighbor(3, 0, true), Some(0));
        assert_eq!(lat.neighbor(0, 0, false), Some(3));
        assert_eq!(lat.neighbor(lat.index([0, 2, 0]), 1, true), None);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let lat = unit_square(8);
        let g = gradient(&ScalarField::from_fn(&lat, |_| 3.5));
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let lat = Lattice::new(&[9, 9], 0.5, &[0.0, 0.0]).unwrap();
        let g = gradient(&ScalarField::from_fn(&lat, |x| x[0]));
        for i in 0..lat.len() {
            if lat.neighbor(i, 0, true).is_some() {
                assert!((g.edge(i, 0) - 1.0).abs() < 1e-12);
            }
            assert_eq!(g.edge(i, 1), 0.0);
        }
    }

    #[test]
    fn gradient_of_bilinear_within_h() {
        // d/dx (x y) = y; forward differences are exact in x, sampled at the edge start.
        let lat = unit_square(64);
        let h = lat.h();
        let g = gradient(&ScalarField::from_fn(&lat, |x| x[0] * x[1]));
        let mut max_err = 0.0f64;
        for i in 0..lat.len() {
            if lat.neighbor(i, 0, true).is_some() {
                let y = lat.coords(i)[1];
                max_err = max_err.max((g.edge(i, 0) - y).abs());
            }
        }
        assert!(max_err <= h, "max error {max_err}");
    }

    #[test]
    fn gradient_flags_infinite_stencils() {
        let lat = Lattice::new(&[3], 1.0, &[0.0]).unwrap();
        let f = ScalarField::new(lat, vec![0.0, f64::INFINITY, 1.0]).unwrap();
        let g = gradient(&f);
        assert!(g.edge(0, 0).is_infinite());
        assert!(g.edge(1, 0).is_infinite());
    }

    #[test]
    fn energy_of_constant_is_zero() {
        let lat = unit_square(16);
        let f = ScalarField::from_fn(&lat, |_| 1.0);
        assert_eq!(dirichlet_energy(&f, &vec![true; lat.len()]), 0.0);
    }

    #[test]
    fn energy_of_linear_on_unit_square() {
        let lat = unit_square(64);
        let f = ScalarField::from_fn(&lat, |x| x[0]);
        let e = dirichlet_energy(&f, &vec![true; lat.len()]);
        assert!((e - 1.0).abs() <= 2.0 * lat.h(), "energy {e}");
    }

    #[test]
    fn energy_of_slab_capacitor() {
        // Linear ramp 0 -> 1 across a slab of width w in a strip of height 1: area / w.
        let n = 64;
        let lat = unit_square(n);
        let w = 0.5;
        let f = ScalarField::from_fn(&lat, |x| (x[0] / w).clamp(0.0, 1.0));
        let e = dirichlet_energy(&f, &vec![true; lat.len()]);
        let expected = 1.0 / w;
        assert!((e - expected).abs() <= 4.0 * lat.h() * expected, "energy {e}");
    }

    #[test]
    fn energy_excludes_edges_leaving_region() {
        let lat = Lattice::new(&[3], 1.0, &[0.0]).unwrap();
        let f = ScalarField::new(lat, vec![0.0, 1.0, 3.0]).unwrap();
        let e = dirichlet_energy(&f, &[true, true, false]);
        // 1-d scale h^{-1} = 1
        assert_eq!(e, 1.0);
    }

    #[test]
    fn energy_converges_at_first_order_or_better() {
        let f = |x: &[f64; 3]| (x[0] * 2.0).sin() * (x[1] + 0.3).cos();
        // exact integral of |grad f|^2 over the unit square, by a fine midpoint rule
        let exact = {
            let n = 2000;
            let h = 1.0 / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = (i as f64 + 0.5) * h;
                    let y = (j as f64 + 0.5) * h;
                    let fx = 2.0 * (2.0 * x).cos() * (y + 0.3).cos();
                    let fy = -(2.0 * x).sin() * (y + 0.3).sin();
                    s += (fx * fx + fy * fy) * h * h;
                }
            }
            s
        };
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let lat = unit_square(n);
                let e = dirichlet_energy(&ScalarField::from_fn(&lat, f), &vec![true; lat.len()]);
                (e - exact).abs()
            })
            .collect();
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 >= 0.9 && order2 >= 0.9, "orders {order1} {order2}");
    }

    #[test]
    fn cube_window_restricts_fields() {
        let lat = Lattice::new(&[10, 10], 0.1, &[0.0, 0.0]).unwrap();
        let cube = CubeWindow::new(&lat, [2, 3, 0], 4).unwrap();
        assert!((cube.d - 0.4).abs() < 1e-12);
        assert!((cube.center[0] - 0.4).abs() < 1e-12);
        assert!((cube.center[1] - 0.5).abs() < 1e-12);
        let f = ScalarField::from_fn(&lat, |x| x[0] + 10.0 * x[1]);
        let r = f.restrict(&cube);
        assert_eq!(r.lattice().shape(), &[5, 5]);
        assert!((r.values()[0] - (0.2 + 3.0)).abs() < 1e-12);
        assert!(CubeWindow::new(&lat, [6, 0, 0], 4).is_err());
    }

    #[test]
    fn trapezoid_weights_integrate_volume() {
        let lat = Lattice::new(&[5, 5, 5], 0.25, &[0.0; 3]).unwrap();
        let vol: f64 = (0..lat.len()).map(|i| lat.node_weight(i)).sum::<f64>() * lat.cell_volume();
        assert!((vol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn components_respect_connectivity() {
        let lat = Lattice::new(&[4, 4], 1.0, &[0.0, 0.0]).unwrap();
        let mut m = vec![false; 16];
        m[lat.index([0, 0, 0])] = true;
        m[lat.index([1, 1, 0])] = true;
        m[lat.index([3, 3, 0])] = true;
        assert_eq!(label_components(&lat, &m, true).1, 2);
        assert_eq!(label_components(&lat, &m, false).1, 3);
    }

    #[test]
    fn potentials_must_be_nonnegative() {
        let lat = Lattice::new(&[3], 1.0, &[0.0]).unwrap();
        assert!(ScalarField::new(lat.clone(), vec![0.0, -1.0, 0.0])
            .unwrap()
            .into_potential()
            .is_err());
        assert!(ScalarField::new(lat, vec![0.0, f64::INFINITY, 2.0])
            .unwrap()
            .into_potential()
            .is_ok());
    }
}

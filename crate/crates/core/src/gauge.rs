//! Unit-modulus test gauges and the effective potential they induce.
//!
//! A gauge `ω = e^{iφ}` is stored through its phase increments along the
//! edges of a cube lattice. Two families are produced: phases optimised
//! for a given carved set `F` (a single-valued part solved from a weighted
//! Neumann problem plus integer windings about the holes of `F`), and
//! sampled polynomial gauges `P / |P|`.
//!
//! Edge phases of the magnetic potential are `θ_e = h a_e`, the line
//! integral of `a` along the edge, and the energy density on an edge is
//! `((ψ_e + θ_e) / h)^2` for a phase increment `ψ_e`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::capacity::CompactSet;
use crate::error::{Error, Result};
use crate::grid::{io, label_components, CubeWindow, DomainMask, Lattice, ScalarField, VectorField};
use crate::linalg::{conjugate_gradient, EdgeLaplacian};

const MAX_HOLES: usize = 64;
const GAUGE_TOL: f64 = 1e-10;
const MAX_RESAMPLES: usize = 100;
const GENERIC_ANGLE: f64 = 1e-3;

/// Everything the gauge and carving code needs about one cube: its own
/// lattice, the edge phases of `a`, the samples of `V` and the nodes that
/// lie outside Ω.
#[derive(Clone, Debug)]
pub struct CubeProblem {
    cube: CubeWindow,
    lattice: Lattice,
    theta: Vec<Vec<f64>>,
    v: Vec<f64>,
    outside: Vec<bool>,
}

impl CubeProblem {
    pub fn new(cube: &CubeWindow, omega: &DomainMask, a: &VectorField, v: &ScalarField) -> Result<Self> {
        if omega.lattice() != a.lattice() || omega.lattice() != v.lattice() {
            return Err(Error::ShapeMismatch("Ω, a and V must share a lattice".into()));
        }
        let lattice = cube.local_lattice();
        let h = lattice.h();
        let ar = a.restrict(cube);
        let theta = (0..lattice.dim())
            .map(|ax| ar.component(ax).iter().map(|x| h * x).collect())
            .collect();
        let v = v.restrict(cube).into_values();
        let outside = omega.restrict(cube).inside().iter().map(|b| !b).collect();
        Ok(Self {
            cube: cube.clone(),
            lattice,
            theta,
            v,
            outside,
        })
    }

    /// Builds a problem directly on a cube lattice. `theta` holds edge phases.
    pub fn from_parts(cube: &CubeWindow, theta: Vec<Vec<f64>>, v: Vec<f64>, outside: Vec<bool>) -> Result<Self> {
        let lattice = cube.local_lattice();
        if theta.len() != lattice.dim()
            || theta.iter().any(|t| t.len() != lattice.len())
            || v.len() != lattice.len()
            || outside.len() != lattice.len()
        {
            return Err(Error::ShapeMismatch("cube problem parts do not match the cube".into()));
        }
        Ok(Self {
            cube: cube.clone(),
            lattice,
            theta,
            v,
            outside,
        })
    }

    pub fn cube(&self) -> &CubeWindow {
        &self.cube
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn potential(&self) -> &[f64] {
        &self.v
    }

    pub fn outside(&self) -> &[bool] {
        &self.outside
    }

    pub fn outside_set(&self) -> CompactSet {
        CompactSet::new(self.cube.clone(), self.outside.clone()).expect("sizes agree")
    }

    /// Same cube with the magnetic phases replaced.
    pub fn with_theta(&self, theta: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_parts(&self.cube, theta, self.v.clone(), self.outside.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeKind {
    OptimizedPhase,
    Polynomial,
}

/// Integer winding about one hole of the carved set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub center_node: usize,
    pub center: [f64; 3],
    /// Circulation of `a` around the hole.
    pub flux: f64,
    pub m: i64,
}

/// A lattice plaquette (lower corner, spanning axes) around which the phase
/// of a polynomial winds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroCell {
    pub corner: usize,
    pub axes: [usize; 2],
    pub winding: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeCandidate {
    pub kind: GaugeKind,
    /// Phase increment of ω along each edge `(i, i + e_a)` of the cube
    /// lattice; NaN on edges touching a singular node.
    #[serde(skip)]
    pub increments: Vec<Vec<f64>>,
    /// Nodes where ω is undefined; these must be carved.
    #[serde(skip)]
    pub singular: Vec<bool>,
    pub winding: Vec<Winding>,
    pub poly_coeffs: Vec<Complex64>,
    pub poly_exponents: Vec<[u8; 3]>,
    pub zero_cells: Vec<ZeroCell>,
    /// `∫_{Q∖F} |∇φ + a|²` over the set the phase was optimised for.
    pub energy: Option<f64>,
    /// Run-length encoding of that set.
    pub optimized_on: Vec<(usize, usize)>,
}

impl GaugeCandidate {
    /// `ω ≡ 1`.
    pub fn identity(lattice: &Lattice) -> Self {
        Self {
            kind: GaugeKind::Polynomial,
            increments: vec![vec![0.0; lattice.len()]; lattice.dim()],
            singular: vec![false; lattice.len()],
            winding: Vec::new(),
            poly_coeffs: vec![Complex64::new(1.0, 0.0)],
            poly_exponents: vec![[0, 0, 0]],
            zero_cells: Vec::new(),
            energy: None,
            optimized_on: Vec::new(),
        }
    }

    /// Recomputes the edge data of a deserialised candidate.
    pub fn rebuild(&self, prob: &CubeProblem) -> Result<GaugeCandidate> {
        match self.kind {
            GaugeKind::Polynomial => polynomial_candidate(prob.cube(), &self.poly_exponents, &self.poly_coeffs),
            GaugeKind::OptimizedPhase => {
                let n = prob.lattice().len();
                let f = CompactSet::new(prob.cube().clone(), io::mask_from_runs(n, &self.optimized_on)?)?;
                let m: Vec<i64> = self.winding.iter().map(|w| w.m).collect();
                gauge_with_windings(prob, &f, &m)
            }
        }
    }

    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|&&b| b).count()
    }
}

/// `Ṽ = |∇φ + a|² + V` on a cube.
#[derive(Clone, Debug)]
pub struct EffectivePotential {
    lattice: Lattice,
    /// Node values; `+inf` on singular nodes.
    pub node: Vec<f64>,
    /// `|∇φ + a|²` per edge; `+inf` on edges touching a singular node.
    pub edge: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub sentinel: Vec<bool>,
}

impl EffectivePotential {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn field(&self) -> ScalarField {
        ScalarField::new(self.lattice.clone(), self.node.clone()).expect("sizes agree")
    }

    /// `∫_{Q∖F} Ṽ`: trapezoid-weighted potential on nodes outside `F` plus
    /// the magnetic energy of edges with both ends outside `F`. A singular
    /// node outside `F` makes the integral infinite.
    pub fn integral(&self, f: &[bool]) -> f64 {
        if self.sentinel.iter().zip(f).any(|(s, c)| *s && !*c) {
            return f64::INFINITY;
        }
        let lat = &self.lattice;
        let mut s = 0.0;
        for i in 0..lat.len() {
            if f[i] {
                continue;
            }
            s += lat.node_weight(i) * self.v[i];
            for a in 0..lat.dim() {
                if let Some(j) = lat.neighbor(i, a, true) {
                    if !f[j] {
                        s += lat.edge_weight(i, a) * self.edge[a][i];
                    }
                }
            }
        }
        s * lat.cell_volume()
    }

    /// Magnetic part of [`integral`](Self::integral).
    pub fn magnetic_energy(&self, f: &[bool]) -> f64 {
        let lat = &self.lattice;
        let mut s = 0.0;
        for i in 0..lat.len() {
            if f[i] {
                continue;
            }
            for a in 0..lat.dim() {
                if let Some(j) = lat.neighbor(i, a, true) {
                    if !f[j] {
                        s += lat.edge_weight(i, a) * self.edge[a][i];
                    }
                }
            }
        }
        s * lat.cell_volume()
    }
}

pub fn effective_potential(prob: &CubeProblem, cand: &GaugeCandidate) -> EffectivePotential {
    let lat = prob.lattice();
    let h = lat.h();
    let dim = lat.dim();
    let sentinel = cand.singular.clone();
    let mut edge = vec![vec![0.0; lat.len()]; dim];
    for i in 0..lat.len() {
        for a in 0..dim {
            if let Some(j) = lat.neighbor(i, a, true) {
                edge[a][i] = if sentinel[i] || sentinel[j] {
                    f64::INFINITY
                } else {
                    let t = (cand.increments[a][i] + prob.theta[a][i]) / h;
                    t * t
                };
            }
        }
    }
    let mut node = prob.v.clone();
    for i in 0..lat.len() {
        if sentinel[i] {
            node[i] = f64::INFINITY;
            continue;
        }
        let w = lat.node_weight(i);
        let mut s = 0.0;
        for a in 0..dim {
            if let Some(j) = lat.neighbor(i, a, true) {
                if !sentinel[j] {
                    s += lat.edge_weight(i, a) * edge[a][i];
                }
            }
            if let Some(j) = lat.neighbor(i, a, false) {
                if !sentinel[j] {
                    s += lat.edge_weight(j, a) * edge[a][j];
                }
            }
        }
        node[i] += 0.5 * s / w;
    }
    EffectivePotential {
        lattice: lat.clone(),
        node,
        edge,
        v: prob.v.clone(),
        sentinel,
    }
}

/// Edge weights: trapezoid weight where `keep(i, j)` holds, zero otherwise.
fn edge_weights(lat: &Lattice, keep: impl Fn(usize, usize) -> bool) -> Vec<Vec<f64>> {
    (0..lat.dim())
        .map(|a| {
            (0..lat.len())
                .map(|i| match lat.neighbor(i, a, true) {
                    Some(j) if keep(i, j) => lat.edge_weight(i, a),
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Minimises `Σ_e w_e (φ_j - φ_i + β_e)²` over `φ` on the free nodes, with
/// `φ = fixed` elsewhere. Components of the free set with no weighted edge
/// to a fixed node are pinned at their lowest node.
fn solve_min_phase(
    lat: &Lattice,
    weights: &[Vec<f64>],
    beta: &[Vec<f64>],
    mut free: Vec<bool>,
    fixed: &[f64],
) -> Result<Vec<f64>> {
    let n = lat.len();
    let dim = lat.dim();
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    for start in 0..n {
        if !free[start] || comp[start] != usize::MAX {
            continue;
        }
        comp[start] = start;
        stack.push(start);
        let mut anchored = false;
        while let Some(i) = stack.pop() {
            for a in 0..dim {
                let links = [
                    lat.neighbor(i, a, true).map(|j| (j, weights[a][i])),
                    lat.neighbor(i, a, false).map(|j| (j, weights[a][j])),
                ];
                for (j, w) in links.into_iter().flatten() {
                    if w <= 0.0 {
                        continue;
                    }
                    if !free[j] {
                        anchored = true;
                    } else if comp[j] == usize::MAX {
                        comp[j] = start;
                        stack.push(j);
                    }
                }
            }
        }
        if !anchored {
            free[start] = false;
        }
    }
    let mut g: Vec<f64> = (0..n).map(|i| if free[i] { 0.0 } else { fixed[i] }).collect();
    // pinned nodes take the value 0
    for i in 0..n {
        if comp[i] == i && !free[i] {
            g[i] = 0.0;
        }
    }
    let op = EdgeLaplacian::weighted(lat, weights.to_vec(), free.clone());
    let mut rhs = op.boundary_rhs(&g);
    for i in 0..n {
        for a in 0..dim {
            if let Some(j) = lat.neighbor(i, a, true) {
                let w = weights[a][i];
                if w > 0.0 {
                    let wb = w * beta[a][i];
                    if free[i] {
                        rhs[i] += wb;
                    }
                    if free[j] {
                        rhs[j] -= wb;
                    }
                }
            }
        }
    }
    let unknowns = free.iter().filter(|&&b| b).count();
    let mut x = vec![0.0; n];
    if unknowns > 0 {
        conjugate_gradient(&op, &rhs, &mut x, GAUGE_TOL, 10 * unknowns + 100)?;
    }
    for i in 0..n {
        if !free[i] {
            x[i] = g[i];
        }
    }
    Ok(x)
}

fn phase_energy(lat: &Lattice, weights: &[Vec<f64>], beta: &[Vec<f64>], phi: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..lat.len() {
        for a in 0..lat.dim() {
            if let Some(j) = lat.neighbor(i, a, true) {
                let w = weights[a][i];
                if w > 0.0 {
                    let t = phi[j] - phi[i] + beta[a][i];
                    s += w * t * t;
                }
            }
        }
    }
    s * lat.h().powi(lat.dim() as i32 - 2)
}

/// A bounded component of a planar carved set.
#[derive(Clone, Debug)]
pub struct Hole {
    pub nodes: Vec<usize>,
    pub center_node: usize,
}

/// Components of `f` (corner-connected) that do not touch the cube
/// boundary. Only meaningful in two dimensions; empty otherwise.
pub fn find_holes(lat: &Lattice, f: &[bool]) -> Vec<Hole> {
    if lat.dim() != 2 {
        return Vec::new();
    }
    let (label, count) = label_components(lat, f, true);
    let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); count];
    let mut touches = vec![false; count];
    for i in 0..lat.len() {
        if label[i] != usize::MAX {
            nodes[label[i]].push(i);
            if lat.on_boundary(i) {
                touches[label[i]] = true;
            }
        }
    }
    nodes
        .into_iter()
        .zip(touches)
        .filter(|(_, t)| !t)
        .map(|(nodes, _)| {
            let k = nodes.len() as f64;
            let mut c = [0.0; 3];
            for &i in &nodes {
                let x = lat.coords(i);
                c[0] += x[0] / k;
                c[1] += x[1] / k;
            }
            let center_node = *nodes
                .iter()
                .min_by(|&&p, &&q| {
                    let dp = dist2(&lat.coords(p), &c);
                    let dq = dist2(&lat.coords(q), &c);
                    dp.partial_cmp(&dq).unwrap().then(p.cmp(&q))
                })
                .expect("component is nonempty");
            Hole { nodes, center_node }
        })
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_angle(t: f64) -> f64 {
    let mut x = t % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Edge increments of the polar angle about `center` (shortest angular
/// increment); NaN on edges touching `center_node`.
pub fn angle_form(lat: &Lattice, center: &[f64; 3], center_node: Option<usize>) -> Vec<Vec<f64>> {
    let ang = |i: usize| {
        let x = lat.coords(i);
        (x[1] - center[1]).atan2(x[0] - center[0])
    };
    (0..lat.dim())
        .map(|a| {
            (0..lat.len())
                .map(|i| match lat.neighbor(i, a, true) {
                    Some(j) if Some(i) != center_node && Some(j) != center_node => wrap_angle(ang(j) - ang(i)),
                    Some(_) => f64::NAN,
                    None => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Circulation of edge values around the face of the planar graph
/// `Q ∖ F` that contains hole `hole` (counter-clockwise). Only edges with
/// both ends outside `F` contribute.
pub fn hole_circulation(lat: &Lattice, f: &[bool], hole: &Hole, values: &[Vec<f64>]) -> f64 {
    let nx = lat.extent(0);
    let ny = lat.extent(1);
    let mut in_hole = vec![false; lat.len()];
    for &i in &hole.nodes {
        in_hole[i] = true;
    }
    let mut seen = vec![false; lat.len()];
    let mut s = 0.0;
    for &c in &hole.nodes {
        let m = lat.multi_index(c);
        // the four plaquettes having `c` as a corner, by lower corner
        for (dx, dy) in [(0i64, 0i64), (-1, 0), (0, -1), (-1, -1)] {
            let px = m[0] as i64 + dx;
            let py = m[1] as i64 + dy;
            if px < 0 || py < 0 || px as usize + 1 >= nx || py as usize + 1 >= ny {
                continue;
            }
            let p = lat.index([px as usize, py as usize, 0]);
            if seen[p] {
                continue;
            }
            seen[p] = true;
            let pe = p + 1;
            let pn = p + nx;
            let pne = pn + 1;
            let active = |i: usize, j: usize| !f[i] && !f[j];
            if active(p, pe) {
                s += values[0][p];
            }
            if active(pe, pne) {
                s += values[1][pe];
            }
            if active(pn, pne) {
                s -= values[0][pn];
            }
            if active(p, pn) {
                s -= values[1][p];
            }
        }
    }
    s
}

/// `-round(flux / 2π)` with exact half-integers resolved to the smaller
/// magnitude, then to the negative value.
pub fn quantize_winding(flux: f64) -> i64 {
    let x = -flux / (2.0 * PI);
    let fl = x.floor();
    let frac = x - fl;
    if (frac - 0.5).abs() <= 1e-9 {
        let a = fl as i64;
        let b = a + 1;
        if a.abs() < b.abs() {
            a
        } else if b.abs() < a.abs() {
            b
        } else {
            a.min(b)
        }
    } else {
        x.round() as i64
    }
}

struct Sectors<'a> {
    prob: &'a CubeProblem,
    f: &'a [bool],
    holes: Vec<Hole>,
    forms: Vec<Vec<Vec<f64>>>,
    weights: Vec<Vec<f64>>,
}

impl<'a> Sectors<'a> {
    fn new(prob: &'a CubeProblem, f: &'a [bool]) -> Result<Self> {
        let lat = prob.lattice();
        let holes = find_holes(lat, f);
        if holes.len() > MAX_HOLES {
            return Err(Error::TooManyHoles(holes.len()));
        }
        let forms = holes
            .iter()
            .map(|h| angle_form(lat, &lat.coords(h.center_node), Some(h.center_node)))
            .collect();
        let weights = edge_weights(lat, |i, j| !f[i] && !f[j]);
        Ok(Self {
            prob,
            f,
            holes,
            forms,
            weights,
        })
    }

    /// `θ + Σ m_k dϑ_k`, skipping zero windings.
    fn beta(&self, m: &[i64]) -> Vec<Vec<f64>> {
        let mut beta = self.prob.theta.clone();
        for (k, &mk) in m.iter().enumerate() {
            if mk == 0 {
                continue;
            }
            for (b, form) in beta.iter_mut().zip(&self.forms[k]) {
                for (bi, fi) in b.iter_mut().zip(form) {
                    if !fi.is_nan() {
                        *bi += mk as f64 * fi;
                    }
                }
            }
        }
        beta
    }

    fn solve(&self, m: &[i64]) -> Result<(f64, Vec<f64>)> {
        let lat = self.prob.lattice();
        let beta = self.beta(m);
        let free: Vec<bool> = self.f.iter().map(|b| !b).collect();
        let phi = solve_min_phase(lat, &self.weights, &beta, free, &vec![0.0; lat.len()])?;
        Ok((phase_energy(lat, &self.weights, &beta, &phi), phi))
    }

    fn fluxes(&self) -> Vec<f64> {
        let lat = self.prob.lattice();
        self.holes
            .iter()
            .map(|h| hole_circulation(lat, self.f, h, &self.prob.theta))
            .collect()
    }

    /// Extends `φ` into `F`, assembles the candidate.
    fn finish(&self, m: &[i64], fluxes: &[f64], energy: f64, phi: Vec<f64>) -> Result<GaugeCandidate> {
        let lat = self.prob.lattice();
        let n = lat.len();
        let mut singular = vec![false; n];
        for (h, &mk) in self.holes.iter().zip(m) {
            if mk != 0 {
                singular[h.center_node] = true;
            }
        }
        let beta = self.beta(m);
        let f = self.f;
        let ext_w = edge_weights(lat, |i, j| !singular[i] && !singular[j] && (f[i] || f[j]));
        let free: Vec<bool> = (0..n).map(|i| f[i] && !singular[i]).collect();
        let phi = if free.iter().any(|&b| b) {
            solve_min_phase(lat, &ext_w, &beta, free, &phi)?
        } else {
            phi
        };
        let mut increments = vec![vec![0.0; n]; lat.dim()];
        for i in 0..n {
            for a in 0..lat.dim() {
                if let Some(j) = lat.neighbor(i, a, true) {
                    increments[a][i] = if singular[i] || singular[j] {
                        f64::NAN
                    } else {
                        phi[j] - phi[i] + beta[a][i] - self.prob.theta[a][i]
                    };
                }
            }
        }
        let winding = self
            .holes
            .iter()
            .zip(m)
            .zip(fluxes)
            .map(|((h, &mk), &flux)| Winding {
                center_node: h.center_node,
                center: lat.coords(h.center_node),
                flux,
                m: mk,
            })
            .collect();
        Ok(GaugeCandidate {
            kind: GaugeKind::OptimizedPhase,
            increments,
            singular,
            winding,
            poly_coeffs: Vec::new(),
            poly_exponents: Vec::new(),
            zero_cells: Vec::new(),
            energy: Some(energy),
            optimized_on: io::mask_runs(f),
        })
    }
}

/// Minimises `∫_{Q∖F} |∇φ + a|²` over single-valued phases plus integer
/// windings about every hole of `F` (two dimensions only).
pub fn optimize_gauge(prob: &CubeProblem, f: &CompactSet) -> Result<GaugeCandidate> {
    let sectors = Sectors::new(prob, f.member())?;
    let fluxes = sectors.fluxes();
    let mut m: Vec<i64> = fluxes.iter().map(|&p| quantize_winding(p)).collect();
    let (mut energy, mut phi) = sectors.solve(&m)?;
    // local search over neighbouring sectors; strict improvement only
    for _ in 0..4 {
        let mut improved = false;
        for k in 0..m.len() {
            for delta in [-1i64, 1] {
                let mut trial = m.clone();
                trial[k] += delta;
                let (e, p) = sectors.solve(&trial)?;
                if e < energy * (1.0 - 1e-9) - 1e-14 {
                    m = trial;
                    energy = e;
                    phi = p;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    sectors.finish(&m, &fluxes, energy, phi)
}

/// The optimal single-valued phase with the windings about the holes of
/// `F` forced to `m` (in hole order).
pub fn gauge_with_windings(prob: &CubeProblem, f: &CompactSet, m: &[i64]) -> Result<GaugeCandidate> {
    let sectors = Sectors::new(prob, f.member())?;
    if m.len() != sectors.holes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} windings given for {} holes",
            m.len(),
            sectors.holes.len()
        )));
    }
    let fluxes = sectors.fluxes();
    let (energy, phi) = sectors.solve(m)?;
    sectors.finish(m, &fluxes, energy, phi)
}

/// Discrete divergence of `∇φ + a` at the nodes of `Q ∖ F` (Euclidean norm).
pub fn divergence_residual(prob: &CubeProblem, cand: &GaugeCandidate, f: &[bool]) -> f64 {
    let lat = prob.lattice();
    let w = edge_weights(lat, |i, j| !f[i] && !f[j]);
    let mut div = vec![0.0; lat.len()];
    for i in 0..lat.len() {
        for a in 0..lat.dim() {
            if let Some(j) = lat.neighbor(i, a, true) {
                if w[a][i] > 0.0 {
                    let t = w[a][i] * (cand.increments[a][i] + prob.theta[a][i]);
                    div[i] += t;
                    div[j] -= t;
                }
            }
        }
    }
    div.iter().map(|d| d * d).sum::<f64>().sqrt()
}

/// Exponents of all monomials of total degree ≤ 3 in `dim` variables,
/// constant first.
pub fn monomials(dim: usize) -> Vec<[u8; 3]> {
    let mut out = Vec::new();
    for deg in 0..=3u8 {
        for e0 in (0..=deg).rev() {
            for e1 in (0..=deg - e0).rev() {
                let e2 = deg - e0 - e1;
                let e = [e0, e1, e2];
                if (dim..3).all(|a| e[a] == 0) {
                    out.push(e);
                }
            }
        }
    }
    out
}

fn local_coords(cube: &CubeWindow, x: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for a in 0..cube.dim() {
        y[a] = (x[a] - cube.center[a]) / cube.d;
    }
    y
}

fn eval_poly(exps: &[[u8; 3]], coeffs: &[Complex64], y: &[f64; 3]) -> Complex64 {
    exps.iter()
        .zip(coeffs)
        .map(|(e, c)| c * (y[0].powi(e[0] as i32) * y[1].powi(e[1] as i32) * y[2].powi(e[2] as i32)))
        .sum()
}

fn eval_poly_grad(exps: &[[u8; 3]], coeffs: &[Complex64], y: &[f64; 3]) -> [Complex64; 3] {
    let mut g = [Complex64::new(0.0, 0.0); 3];
    for (e, c) in exps.iter().zip(coeffs) {
        for a in 0..3 {
            if e[a] == 0 {
                continue;
            }
            let mut t = e[a] as f64;
            for b in 0..3 {
                let p = if a == b { e[b] as i32 - 1 } else { e[b] as i32 };
                t *= y[b].powi(p);
            }
            g[a] += c * t;
        }
    }
    g
}

/// Builds the polynomial gauge `P / |P|` on a cube: phase increments
/// `arg(P_j / P_i)`, zero cells found by plaquette winding, and their
/// corners marked singular.
pub fn polynomial_candidate(cube: &CubeWindow, exps: &[[u8; 3]], coeffs: &[Complex64]) -> Result<GaugeCandidate> {
    let lat = cube.local_lattice();
    let n = lat.len();
    let dim = lat.dim();
    let vals: Vec<Complex64> = (0..n)
        .map(|i| eval_poly(exps, coeffs, &local_coords(cube, &lat.coords(i))))
        .collect();
    let mut singular: Vec<bool> = vals.iter().map(|p| p.norm() == 0.0).collect();
    let mut increments = vec![vec![0.0; n]; dim];
    for i in 0..n {
        for a in 0..dim {
            if let Some(j) = lat.neighbor(i, a, true) {
                increments[a][i] = if singular[i] || singular[j] {
                    f64::NAN
                } else {
                    (vals[j] / vals[i]).arg()
                };
            }
        }
    }
    let mut zero_cells = Vec::new();
    if dim >= 2 {
        let planes: &[[usize; 2]] = if dim == 2 { &[[0, 1]] } else { &[[0, 1], [0, 2], [1, 2]] };
        for &[a, b] in planes {
            for p in 0..n {
                let (Some(pa), Some(pb)) = (lat.neighbor(p, a, true), lat.neighbor(p, b, true)) else {
                    continue;
                };
                let loop_sum = increments[a][p] + increments[b][pa] - increments[a][pb] - increments[b][p];
                if loop_sum.is_nan() {
                    continue;
                }
                let w = (loop_sum / (2.0 * PI)).round() as i64;
                if w != 0 {
                    zero_cells.push(ZeroCell {
                        corner: p,
                        axes: [a, b],
                        winding: w,
                    });
                }
            }
        }
    }
    for z in &zero_cells {
        let [a, b] = z.axes;
        let pa = lat.neighbor(z.corner, a, true).expect("corner");
        let pb = lat.neighbor(z.corner, b, true).expect("corner");
        let pab = lat.neighbor(pa, b, true).expect("corner");
        for c in [z.corner, pa, pb, pab] {
            singular[c] = true;
        }
    }
    for i in 0..n {
        for a in 0..dim {
            if let Some(j) = lat.neighbor(i, a, true) {
                if singular[i] || singular[j] {
                    increments[a][i] = f64::NAN;
                }
            }
        }
    }
    Ok(GaugeCandidate {
        kind: GaugeKind::Polynomial,
        increments,
        singular,
        winding: Vec::new(),
        poly_coeffs: coeffs.to_vec(),
        poly_exponents: exps.to_vec(),
        zero_cells,
        energy: None,
        optimized_on: Vec::new(),
    })
}

/// Smallest angle between `∇Re P` and `∇Im P` over the centres of the zero
/// cells (`π/2` when there are none).
pub fn genericity_angle(cube: &CubeWindow, cand: &GaugeCandidate) -> f64 {
    let lat = cube.local_lattice();
    let mut worst = PI / 2.0;
    for z in &cand.zero_cells {
        let mut x = lat.coords(z.corner);
        for &a in &z.axes {
            x[a] += 0.5 * lat.h();
        }
        let g = eval_poly_grad(&cand.poly_exponents, &cand.poly_coeffs, &local_coords(cube, &x));
        let re: Vec<f64> = g.iter().map(|c| c.re).collect();
        let im: Vec<f64> = g.iter().map(|c| c.im).collect();
        let rr: f64 = re.iter().map(|v| v * v).sum();
        let ii: f64 = im.iter().map(|v| v * v).sum();
        let ri: f64 = re.iter().zip(&im).map(|(a, b)| a * b).sum();
        let angle = if rr == 0.0 || ii == 0.0 {
            0.0
        } else {
            let s2 = ((rr * ii - ri * ri) / (rr * ii)).max(0.0);
            s2.sqrt().min(1.0).asin()
        };
        worst = worst.min(angle);
    }
    worst
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `budget` polynomial gauges of degree ≤ 3: first `P ≡ 1`, then random
/// standard complex normal coefficients, with the constant term shifted by
/// fresh draws until the zero set passes the genericity check.
pub fn sample_polynomial_gauges(cube: &CubeWindow, budget: usize, seed: u64) -> Result<Vec<GaugeCandidate>> {
    let exps = monomials(cube.dim());
    let mut out = Vec::with_capacity(budget);
    if budget == 0 {
        return Ok(out);
    }
    out.push(polynomial_candidate(cube, &exps[..1], &[Complex64::new(1.0, 0.0)])?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 1..budget {
        let mut coeffs: Vec<Complex64> = exps.iter().map(|_| complex_normal(&mut rng)).collect();
        let mut accepted = None;
        for _ in 0..MAX_RESAMPLES {
            let cand = polynomial_candidate(cube, &exps, &coeffs)?;
            if genericity_angle(cube, &cand) >= GENERIC_ANGLE {
                accepted = Some(cand);
                break;
            }
            coeffs[0] += complex_normal(&mut rng);
        }
        out.push(accepted.ok_or(Error::NotGeneric(MAX_RESAMPLES))?);
    }
    Ok(out)
}

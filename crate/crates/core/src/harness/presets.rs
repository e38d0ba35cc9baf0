//! Named test problems with known or expected behaviour.
//!
//! Each preset has a natural length scale `ℓ`; the mesh width is `h·ℓ`
//! where `h` is the relative mesh width (per-preset default, or the
//! override passed to [`build`]).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diameter::dyadic_grid;
use crate::error::{Error, Result};
use crate::fibered::FiberedProblem;
use crate::gauge::wrap_angle;
use crate::grid::{DomainMask, Lattice, ScalarField, VectorField};
use crate::problem::Problem;

pub const CATALOG: &[&str] = &[
    "free",
    "const-1",
    "const-4",
    "const-16",
    "harmonic",
    "harmonic-exterior",
    "landau-1",
    "landau-2",
    "ab-half",
    "ab-pi",
    "punctured-lattice",
    "strip",
    "shifted-oscillator",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Follows directly from the definitions.
    Trivial,
    /// Closed-form value of the continuum problem.
    Derived,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Lambda,
    Diameter,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Oracle {
    pub kind: OracleKind,
    pub quantity: Quantity,
    #[serde(with = "crate::serde_f64")]
    pub value: f64,
    /// Relative tolerance; absolute when `value` is zero.
    pub tol: f64,
    pub note: String,
}

impl Oracle {
    fn new(kind: OracleKind, quantity: Quantity, value: f64, tol: f64, note: &str) -> Self {
        Self {
            kind,
            quantity,
            value,
            tol,
            note: note.to_string(),
        }
    }

    pub fn accepts(&self, got: f64) -> bool {
        if self.value.is_infinite() || got.is_infinite() {
            return self.value == got;
        }
        if self.value == 0.0 {
            return got.abs() <= self.tol;
        }
        (got - self.value).abs() <= self.tol * self.value.abs()
    }
}

/// A preset realised on a lattice.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub problem: Problem,
    /// Relative mesh width used.
    pub h_rel: f64,
    pub length_scale: f64,
    pub d_grid: Vec<usize>,
    /// Sweep one period per axis (in cells, 0 = whole axis).
    pub period: Option<[usize; 3]>,
    pub center: [f64; 3],
    pub radii: Vec<f64>,
    /// Exterior diameters are expected to shrink to zero.
    pub discrete: bool,
    pub oracles: Vec<Oracle>,
    pub fibered: Option<FiberedProblem>,
}

fn default_h(name: &str) -> Option<f64> {
    Some(match name {
        "free" | "const-1" | "const-4" | "const-16" => 1.0 / 8.0,
        "harmonic" | "harmonic-exterior" => 0.15,
        "landau-1" | "landau-2" => 0.25,
        "ab-half" | "ab-pi" => 1.0 / 32.0,
        "punctured-lattice" | "shifted-oscillator" => 1.0 / 16.0,
        "strip" => 1.0 / 32.0,
        _ => return None,
    })
}

pub fn is_known(name: &str) -> bool {
    CATALOG.contains(&name)
}

fn cells(len: f64, h: f64) -> Result<usize> {
    let n = (len / h).round();
    if n < 4.0 || ((len / h) - n).abs() > 1e-6 * n {
        return Err(Error::InvalidArgument(format!("mesh width {h} does not divide length {len}")));
    }
    Ok(n as usize)
}

fn torus(len: f64, h: f64) -> Result<Lattice> {
    let n = cells(len, h)?;
    Lattice::new(&[n, n], h, &[-0.5 * len, -0.5 * len])?
        .with_periodic(0, true)?
        .with_periodic(1, true)
}

fn open_box(half: f64, h: f64) -> Result<(Lattice, DomainMask)> {
    let n = cells(2.0 * half, h)?;
    let lat = Lattice::new(&[n + 1, n + 1], h, &[-half, -half])?;
    let om = DomainMask::interior_of(&lat, |x| x[0].abs() < half && x[1].abs() < half);
    Ok((lat, om))
}

/// Dyadic edges up to the largest cube that fits, which is always tested.
fn auto_grid(lat: &Lattice, min_cells: usize) -> Vec<usize> {
    let max = (0..lat.dim()).map(|a| lat.extent(a) - 1).min().unwrap_or(0);
    let mut g = dyadic_grid(min_cells, max);
    if g.last().is_some_and(|&c| c < max) {
        g.push(max);
    }
    g
}

/// Edge values `a_e` whose phases `h a_e` are `flux/2π` times the angle
/// swept about `center`.
fn flux_tube(lat: &Lattice, center: [f64; 2], flux: f64) -> Vec<Vec<f64>> {
    let h = lat.h();
    let angle = |x: &[f64; 3]| (x[1] - center[1]).atan2(x[0] - center[0]);
    (0..lat.dim())
        .map(|a| {
            (0..lat.len())
                .map(|i| match lat.neighbor(i, a, true) {
                    Some(j) => flux / (2.0 * PI) * wrap_angle(angle(&lat.coords(j)) - angle(&lat.coords(i))) / h,
                    None => 0.0,
                })
                .collect()
        })
        .collect()
}

pub fn build(name: &str, h_override: Option<f64>) -> Result<Instance> {
    let h_rel = match (h_override, default_h(name)) {
        (_, None) => return Err(Error::UnknownPreset(name.to_string())),
        (Some(h), _) if !(h > 0.0 && h < 1.0) => {
            return Err(Error::InvalidArgument(format!("relative mesh width {h} not in (0, 1)")))
        }
        (Some(h), _) => h,
        (None, Some(h)) => h,
    };
    let mut inst = match name {
        "free" => {
            let lat = torus(8.0, h_rel)?;
            let p = Problem::new(DomainMask::full(&lat), VectorField::zeros(&lat), ScalarField::zeros(&lat))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                period: Some([1, 1, 0]),
                radii: vec![1.0, 2.0],
                oracles: vec![
                    Oracle::new(OracleKind::Trivial, Quantity::Lambda, 0.0, 1e-8, "constants on the torus"),
                    Oracle::new(OracleKind::Trivial, Quantity::Diameter, f64::INFINITY, 0.0, "every cube qualifies"),
                ],
                ..Instance::plain(name, p, h_rel, 1.0)
            }
        }
        "const-1" | "const-4" | "const-16" => {
            let c: f64 = name[6..].parse().expect("catalog name");
            let ell = c.powf(-0.5);
            let lat = torus(8.0 * ell, h_rel * ell)?;
            let p = Problem::new(DomainMask::full(&lat), VectorField::zeros(&lat), ScalarField::from_fn(&lat, |_| c))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                period: Some([1, 1, 0]),
                radii: vec![0.5 * ell, ell],
                oracles: vec![Oracle::new(OracleKind::Trivial, Quantity::Lambda, c, 1e-6, "constants on the torus")],
                ..Instance::plain(name, p, h_rel, ell)
            }
        }
        "harmonic" | "harmonic-exterior" => {
            let (lat, mut om) = open_box(9.0, h_rel)?;
            let exterior = name == "harmonic-exterior";
            if exterior {
                om = om.without_ball(&[0.0; 3], 2.0);
            }
            let p = Problem::new(om, VectorField::zeros(&lat), ScalarField::from_fn(&lat, |x| x[0] * x[0] + x[1] * x[1]))?;
            let mut oracles = Vec::new();
            if !exterior {
                oracles.push(Oracle::new(OracleKind::Derived, Quantity::Lambda, 2.0, 0.01, "ground state exp(-|x|²/2)"));
            }
            Instance {
                d_grid: auto_grid(&lat, 1),
                radii: if exterior { vec![2.5, 4.0, 6.0] } else { vec![1.0, 2.0, 4.0, 6.0, 8.0] },
                discrete: true,
                oracles,
                ..Instance::plain(name, p, h_rel, 1.0)
            }
        }
        "landau-1" | "landau-2" => {
            let b: f64 = name[7..].parse().expect("catalog name");
            let ell = b.powf(-0.5);
            let (lat, om) = open_box(8.0 * ell, h_rel * ell)?;
            let a = VectorField::from_edge_fn(&lat, |x, ax| if ax == 0 { -0.5 * b * x[1] } else { 0.5 * b * x[0] });
            let p = Problem::new(om, a, ScalarField::zeros(&lat))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                radii: vec![ell, 2.0 * ell, 4.0 * ell],
                oracles: vec![Oracle::new(OracleKind::Derived, Quantity::Lambda, b, 0.02, "lowest Landau level")],
                ..Instance::plain(name, p, h_rel, ell)
            }
        }
        "ab-half" | "ab-pi" => {
            let flux = if name == "ab-pi" { PI } else { 0.5 * PI };
            let (lat, om) = open_box(1.0, h_rel)?;
            let om = om.without_ball(&[0.0; 3], 0.2);
            let a = VectorField::new(lat.clone(), flux_tube(&lat, [0.0, 0.0], flux))?;
            let p = Problem::new(om, a, ScalarField::zeros(&lat))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                radii: vec![0.5, 1.0, 1.5],
                ..Instance::plain(name, p, h_rel, 1.0)
            }
        }
        "punctured-lattice" => {
            // holes of radius 1/4 at (±1, ±1) on a torus of side 4; each
            // pair on a row is joined by a cut carrying phase π, so every
            // hole encloses flux π
            let lat = torus(4.0, h_rel)?;
            let holes = [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]];
            let om = DomainMask::from_fn(&lat, |x| {
                holes.iter().all(|c| (x[0] - c[0]).hypot(x[1] - c[1]) > 0.25)
            });
            let h = lat.h();
            let a = VectorField::from_edge_fn(&lat, |x, ax| {
                if ax != 1 || x[0] <= -1.0 || x[0] >= 1.0 {
                    return 0.0;
                }
                let crosses = |y: f64| x[1] < y && x[1] + h > y;
                if crosses(-1.0 + 0.5 * h) || crosses(1.0 + 0.5 * h) {
                    PI / h
                } else {
                    0.0
                }
            });
            let p = Problem::new(om, a, ScalarField::zeros(&lat))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                radii: vec![0.5, 0.75],
                ..Instance::plain(name, p, h_rel, 1.0)
            }
        }
        "strip" => {
            let n = cells(1.0, h_rel)?;
            let m = cells(4.0, h_rel)?;
            let lat = Lattice::new(&[m, n + 1], h_rel, &[-2.0, -0.5])?.with_periodic(0, true)?;
            let om = DomainMask::interior_of(&lat, |x| x[1].abs() < 0.5);
            let p = Problem::new(om, VectorField::zeros(&lat), ScalarField::zeros(&lat))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                period: Some([1, 0, 0]),
                radii: vec![0.25, 0.5, 1.0],
                oracles: vec![Oracle::new(OracleKind::Derived, Quantity::Lambda, PI * PI, 0.01, "π²/w² for width w = 1")],
                ..Instance::plain(name, p, h_rel, 1.0)
            }
        }
        "shifted-oscillator" => {
            let n = cells(12.0, h_rel)?;
            let m = cells(4.0, h_rel)?;
            let lat = Lattice::new(&[n + 1, m], h_rel, &[-6.0, -2.0])?.with_periodic(1, true)?;
            let om = DomainMask::interior_of(&lat, |x| x[0].abs() < 6.0);
            let a = VectorField::from_edge_fn(&lat, |x, ax| if ax == 1 { x[0] } else { 0.0 });
            let p = Problem::new(om, a, ScalarField::zeros(&lat))?;
            let fl = Lattice::new(&[n + 1], h_rel, &[-6.0])?;
            let fom = DomainMask::interior_of(&fl, |x| x[0].abs() < 6.0);
            let fib = FiberedProblem::new(fom, ScalarField::from_fn(&fl, |x| x[0]), ScalarField::zeros(&fl))?;
            Instance {
                d_grid: auto_grid(&lat, 2),
                period: Some([0, 1, 0]),
                radii: vec![1.0, 2.0, 4.0],
                oracles: vec![Oracle::new(OracleKind::Derived, Quantity::Lambda, 1.0, 0.02, "fibers are shifted oscillators")],
                fibered: Some(fib),
                ..Instance::plain(name, p, h_rel, 1.0)
            }
        }
        _ => unreachable!("checked above"),
    };
    inst.d_grid.retain(|&c| c >= 1);
    Ok(inst)
}

impl Instance {
    fn plain(name: &str, problem: Problem, h_rel: f64, length_scale: f64) -> Self {
        Self {
            name: name.to_string(),
            problem,
            h_rel,
            length_scale,
            d_grid: Vec::new(),
            period: None,
            center: [0.0; 3],
            radii: Vec::new(),
            discrete: false,
            oracles: Vec::new(),
            fibered: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_catalog_entry_builds() {
        for name in CATALOG {
            let inst = build(name, None).unwrap();
            assert!(!inst.d_grid.is_empty(), "{name}");
            assert!(inst.problem.omega.count() > 0, "{name}");
            assert!(inst.radii.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(build("nope", None).is_err());
    }

    #[test]
    fn flux_tube_circulation() {
        let lat = Lattice::new(&[9, 9], 0.25, &[-1.0, -1.0]).unwrap();
        let a = flux_tube(&lat, [0.0, 0.0], 1.3);
        // counter-clockwise loop around the boundary
        let h = lat.h();
        let mut s = 0.0;
        for k in 0..8 {
            s += h * a[0][lat.index([k, 0, 0])];
            s += h * a[1][lat.index([8, k, 0])];
            s -= h * a[0][lat.index([k, 8, 0])];
            s -= h * a[1][lat.index([0, k, 0])];
        }
        assert!((s - 1.3).abs() < 1e-12, "{s}");
    }

    #[test]
    fn punctured_holes_carry_half_flux() {
        let inst = build("punctured-lattice", None).unwrap();
        let lat = inst.problem.lattice();
        let a = &inst.problem.a;
        let h = lat.h();
        // square loop of half-width 0.5 around the hole at (1, -1)
        let c = [(1.0 + 2.0) / h, (-1.0 + 2.0) / h];
        let (i0, j0, r) = (c[0].round() as usize - 8, c[1].round() as usize - 8, 16);
        let mut s = 0.0;
        for k in 0..r {
            s += h * a.edge(lat.index([i0 + k, j0, 0]), 0);
            s += h * a.edge(lat.index([i0 + r, j0 + k, 0]), 1);
            s -= h * a.edge(lat.index([i0 + k, j0 + r, 0]), 0);
            s -= h * a.edge(lat.index([i0, j0 + k, 0]), 1);
        }
        assert!((wrap_angle(s).abs() - PI).abs() < 1e-9, "{s}");
    }
}

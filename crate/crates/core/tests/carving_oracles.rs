use std::f64::consts::PI;

use proptest::prelude::*;

use capbound_core::capacity::{self, CapacityConfig, CompactSet};
use capbound_core::carving::{joint_min, joint_min_sweep, min_over_f, CarvingConfig};
use capbound_core::gauge::{self, effective_potential, CubeProblem, GaugeCandidate};
use capbound_core::grid::{CubeWindow, Lattice};

fn cube(cells: usize) -> CubeWindow {
    let lat = Lattice::new(&[cells + 1, cells + 1], 1.0 / cells as f64, &[-0.5, -0.5]).unwrap();
    CubeWindow::whole(&lat).unwrap()
}

/// No field, potential `v` on the nodes, `outside` marking `Q ∖ Ω`.
fn scalar_problem(q: &CubeWindow, v: Vec<f64>, outside: Vec<bool>) -> CubeProblem {
    let n = q.local_lattice().len();
    CubeProblem::from_parts(q, vec![vec![0.0; n]; 2], v, outside).unwrap()
}

fn trapezoid_sum(lat: &Lattice, v: &[f64], skip: &[bool]) -> f64 {
    (0..lat.len()).filter(|&i| !skip[i]).map(|i| lat.node_weight(i) * v[i]).sum::<f64>() * lat.cell_volume()
}

#[test]
fn zero_potential_carves_nothing() {
    let q = cube(16);
    let n = q.local_lattice().len();
    let prob = scalar_problem(&q, vec![0.0; n], vec![false; n]);
    let r = joint_min(&prob, &CarvingConfig::default()).unwrap();
    assert!(r.best.feasible);
    assert_eq!(r.best.integral, 0.0);
    assert!(r.best.f.is_empty());
}

#[test]
fn cube_outside_domain_is_infeasible() {
    let q = cube(8);
    let n = q.local_lattice().len();
    let prob = scalar_problem(&q, vec![1.0; n], vec![true; n]);
    let r = joint_min(&prob, &CarvingConfig::default()).unwrap();
    assert!(!r.best.feasible);
    assert!(r.best.integral.is_infinite());
}

#[test]
fn spike_is_carved_first() {
    let q = cube(32);
    let lat = q.local_lattice();
    let n = lat.len();
    let spike = lat.index([16, 16, 0]);
    let mut v = vec![1.0; n];
    v[spike] = 1e6;
    let prob = scalar_problem(&q, v.clone(), vec![false; n]);
    let cfg = CapacityConfig::default();

    let mut single = vec![false; n];
    single[spike] = true;
    let one = capacity::cap(&CompactSet::new(q.clone(), single).unwrap(), &cfg).unwrap();
    let budget = 0.5 * capacity::cube_capacity(&q, &cfg).unwrap();
    assert!(one < budget);

    let eff = effective_potential(&prob, &GaugeCandidate::identity(&lat));
    let c = min_over_f(&eff, &q, &vec![false; n], 0.5, &cfg).unwrap();
    assert!(c.feasible);
    assert!(c.f.contains(spike));
    // the remaining value-1 nodes are tied, so the budget left after the
    // spike goes to some of them; the integral is the weight of the rest
    let expect = trapezoid_sum(&lat, &v, c.f.member());
    assert!((c.integral - expect).abs() <= 1e-9 * expect);
    assert!(c.integral <= 1.0 - lat.node_weight(spike) * lat.cell_volume() + 1e-12);
    assert!(c.integral > 0.0);
}

#[test]
fn without_field_joint_min_is_scalar_carving() {
    let q = cube(16);
    let lat = q.local_lattice();
    let v: Vec<f64> = (0..lat.len()).map(|i| { let x = lat.coords(i); 1.0 + 20.0 * x[0] * x[0] + 5.0 * x[1] }).collect();
    let n = lat.len();
    let prob = scalar_problem(&q, v, vec![false; n]);
    let cfg = CarvingConfig::default();
    let joint = joint_min(&prob, &cfg).unwrap();
    let eff = effective_potential(&prob, &GaugeCandidate::identity(&lat));
    let plain = min_over_f(&eff, &q, &vec![false; n], cfg.gamma, &cfg.capacity).unwrap();
    assert!((joint.best.integral - plain.integral).abs() <= 1e-9 * plain.integral);
}

/// Unit cube with the disk of radius 0.2 outside Ω and flux `alpha` through it.
fn ab_problem(alpha: f64, cells: usize) -> CubeProblem {
    let q = cube(cells);
    let lat = q.local_lattice();
    let theta: Vec<Vec<f64>> = (0..2)
        .map(|a| {
            (0..lat.len())
                .map(|i| match lat.neighbor(i, a, true) {
                    Some(j) => {
                        let (p, r) = (lat.coords(i), lat.coords(j));
                        if p[0].hypot(p[1]) == 0.0 || r[0].hypot(r[1]) == 0.0 {
                            0.0
                        } else {
                            alpha / (2.0 * PI) * gauge::wrap_angle(r[1].atan2(r[0]) - p[1].atan2(p[0]))
                        }
                    }
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let outside = (0..lat.len()).map(|i| { let x = lat.coords(i); x[0].hypot(x[1]) <= 0.2 }).collect();
    CubeProblem::from_parts(&q, theta, vec![0.0; lat.len()], outside).unwrap()
}

#[test]
fn half_flux_obstructs_while_integer_flux_does_not() {
    // the forced hole uses most of this budget, leaving none for a slit to the boundary
    let cfg = CarvingConfig { gamma: 0.5, ..CarvingConfig::default() };
    let pi = joint_min(&ab_problem(PI, 32), &cfg).unwrap();
    let full = joint_min(&ab_problem(2.0 * PI, 32), &cfg).unwrap();
    assert!(pi.best.feasible && full.best.feasible);
    assert!(full.best.integral < 1e-8, "{}", full.best.integral);
    assert!(pi.best.integral > 100.0 * full.best.integral.max(1e-10), "{}", pi.best.integral);
}

#[test]
fn carving_the_hole_lowers_the_integral() {
    // the same flux with the hole inside Ω: once it is carved the phase can wind
    let p = ab_problem(PI, 32);
    let inside = CubeProblem::from_parts(p.cube(), p.theta().to_vec(), vec![0.0; p.lattice().len()], vec![false; p.lattice().len()]).unwrap();
    let cfg = CarvingConfig { gamma: 0.9, ..CarvingConfig::default() };
    let r = joint_min(&inside, &cfg).unwrap();
    let uncarved = gauge::optimize_gauge(&inside, &CompactSet::empty(inside.cube())).unwrap();
    let whole = effective_potential(&inside, &uncarved).integral(&vec![false; inside.lattice().len()]);
    assert!(r.best.integral < whole, "{} vs {whole}", r.best.integral);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn emitted_sets_are_negligible_and_monotone_in_gamma(
        seed in 0u64..1000,
        hole in 0.0f64..0.15,
        amp in 0.5f64..20.0,
    ) {
        let q = cube(12);
        let lat = q.local_lattice();
        let v: Vec<f64> = (0..lat.len())
            .map(|i| {
                let x = lat.coords(i);
                let s = seed as f64;
                amp * (1.0 + ((s + 3.0) * x[0] + 7.0 * x[1] + s).sin()).powi(2)
            })
            .collect();
        let outside: Vec<bool> = (0..lat.len()).map(|i| { let x = lat.coords(i); x[0].hypot(x[1]) < hole }).collect();
        let prob = scalar_problem(&q, v, outside.clone());
        let gammas = [0.1, 0.3, 0.5, 0.9];
        let runs = joint_min_sweep(&prob, &CarvingConfig { seed, ..CarvingConfig::default() }, &gammas).unwrap();
        let cfg = CapacityConfig::default();
        for (g, r) in gammas.iter().zip(&runs) {
            for c in std::iter::once(&r.best).chain(std::iter::once(&r.optimized)).chain(r.polynomial.iter()) {
                if c.feasible {
                    prop_assert!(capacity::is_negligible(&c.f, *g, &cfg).unwrap());
                    prop_assert!(outside.iter().enumerate().all(|(i, &o)| !o || c.f.contains(i)));
                }
            }
        }
        for w in runs.windows(2) {
            prop_assert!(w[1].best.integral <= w[0].best.integral);
        }
    }
}

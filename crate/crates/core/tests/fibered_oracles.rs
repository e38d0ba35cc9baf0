use std::time::Instant;

use capbound_core::diameter::{dyadic_grid, SweepConfig};
use capbound_core::fibered::{fiber_bottom, fibered_diameter, infimum_over_fibers, FiberedProblem};
use capbound_core::grid::{DomainMask, Lattice, ScalarField};
use capbound_core::spectrum::{bottom, EigenConfig};

fn line(half: f64, h: f64) -> (Lattice, DomainMask) {
    let cells = (2.0 * half / h).round() as usize;
    let lat = Lattice::new(&[cells + 1], h, &[-half]).unwrap();
    let om = DomainMask::interior_of(&lat, |x| x[0].abs() < half);
    (lat, om)
}

fn shifted_oscillator(h: f64) -> FiberedProblem {
    let (lat, om) = line(6.0, h);
    FiberedProblem::new(om, ScalarField::from_fn(&lat, |x| x[0]), ScalarField::zeros(&lat)).unwrap()
}

#[test]
fn shifted_oscillator_fibers_and_strip_agree() {
    let t = Instant::now();
    let cfg = EigenConfig::default();
    let p = shifted_oscillator(1.0 / 64.0);
    let curve = infimum_over_fibers(&p, &cfg).unwrap();
    assert!((curve.lambda - 1.0).abs() <= 0.02, "λ = {}", curve.lambda);
    for l in &curve.lambda_mu {
        assert!(curve.lambda <= *l);
    }
    // flat where the shifted well sits well inside the box
    for (m, l) in curve.mu.iter().zip(&curve.lambda_mu) {
        if m.abs() < 2.0 {
            assert!((l - 1.0).abs() < 0.01, "λ({m}) = {l}");
        }
    }
    let strip = bottom(&p.periodic_strip(64).unwrap(), &cfg).unwrap();
    assert!((strip.lambda - curve.lambda).abs() <= 0.02 * curve.lambda, "{} vs {}", strip.lambda, curve.lambda);
    assert!(t.elapsed().as_secs() < 300);
}

#[test]
fn oscillator_fiber_is_shifted_by_mu_squared() {
    let (lat, om) = line(6.0, 6.0 / 128.0);
    let p = FiberedProblem::new(om, ScalarField::zeros(&lat), ScalarField::from_fn(&lat, |x| x[0] * x[0]))
        .unwrap()
        .with_mu_grid((0..17).map(|k| -2.0 + 0.25 * k as f64).collect())
        .unwrap();
    let cfg = EigenConfig::default();
    let curve = infimum_over_fibers(&p, &cfg).unwrap();
    assert!((curve.lambda - 1.0).abs() < 0.01, "{}", curve.lambda);
    assert!(curve.minimizer.abs() < 1e-3);
    let l0 = fiber_bottom(&p, 0.0, &cfg).unwrap();
    for mu in [0.7, -1.3] {
        let l = fiber_bottom(&p, mu, &cfg).unwrap();
        assert!((l - l0 - mu * mu).abs() < 1e-7);
    }
}

#[test]
fn unbracketed_grid_is_reported() {
    let (lat, om) = line(2.0, 1.0 / 16.0);
    let p = FiberedProblem::new(om, ScalarField::zeros(&lat), ScalarField::zeros(&lat))
        .unwrap()
        .with_mu_grid(vec![0.5, 1.0, 1.5, 2.0])
        .unwrap();
    assert!(infimum_over_fibers(&p, &EigenConfig::default()).is_err());
}

#[test]
fn curve_has_no_jumps() {
    let p = shifted_oscillator(1.0 / 16.0);
    let curve = infimum_over_fibers(&p, &EigenConfig::default()).unwrap();
    let slopes: Vec<f64> = curve
        .mu
        .windows(2)
        .zip(curve.lambda_mu.windows(2))
        .map(|(m, l)| (l[1] - l[0]).abs() / (m[1] - m[0]))
        .collect();
    for w in slopes.windows(3) {
        let local = w[0].max(w[2]).max(1e-3);
        assert!(w[1] <= 10.0 * local, "{w:?}");
    }
}

#[test]
fn free_fibers_have_infinite_diameter() {
    let (lat, om) = line(4.0, 1.0 / 8.0);
    let p = FiberedProblem::new(om, ScalarField::zeros(&lat), ScalarField::zeros(&lat)).unwrap();
    let r = fibered_diameter(&p, &[-1.0, 0.0, 1.0], &dyadic_grid(2, 32), &SweepConfig::default()).unwrap();
    assert_eq!(r.d_tilde, f64::INFINITY);
    assert_eq!(r.argmax_mu, 0.0);
    assert!(r.diameters[0].d.is_finite() && r.diameters[2].d.is_finite());
}

#[test]
fn dilation_leaves_ratio_invariant() {
    let cfg = EigenConfig::default();
    let sweep = SweepConfig::default();
    let mut ratios = Vec::new();
    for s in [1.0, 2.0] {
        let h = 1.0 / (8.0 * s);
        let (lat, om) = line(4.0 / s, h);
        let p = FiberedProblem::new(om, ScalarField::from_fn(&lat, |x| s * s * x[0]), ScalarField::zeros(&lat)).unwrap();
        let curve = infimum_over_fibers(&p, &cfg).unwrap();
        let mus = [curve.minimizer - 0.5 * s * s, curve.minimizer, curve.minimizer + 0.5 * s * s];
        let d = fibered_diameter(&p, &mus, &dyadic_grid(2, 32), &sweep).unwrap();
        assert!(d.d_tilde.is_finite(), "{:?}", d.d_tilde);
        ratios.push(curve.lambda * d.d_tilde * d.d_tilde);
    }
    assert!((ratios[0] - ratios[1]).abs() <= 0.05 * ratios[0], "{ratios:?}");
}

//! One PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use capbound_core::capacity::{self, CapacityConfig, CompactSet};
use capbound_core::carving::{joint_min_sweep, CarvingConfig};
use capbound_core::fibered::infimum_over_fibers;
use capbound_core::gauge::{self, CubeProblem};
use capbound_core::grid::{CubeWindow, DomainMask, Lattice, ScalarField, VectorField};
use capbound_core::harness::{self, RunConfig, VerifySummary};
use capbound_core::spectrum::galerkin::{galerkin_bottom, GalerkinOperator};
use capbound_core::spectrum::{bottom, EigenConfig, MagneticOperator};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn centered_cube(dim: usize, cells: usize, d: f64) -> CubeWindow {
    let lat = Lattice::new(&vec![cells + 1; dim], d / cells as f64, &vec![-0.5 * d; dim]).unwrap();
    CubeWindow::whole(&lat).unwrap()
}

fn ball(cube: &CubeWindow, r: f64) -> CompactSet {
    CompactSet::from_fn(cube, |x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() <= r + 1e-12)
}

fn ball_capacity() -> Outcome {
    let t = Instant::now();
    let cube = centered_cube(3, 16, 0.5);
    let c = capacity::cap(&ball(&cube, 0.25), &CapacityConfig::default()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    check(
        (c - PI).abs() <= 0.1 * PI && secs < 60.0,
        format!("cap = {c:.4}, 4πr = {PI:.4}, {secs:.1} s"),
    )
}

fn disk_capacity() -> Outcome {
    let d = 1.0;
    let cube = centered_cube(2, 128, d);
    let c = capacity::cap(&ball(&cube, d / 8.0), &CapacityConfig::default()).map_err(|e| e.to_string())?;
    let lo = 2.0 * PI / (8.0 * 2f64.sqrt()).ln();
    let hi = 2.0 * PI / 8f64.ln();
    check(c >= 0.9 * lo && c <= 1.1 * hi, format!("cap = {c:.4} in [{lo:.4}, {hi:.4}] ± 10%"))
}

const R_HOLE: f64 = 0.2;

fn ab_problem(alpha: f64, cells: usize) -> (CubeProblem, CompactSet) {
    let lat = Lattice::new(&[cells + 1, cells + 1], 1.0 / cells as f64, &[-0.5, -0.5]).unwrap();
    let cube = CubeWindow::whole(&lat).unwrap();
    let local = cube.local_lattice();
    let theta: Vec<Vec<f64>> = (0..2)
        .map(|a| {
            (0..local.len())
                .map(|i| match local.neighbor(i, a, true) {
                    Some(j) => {
                        let (p, q) = (local.coords(i), local.coords(j));
                        if p[0].hypot(p[1]) == 0.0 || q[0].hypot(q[1]) == 0.0 {
                            0.0
                        } else {
                            alpha / (2.0 * PI) * gauge::wrap_angle(q[1].atan2(q[0]) - p[1].atan2(p[0]))
                        }
                    }
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let outside: Vec<bool> = (0..local.len())
        .map(|i| {
            let x = local.coords(i);
            x[0].hypot(x[1]) <= R_HOLE
        })
        .collect();
    let prob = CubeProblem::from_parts(&cube, theta, vec![0.0; local.len()], outside.clone()).unwrap();
    (prob, CompactSet::new(cube, outside).unwrap())
}

/// Nearest integer to `-α/2π`, ties to the smaller magnitude.
fn expected_winding(alpha: f64) -> i64 {
    let x = -alpha / (2.0 * PI);
    let (a, b) = (x.floor(), x.ceil());
    if ((x - a) - 0.5).abs() < 1e-9 {
        if a.abs() <= b.abs() {
            a as i64
        } else {
            b as i64
        }
    } else {
        x.round() as i64
    }
}

fn flux_quantization() -> Outcome {
    let cells = 64;
    let (p0, f0) = ab_problem(0.0, cells);
    let w = gauge::gauge_with_windings(&p0, &f0, &[1]).map_err(|e| e.to_string())?.energy.unwrap_or(f64::NAN);
    let mut ok = w > 0.0;
    let mut lines = Vec::new();
    for alpha in [0.3, PI / 2.0, PI, 2.0 * PI - 0.3] {
        let (prob, f) = ab_problem(alpha, cells);
        let g = gauge::optimize_gauge(&prob, &f).map_err(|e| e.to_string())?;
        let m = g.winding.first().map(|w| w.m);
        let dist = (alpha - 2.0 * PI * (alpha / (2.0 * PI)).round()).abs();
        let expect = dist * dist * w / (4.0 * PI * PI);
        let e = g.energy.unwrap_or(f64::NAN);
        let good = m == Some(expected_winding(alpha)) && (e - expect).abs() <= 0.02 * expect;
        ok &= good;
        lines.push(format!("α={alpha:.3}: m={m:?} E={e:.5} want {expect:.5}"));
    }
    check(ok, lines.join("; "))
}

fn random_chi(rng: &mut ChaCha8Rng) -> impl Fn(&[f64; 3]) -> f64 {
    let terms: Vec<[f64; 4]> = (0..4)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI), rng.gen_range(-2.0..2.0)])
        .collect();
    move |x: &[f64; 3]| terms.iter().map(|t| t[3] * (t[0] * x[0] + t[1] * x[1] + t[2]).sin()).sum()
}

fn gauge_invariance() -> Outcome {
    let cfg = EigenConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for (name, h) in [("landau-1", 0.5), ("harmonic", 0.3)] {
        let inst = harness::build(name, Some(h)).map_err(|e| e.to_string())?;
        let op = inst.problem.operator().map_err(|e| e.to_string())?;
        let base = bottom(&op, &cfg).map_err(|e| e.to_string())?.lambda;
        for _ in 0..5 {
            let chi = random_chi(&mut rng);
            let values: Vec<f64> = (0..op.lattice().len()).map(|i| chi(&op.lattice().coords(i))).collect();
            let moved = bottom(&op.gauge_transformed(&values).map_err(|e| e.to_string())?, &cfg)
                .map_err(|e| e.to_string())?
                .lambda;
            worst = worst.max((moved - base).abs() / base);
        }
    }
    check(worst <= 1e-5, format!("max relative change {worst:.2e} over 2 × 5 gauges"))
}

fn open_box(half: f64, cells: usize) -> (Lattice, DomainMask) {
    let lat = Lattice::new(&[cells + 1, cells + 1], 2.0 * half / cells as f64, &[-half, -half]).unwrap();
    let om = DomainMask::interior_of(&lat, |x| x[0].abs() < half && x[1].abs() < half);
    (lat, om)
}

fn spectral_oracles() -> Outcome {
    let cfg = EigenConfig::default();
    let t = Instant::now();
    let lat = Lattice::new(&[129, 129], 1.0 / 128.0, &[0.0, 0.0]).unwrap();
    let om = DomainMask::interior_of(&lat, |x| x[0] > 0.0 && x[0] < 1.0 && x[1] > 0.0 && x[1] < 1.0);
    let sq = MagneticOperator::new(&om, &VectorField::zeros(&lat), &ScalarField::zeros(&lat)).map_err(|e| e.to_string())?;
    let l_sq = bottom(&sq, &cfg).map_err(|e| e.to_string())?.lambda;
    let secs = t.elapsed().as_secs_f64();
    let exact = 2.0 * PI * PI;
    let ok_sq = (l_sq - exact).abs() <= 0.005 * exact && secs < 30.0;

    let (lat, om) = open_box(6.0, 128);
    let v = ScalarField::from_fn(&lat, |x| x[0] * x[0] + x[1] * x[1]);
    let osc = MagneticOperator::new(&om, &VectorField::zeros(&lat), &v).map_err(|e| e.to_string())?;
    let l_osc = bottom(&osc, &cfg).map_err(|e| e.to_string())?.lambda;
    let ok_osc = (l_osc - 2.0).abs() <= 0.02;

    let (lat, om) = open_box(8.0, 64);
    let a = VectorField::from_edge_fn(&lat, |x, ax| if ax == 0 { -0.5 * x[1] } else { 0.5 * x[0] });
    let peierls = MagneticOperator::new(&om, &a, &ScalarField::zeros(&lat)).map_err(|e| e.to_string())?;
    let l_peierls = bottom(&peierls, &cfg).map_err(|e| e.to_string())?.lambda;
    let fem = GalerkinOperator::new(&om, |x| [-0.5 * x[1], 0.5 * x[0]], |_| 0.0).map_err(|e| e.to_string())?;
    let l_fem = galerkin_bottom(&fem, None, &cfg).map_err(|e| e.to_string())?.lambda;
    let ok_landau = l_fem > 1.0 && l_fem < 1.05;

    check(
        ok_sq && ok_osc && ok_landau,
        format!(
            "square {l_sq:.5} vs {exact:.5} ({secs:.1} s); oscillator {l_osc:.5}; \
             Landau conforming {l_fem:.6} (lattice {l_peierls:.6})"
        ),
    )
}

fn persson_monotone(s: &VerifySummary) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for r in &s.reports {
        match &r.persson {
            Some(p) => {
                ok &= p.monotone;
                if !p.monotone {
                    notes.push(format!("{} not monotone {:?}", r.preset, p.values));
                }
            }
            None if harness::build(&r.preset, None).map(|i| i.radii.is_empty()).unwrap_or(false) => {}
            None => {
                ok = false;
                notes.push(format!("{} has no exterior values", r.preset));
            }
        }
    }
    match s.reports.iter().find(|r| r.preset == "harmonic").and_then(|r| r.persson.as_ref()) {
        Some(p) => {
            let (first, last) = (p.values[0], *p.values.last().unwrap());
            ok &= last > 10.0 * first;
            notes.push(format!("harmonic λ_R from {first:.3} to {last:.3}"));
        }
        None => {
            ok = false;
            notes.push("harmonic missing".into());
        }
    }
    check(ok, notes.join("; "))
}

fn two_sided(s: &VerifySummary) -> Outcome {
    let spread = s.constant_family_spread;
    let c = s.c_fit;
    let ok = spread.is_some_and(|x| x <= 0.3) && c.is_some_and(|x| x <= 100.0) && s.pass;
    check(
        ok,
        format!("constant family spread {spread:?}, C = {c:?}, failures {:?}", s.failures),
    )
}

fn fibered() -> Outcome {
    let t = Instant::now();
    let inst = harness::build("shifted-oscillator", Some(1.0 / 64.0)).map_err(|e| e.to_string())?;
    let p = inst.fibered.ok_or("preset carries no fibered problem")?;
    let cfg = EigenConfig::default();
    let curve = infimum_over_fibers(&p, &cfg).map_err(|e| e.to_string())?;
    let strip = bottom(&p.periodic_strip(64).map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?.lambda;
    let secs = t.elapsed().as_secs_f64();
    check(
        (curve.lambda - 1.0).abs() <= 0.02 && (strip - curve.lambda).abs() <= 0.02 * curve.lambda && secs < 300.0,
        format!("inf over fibers {:.5} at μ = {:.3}, strip {strip:.5}, {secs:.1} s", curve.lambda, curve.minimizer),
    )
}

fn carving_soundness(s: &VerifySummary) -> Outcome {
    let cap_cfg = CapacityConfig::default();
    let mut ok = true;
    let mut notes = Vec::new();
    let mut witnesses = 0;
    for r in &s.reports {
        let Some(w) = &r.diameter.witness else { continue };
        let inst = harness::build(&r.preset, None).map_err(|e| e.to_string())?;
        let prob = inst.problem.cube(&w.cube).map_err(|e| e.to_string())?;
        let f = w.set(&prob).map_err(|e| e.to_string())?;
        let neg = capacity::is_negligible(&f, s.gamma, &cap_cfg).map_err(|e| e.to_string())?;
        witnesses += 1;
        if !neg {
            ok = false;
            notes.push(format!("{} witness not negligible", r.preset));
        }
    }
    notes.push(format!("{witnesses} witnesses checked"));
    let gammas = [0.1, 0.3, 0.5, 0.9];
    for name in ["harmonic", "landau-1", "ab-pi", "punctured-lattice"] {
        let inst = harness::build(name, None).map_err(|e| e.to_string())?;
        let lat = inst.problem.lattice();
        let cells = 16.min(lat.extent(0) - 1);
        let lo = [(lat.extent(0) - 1 - cells) / 2, (lat.extent(1) - 1 - cells) / 2, 0];
        let cube = CubeWindow::new(lat, lo, cells).map_err(|e| e.to_string())?;
        let prob = inst.problem.cube(&cube).map_err(|e| e.to_string())?;
        let runs = joint_min_sweep(&prob, &CarvingConfig::default(), &gammas).map_err(|e| e.to_string())?;
        let integrals: Vec<f64> = runs.iter().map(|r| r.best.integral).collect();
        let monotone = integrals.windows(2).all(|w| w[1] <= w[0]);
        let mut sound = true;
        for (g, r) in gammas.iter().zip(&runs) {
            for c in std::iter::once(&r.best).chain(std::iter::once(&r.optimized)).chain(r.polynomial.iter()) {
                if c.feasible {
                    sound &= capacity::is_negligible(&c.f, *g, &cap_cfg).map_err(|e| e.to_string())?;
                }
            }
        }
        ok &= monotone && sound;
        notes.push(format!("{name}: {integrals:.4?}{}", if sound { "" } else { " (unsound)" }));
    }
    check(ok, notes.join("; "))
}

fn determinism() -> Outcome {
    let cfg = RunConfig {
        presets: ["const-1", "ab-pi", "punctured-lattice", "strip"].map(String::from).to_vec(),
        seed: 3,
        ..RunConfig::default()
    };
    let a = harness::verify_two_sided(&cfg).and_then(|s| s.canonical_json()).map_err(|e| e.to_string())?;
    let b = harness::verify_two_sided(&cfg).and_then(|s| s.canonical_json()).map_err(|e| e.to_string())?;
    check(a == b, format!("{} bytes of canonical JSON, identical = {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let t = Instant::now();
    let catalog = harness::verify_two_sided(&RunConfig {
        persson: true,
        ..RunConfig::default()
    });
    let catalog_secs = t.elapsed().as_secs_f64();
    let from_catalog = |f: fn(&VerifySummary) -> Outcome| -> Outcome {
        match &catalog {
            Ok(s) => f(s),
            Err(e) => Err(format!("catalog run failed: {e}")),
        }
    };

    let criteria: Vec<Criterion<'_>> = vec![
        ("ball capacity in three dimensions", Box::new(ball_capacity)),
        ("disk capacity between condensers", Box::new(disk_capacity)),
        ("flux quantization of the optimized gauge", Box::new(flux_quantization)),
        ("gauge invariance of the ground state", Box::new(gauge_invariance)),
        ("ground states of square, oscillator and Landau", Box::new(spectral_oracles)),
        ("exterior bottoms monotone, harmonic grows", Box::new(|| from_catalog(persson_monotone))),
        ("two-sided bound over the catalog", Box::new(|| from_catalog(two_sided))),
        ("fibered shifted oscillator", Box::new(fibered)),
        ("carving soundness and monotonicity in gamma", Box::new(|| from_catalog(carving_soundness))),
        ("deterministic reports", Box::new(determinism)),
    ];
    println!("catalog run with exterior bottoms: {catalog_secs:.1} s");
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d} [{secs:.1} s]", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {d} [{secs:.1} s]", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

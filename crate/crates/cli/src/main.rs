use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use capbound_core::capacity::{self, CapacityConfig, CompactSet};
use capbound_core::carving::{joint_min, CarvingConfig};
use capbound_core::diameter::{diameter, SweepConfig};
use capbound_core::fibered::{infimum_over_fibers, uniform_grid};
use capbound_core::gauge::optimize_gauge;
use capbound_core::grid::io::write_raw;
use capbound_core::harness::{self, report, Instance, RunConfig};
use capbound_core::spectrum::{bottom, EigenConfig};
use capbound_core::{CubeWindow, Lattice, ScalarField};

#[derive(Parser, Debug)]
#[command(name = "capbound", version, about = "Capacity-based bounds for magnetic Schrödinger operators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Mesh width relative to the preset's length scale; fractions like 1/64 accepted.
    #[arg(long, global = true, value_parser = parse_fraction)]
    h: Option<f64>,
    #[arg(long, global = true, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file; `.csv` selects the table form, anything else JSON with
    /// tables written beside it. Stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Capacity of a centred ball in a cube, relative to the doubled cube in 2D.
    Capacity {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Cube edge.
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 64)]
        cells: usize,
        #[arg(long, default_value_t = 0.125)]
        radius: f64,
    },
    /// Optimised phase on a centred cube of a preset, with `F = Q ∖ Ω`.
    GaugeOpt(CubeArgs),
    /// Joint minimisation over carved sets and gauges on a centred cube.
    Carve(CubeArgs),
    /// Capacitary interior diameter of a preset.
    Diameter {
        #[arg(long)]
        preset: String,
        /// `auto` or a comma-separated list of cube sizes in cells.
        #[arg(long, default_value = "auto")]
        d_grid: String,
    },
    /// Bottom of the Dirichlet spectrum of a preset.
    Spectrum {
        #[arg(long)]
        preset: String,
        /// Write `|ψ|²` as a raw block with a JSON sidecar.
        #[arg(long)]
        density: Option<PathBuf>,
    },
    /// `inf_μ λ_μ` over the fibres of a preset that has them.
    Fibered {
        #[arg(long, default_value = "shifted-oscillator")]
        preset: String,
        #[arg(long)]
        mu_max: Option<f64>,
        #[arg(long, default_value_t = 64)]
        points: usize,
        /// Also solve the periodic strip with this many cells along the fibre axis.
        #[arg(long)]
        strip: Option<usize>,
    },
    /// λ against D over presets, with the family-wide checks.
    Verify {
        /// Presets to run (repeatable); the whole catalog when absent.
        #[arg(long)]
        preset: Vec<String>,
        /// JSON run document; command-line flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also compare λ(Ω ∖ B̄_R) with D_R over each preset's radii.
        #[arg(long)]
        essential: bool,
        /// Compute λ(Ω ∖ B̄_R) without the exterior diameters.
        #[arg(long)]
        persson: bool,
    },
    /// List the preset catalog.
    Presets,
}

#[derive(Args, Debug)]
struct CubeArgs {
    #[arg(long)]
    preset: String,
    /// Cube edge in cells.
    #[arg(long, default_value_t = 16)]
    cells: usize,
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("`{s}` is not a positive number"))
    }
}

/// One command's result: a JSON document, an optional CSV table, and
/// whether its checks passed.
struct Output {
    json: Value,
    csv: Option<Vec<u8>>,
    pass: bool,
}

fn emit(out: &Option<PathBuf>, o: &Output) -> Result<()> {
    let text = serde_json::to_string_pretty(&o.json)?;
    match out {
        None => println!("{text}"),
        Some(p) if p.extension().is_some_and(|e| e == "csv") => {
            let table = o.csv.as_ref().ok_or_else(|| anyhow!("this command has no CSV form"))?;
            std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?;
        }
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            if let Some(table) = &o.csv {
                let side = p.with_extension("csv");
                std::fs::write(&side, table).with_context(|| format!("writing {}", side.display()))?;
            }
        }
    }
    Ok(())
}

fn centred_cube(lat: &Lattice, cells: usize) -> Result<CubeWindow> {
    let mut lo = [0usize; 3];
    for (a, l) in lo.iter_mut().enumerate().take(lat.dim()) {
        let n = lat.extent(a) - 1;
        if cells > n {
            bail!("cube of {cells} cells does not fit along axis {a} ({n} cells)");
        }
        *l = (n - cells) / 2;
    }
    Ok(CubeWindow::new(lat, lo, cells)?)
}

fn instance(name: &str, g: &Global) -> Result<Instance> {
    Ok(harness::build(name, g.h)?)
}

fn carving_cfg(g: &Global) -> CarvingConfig {
    CarvingConfig {
        gamma: g.gamma,
        seed: g.seed,
        ..CarvingConfig::default()
    }
}

fn eigen_cfg(g: &Global) -> EigenConfig {
    let base = EigenConfig::default();
    EigenConfig {
        seed: base.seed.wrapping_add(g.seed),
        ..base
    }
}

fn run_capacity(g: &Global, dim: usize, d: f64, cells: usize, radius: f64) -> Result<Output> {
    if !(2..=3).contains(&dim) {
        bail!("--dim must be 2 or 3");
    }
    let lat = Lattice::new(&vec![cells + 1; dim], d / cells as f64, &vec![-0.5 * d; dim])?;
    let cube = CubeWindow::whole(&lat)?;
    let set = CompactSet::from_fn(&cube, |x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() <= radius + 1e-12);
    let cfg = CapacityConfig::default();
    let c = capacity::cap(&set, &cfg)?;
    let cq = capacity::cube_capacity(&cube, &cfg)?;
    Ok(Output {
        json: json!({
            "schema": harness::SCHEMA, "dim": dim, "d": d, "cells": cells, "radius": radius,
            "nodes": set.count(), "cap": c, "cap_cube": cq, "gamma": g.gamma, "negligible": c <= g.gamma * cq,
        }),
        csv: None,
        pass: true,
    })
}

fn run_gauge(g: &Global, a: &CubeArgs) -> Result<Output> {
    let inst = instance(&a.preset, g)?;
    let cube = centred_cube(inst.problem.lattice(), a.cells)?;
    let prob = inst.problem.cube(&cube)?;
    let cand = optimize_gauge(&prob, &prob.outside_set())?;
    Ok(Output {
        json: json!({ "schema": harness::SCHEMA, "preset": a.preset, "cube": cube, "gauge": cand }),
        csv: None,
        pass: true,
    })
}

fn run_carve(g: &Global, a: &CubeArgs) -> Result<Output> {
    let inst = instance(&a.preset, g)?;
    let cube = centred_cube(inst.problem.lattice(), a.cells)?;
    let prob = inst.problem.cube(&cube)?;
    let r = joint_min(&prob, &carving_cfg(g))?;
    let d = cube.h() * a.cells as f64;
    let threshold = d.powi(inst.problem.dim() as i32 - 2);
    let pass = r.best.feasible && capacity::is_negligible(&r.best.f, g.gamma, &CapacityConfig::default())?;
    Ok(Output {
        json: json!({
            "schema": harness::SCHEMA, "preset": a.preset, "gamma": g.gamma, "seed": g.seed, "d": d,
            "qualifies": r.best.integral <= threshold, "threshold": threshold,
            "best": r.best.record(), "optimized": r.optimized.record(),
            "polynomial": r.polynomial.as_ref().map(|p| p.record()), "trace": r.trace,
        }),
        csv: None,
        pass,
    })
}

fn run_diameter(g: &Global, preset: &str, grid: &str) -> Result<Output> {
    let inst = instance(preset, g)?;
    let cells = if grid == "auto" {
        inst.d_grid.clone()
    } else {
        grid.split(',')
            .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad cube size `{s}`")))
            .collect::<Result<Vec<_>>>()?
    };
    let cfg = SweepConfig {
        carving: carving_cfg(g),
        period: inst.period,
        ..SweepConfig::default()
    };
    let d = diameter(&inst.problem, &cells, &cfg)?;
    let mut table = Vec::new();
    report::write_levels_csv(&d, inst.problem.dim(), &mut table)?;
    let checks: Vec<Value> = inst
        .oracles
        .iter()
        .filter(|o| o.quantity == harness::Quantity::Diameter)
        .map(|o| json!({ "oracle": o, "pass": o.accepts(d.d) }))
        .collect();
    let pass = checks.iter().all(|c| c["pass"] == true);
    Ok(Output {
        json: json!({ "schema": harness::SCHEMA, "preset": preset, "gamma": g.gamma, "seed": g.seed, "diameter": d, "oracles": checks }),
        csv: Some(table),
        pass,
    })
}

fn run_spectrum(g: &Global, preset: &str, density: Option<&Path>) -> Result<Output> {
    let inst = instance(preset, g)?;
    let r = bottom(&inst.problem.operator()?, &eigen_cfg(g))?;
    if let Some(path) = density {
        let rho = ScalarField::new(r.lattice.clone(), r.eigvec.iter().map(|z| z.norm_sqr()).collect())?;
        write_raw(&rho, path)?;
    }
    let checks: Vec<Value> = inst
        .oracles
        .iter()
        .filter(|o| o.quantity == harness::Quantity::Lambda)
        .map(|o| json!({ "oracle": o, "pass": o.accepts(r.lambda) }))
        .collect();
    let pass = checks.iter().all(|c| c["pass"] == true);
    let lat = &r.lattice;
    Ok(Output {
        json: json!({
            "schema": harness::SCHEMA, "preset": preset, "h": lat.h(), "shape": &lat.shape()[..lat.dim()],
            "lambda": r.lambda, "residual": r.residual, "iterations": r.iterations, "is_zero": r.is_zero(),
            "oracles": checks,
        }),
        csv: None,
        pass,
    })
}

fn run_fibered(g: &Global, preset: &str, mu_max: Option<f64>, points: usize, strip: Option<usize>) -> Result<Output> {
    let inst = instance(preset, g)?;
    let mut p = inst.fibered.ok_or_else(|| anyhow!("preset `{preset}` has no fibered form"))?;
    if mu_max.is_some() || points != 64 {
        let m = mu_max.unwrap_or_else(|| p.mu_max());
        p = p.with_mu_grid(uniform_grid(m, points))?;
    }
    let cfg = eigen_cfg(g);
    let curve = infimum_over_fibers(&p, &cfg)?;
    let strip_lambda = match strip {
        Some(n) => Some(bottom(&p.periodic_strip(n)?, &cfg)?.lambda),
        None => None,
    };
    let mut pass = strip_lambda.is_none_or(|s| (s - curve.lambda).abs() <= 0.02 * curve.lambda);
    let checks: Vec<Value> = inst
        .oracles
        .iter()
        .filter(|o| o.quantity == harness::Quantity::Lambda)
        .map(|o| json!({ "oracle": o, "pass": o.accepts(curve.lambda) }))
        .collect();
    pass &= checks.iter().all(|c| c["pass"] == true);
    let mut table = Vec::new();
    curve.write_csv(&mut table)?;
    Ok(Output {
        json: json!({ "schema": harness::SCHEMA, "preset": preset, "curve": curve, "strip_lambda": strip_lambda, "oracles": checks }),
        csv: Some(table),
        pass,
    })
}

fn run_verify(g: &Global, presets: &[String], config: Option<&Path>, essential: bool, persson: bool) -> Result<Output> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !presets.is_empty() {
        cfg.presets = presets.to_vec();
    }
    if g.h.is_some() {
        cfg.h = g.h;
    }
    if config.is_none() || g.gamma != 0.5 {
        cfg.gamma = g.gamma;
    }
    if config.is_none() || g.seed != 0 {
        cfg.seed = g.seed;
    }
    cfg.persson |= persson;
    let s = if essential {
        harness::verify_essential(&cfg)?
    } else {
        harness::verify_two_sided(&cfg)?
    };
    let mut table = Vec::new();
    s.write_csv(&mut table)?;
    for f in &s.failures {
        eprintln!("failure: {f}");
    }
    Ok(Output {
        json: serde_json::from_str(&s.to_json()?)?,
        csv: Some(table),
        pass: s.pass,
    })
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(j) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    if !(cli.global.gamma > 0.0 && cli.global.gamma < 1.0) {
        bail!("--gamma must lie in (0, 1)");
    }
    let g = &cli.global;
    let out = match &cli.cmd {
        Cmd::Capacity { dim, d, cells, radius } => run_capacity(g, *dim, *d, *cells, *radius)?,
        Cmd::GaugeOpt(a) => run_gauge(g, a)?,
        Cmd::Carve(a) => run_carve(g, a)?,
        Cmd::Diameter { preset, d_grid } => run_diameter(g, preset, d_grid)?,
        Cmd::Spectrum { preset, density } => run_spectrum(g, preset, density.as_deref())?,
        Cmd::Fibered { preset, mu_max, points, strip } => run_fibered(g, preset, *mu_max, *points, *strip)?,
        Cmd::Verify { preset, config, essential, persson } => {
            run_verify(g, preset, config.as_deref(), *essential, *persson)?
        }
        Cmd::Presets => {
            for p in harness::CATALOG {
                println!("{p}");
            }
            return Ok(true);
        }
    };
    emit(&g.out, &out)?;
    Ok(out.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions() {
        assert_eq!(parse_fraction("1/128"), Ok(1.0 / 128.0));
        assert_eq!(parse_fraction("0.25"), Ok(0.25));
        assert!(parse_fraction("0").is_err());
        assert!(parse_fraction("1/0").is_err());
    }
}

//! Command implementations behind the thin `decoupler` binary: each takes a
//! resolved run config, drives the library, writes its artifacts under the
//! output directory, and returns an exit code through [`CliError`].
//!
//! Exit-code contract: 0 success, 2 config error, 3 numerical failure,
//! 4 criterion failure — so CI can tell bugs from physics.

use crate::config::{ConfigError, RunConfig};
use crate::decoupling::oracle::OracleJ;
use crate::decoupling::{extend, hypothesis::hypothesis_check, picard_solve, PicardConfig};
use crate::io;
use crate::nonlinearity::Nonlinearity;
use crate::pde::{residual_check, solve_h, PdeConfig};
use crate::sde::DiffusivityField;
use crate::spde::harness::{
    multipoint_harness, one_point_harness, MultipointConfig, OnePointConfig, ProbeSpec,
};
use crate::spde::SpdeParams;
use crate::verify::{run_tier, Tier};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("criterion failure: {0}")]
    Criterion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Criterion(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Numerical(format!("io: {e}"))
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn ensure_out(dir: &str) -> Result<PathBuf, CliError> {
    let p = PathBuf::from(dir);
    std::fs::create_dir_all(&p).map_err(|e| CliError::Config(format!("output dir: {e}")))?;
    Ok(p)
}

/// Report envelope: every report embeds the resolved config and the library
/// version, so identical (config, seed) runs are byte-identical.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    library: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    report: T,
}

fn write_report<T: Serialize>(
    out: &Path,
    name: &str,
    cfg: &RunConfig,
    report: T,
) -> Result<(), CliError> {
    io::write_report(
        &out.join(name),
        &Envelope {
            library: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            report,
        },
    )?;
    Ok(())
}

/// Certified reference diffusivity for the harnesses: the closed form when
/// the family has one, otherwise a Picard solve (extended if needed) whose
/// certificate must clear the requested horizon.
fn reference_field(
    cfg: &RunConfig,
    sigma: &Nonlinearity,
    horizon: f64,
) -> Result<DiffusivityField, CliError> {
    if let Some(oracle) = cfg.nonlinearity.oracle() {
        if oracle.validity() > horizon && oracle.lipschitz_at(horizon).is_finite() {
            return Ok(oracle.as_diffusivity(horizon));
        }
    }
    // no closed form: certify, then solve
    let probe: Vec<f64> = (0..257)
        .map(|i| -cfg.decouple.b_max + 2.0 * cfg.decouple.b_max * i as f64 / 256.0)
        .collect();
    let cert = hypothesis_check(sigma, &probe).map_err(numerical)?;
    if !(cert.certificate && cert.certified_horizon > horizon) {
        return Err(CliError::Numerical(format!(
            "nonlinearity not certified past horizon {horizon}: {cert:?}"
        )));
    }
    let lambda = sigma.lipschitz;
    let direct_limit = if lambda > 0.0 {
        1.0 / (lambda * lambda)
    } else {
        f64::INFINITY
    };
    let q0 = horizon.min(0.9 * direct_limit);
    let pc = PicardConfig {
        q0,
        n_q: cfg.decouple.n_q,
        b_max: cfg.decouple.b_max,
        n_b: cfg.decouple.n_b,
        tol: cfg.decouple.tol,
        max_iters: cfg.decouple.max_iters,
        mc: cfg.mc.to_mc(),
    };
    let mut field = picard_solve(sigma, &pc).map_err(numerical)?.field;
    while field.horizon() < horizon {
        let lip = field.lipschitz_per_q.last().copied().unwrap();
        let step = (horizon - field.horizon()).min(0.8 / (lip * lip));
        field = extend(&field, step, &cfg.mc.to_mc(), cfg.decouple.tol)
            .map_err(numerical)?
            .field;
    }
    Ok(field.as_diffusivity())
}

#[derive(Serialize)]
struct DecoupleReport {
    iterations: usize,
    residual_trajectory: Vec<f64>,
    stderr_x: f64,
    certified_horizon: f64,
    certified_statement: String,
    lipschitz_per_q: Vec<(f64, f64)>,
    oracle_x_norm_gap: Option<f64>,
}

pub fn cmd_decouple(cfg: &RunConfig) -> Result<(), CliError> {
    let out = ensure_out(&cfg.output.dir)?;
    let sigma = cfg.nonlinearity.build()?;
    let pc = PicardConfig {
        q0: cfg.decouple.q0,
        n_q: cfg.decouple.n_q,
        b_max: cfg.decouple.b_max,
        n_b: cfg.decouple.n_b,
        tol: cfg.decouple.tol,
        max_iters: cfg.decouple.max_iters,
        mc: cfg.mc.to_mc(),
    };
    let solved = picard_solve(&sigma, &pc).map_err(numerical)?;
    let mut field = solved.field;
    let mut iterations = solved.iterations;
    if cfg.decouple.extend_by > 0.0 {
        let extended = extend(&field, cfg.decouple.extend_by, &cfg.mc.to_mc(), cfg.decouple.tol)
            .map_err(numerical)?;
        field = extended.field;
        iterations += extended.iterations;
    }

    io::write_decoupling_field(&out.join("decoupling.field"), &field)?;
    let residual_rows: Vec<Vec<f64>> = field
        .residual_trajectory
        .iter()
        .enumerate()
        .map(|(i, &r)| vec![i as f64 + 1.0, r])
        .collect();
    io::write_csv(&out.join("residuals.csv"), &["iteration", "x_norm_change"], &residual_rows)?;
    let lip_rows: Vec<Vec<f64>> = field
        .grid
        .q_grid
        .iter()
        .zip(&field.lipschitz_per_q)
        .map(|(&q, &l)| vec![q, l])
        .collect();
    io::write_csv(&out.join("lipschitz.csv"), &["q", "lipschitz"], &lip_rows)?;

    let oracle_gap = cfg.nonlinearity.oracle().and_then(|oracle| {
        (oracle.validity() > field.horizon()).then(|| {
            field.x_norm_distance(&|q, b| oracle.eval_scalar(q, b).unwrap_or(f64::NAN))
        })
    });
    let lip_top = field.lipschitz_per_q.last().copied().unwrap_or(f64::NAN);
    let report = DecoupleReport {
        iterations,
        residual_trajectory: field.residual_trajectory.clone(),
        stderr_x: field.stderr_x,
        certified_horizon: field.certified_horizon,
        certified_statement: format!(
            "existence horizon >= {:.6} (= solved horizon {:.6} + Lip(J(top))^-2 with Lip = {:.6})",
            field.certified_horizon,
            field.horizon(),
            lip_top
        ),
        lipschitz_per_q: field
            .grid
            .q_grid
            .iter()
            .zip(&field.lipschitz_per_q)
            .map(|(&q, &l)| (q, l))
            .collect(),
        oracle_x_norm_gap: oracle_gap,
    };
    write_report(&out, "decouple_report.json", cfg, report)
}

#[derive(Serialize)]
struct PdeReport {
    q0: f64,
    h_b: f64,
    steps_taken: usize,
    min_dq: f64,
    floor_events: usize,
    residual_l1_linf: f64,
    oracle_error_table: Option<Vec<(f64, f64)>>,
}

pub fn cmd_pde(cfg: &RunConfig) -> Result<(), CliError> {
    let out = ensure_out(&cfg.output.dir)?;
    let sigma = cfg.nonlinearity.build()?;
    let pde_cfg = PdeConfig {
        cfl: cfg.pde.cfl,
        n_snapshots: cfg.pde.n_snapshots,
        ..PdeConfig::on_interval(cfg.pde.b_min, cfg.pde.b_max, cfg.pde.h_b)
    };
    let sig = sigma.clone();
    let field = solve_h(
        move |b| {
            let s = sig.eval_scalar(b);
            s * s
        },
        cfg.pde.q0,
        &pde_cfg,
    )
    .map_err(numerical)?;
    io::write_h_field(&out.join("h.field"), &field, &sigma.label)?;
    let residual = residual_check(&field, &[]).map_err(numerical)?;

    // per-level max relative error against the closed form, when one exists
    let oracle_table = cfg.nonlinearity.oracle().and_then(|oracle| {
        (oracle.validity() > field.horizon()).then(|| {
            field
                .q_levels
                .iter()
                .enumerate()
                .map(|(k, &q)| {
                    let mut worst = 0.0f64;
                    for (j, b) in field.b_nodes().enumerate() {
                        if let Ok(jv) = oracle.eval_scalar(q, b) {
                            let exact = jv * jv;
                            if exact > 1e-9 {
                                let got = field.slices[k * field.n_b + j];
                                worst = worst.max((got - exact).abs() / exact);
                            }
                        }
                    }
                    (q, worst)
                })
                .collect::<Vec<_>>()
        })
    });
    if let Some(table) = &oracle_table {
        let rows: Vec<Vec<f64>> = table.iter().map(|&(q, e)| vec![q, e]).collect();
        io::write_csv(&out.join("pde_oracle_error.csv"), &["q", "max_rel_error"], &rows)?;
    }
    let report = PdeReport {
        q0: cfg.pde.q0,
        h_b: pde_cfg.h_b(),
        steps_taken: field.steps_taken,
        min_dq: field.min_dq,
        floor_events: field.floor_events,
        residual_l1_linf: residual.l1_linf,
        oracle_error_table: oracle_table,
    };
    write_report(&out, "pde_report.json", cfg, report)
}

pub fn cmd_spde_onepoint(cfg: &RunConfig) -> Result<(), CliError> {
    let out = ensure_out(&cfg.output.dir)?;
    let sigma = cfg.nonlinearity.build()?;
    let j_ref = reference_field(cfg, &sigma, 1.0)?;
    let harness_cfg = OnePointConfig {
        grid_n: cfg.spde.grid_n,
        separation_factor: cfg.spde.separation_factor,
        max_probes_per_axis: cfg.spde.max_probes_per_axis,
        reference_paths: cfg.mc.paths,
        reference_steps: cfg.mc.steps,
        ..OnePointConfig::new(
            cfg.spde.rho_list.clone(),
            cfg.spde.t,
            cfg.spde.v0,
            cfg.spde.n_samples,
            cfg.mc.seed,
        )
    };
    let report = one_point_harness(&sigma, &j_ref, &harness_cfg).map_err(numerical)?;
    let rows: Vec<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| vec![r.rho, r.w2, r.n_eff, r.spde_mean, r.spde_var])
        .collect();
    io::write_csv(
        &out.join("onepoint.csv"),
        &["rho", "w2", "n_eff", "spde_mean", "spde_var"],
        &rows,
    )?;
    let monotone = report.monotone_nonincreasing;
    write_report(&out, "onepoint_report.json", cfg, &report)?;
    if !monotone {
        return Err(CliError::Criterion(
            "W2 not non-increasing along the rho list".into(),
        ));
    }
    Ok(())
}

pub fn cmd_spde_multipoint(cfg: &RunConfig) -> Result<(), CliError> {
    let out = ensure_out(&cfg.output.dir)?;
    let sigma = cfg.nonlinearity.build()?;
    let horizon = 1.0f64.max(
        crate::scales::s_rho(cfg.multipoint.t + cfg.multipoint.r_smooth, cfg.multipoint.rho)
            .map_err(numerical)?,
    );
    let j_ref = reference_field(cfg, &sigma, horizon)?;
    let center = SpdeParams::for_grid(cfg.multipoint.grid_n, cfg.multipoint.rho).l_dom / 2.0;
    let d = cfg.multipoint.rho.powf(cfg.multipoint.distance_exponent);
    let probes = [
        ProbeSpec {
            t: cfg.multipoint.t,
            r_smooth: cfg.multipoint.r_smooth,
            x: [center, center],
        },
        ProbeSpec {
            t: cfg.multipoint.t,
            r_smooth: cfg.multipoint.r_smooth,
            x: [center + d, center],
        },
    ];
    let mp_cfg = MultipointConfig {
        psi_samples: cfg.multipoint.psi_samples,
        ..MultipointConfig::new(
            cfg.multipoint.rho,
            cfg.multipoint.grid_n,
            cfg.multipoint.replicas,
            cfg.mc.seed,
        )
    };
    let report = multipoint_harness(&sigma, &j_ref, &probes, &mp_cfg).map_err(numerical)?;
    let ok = report.covariances_within_3se;
    write_report(&out, "multipoint_report.json", cfg, &report)?;
    if !ok {
        return Err(CliError::Criterion(
            "pairwise covariance outside 3 standard errors".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    family: String,
    validity: f64,
    values: Vec<(f64, f64, f64)>,
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<(), CliError> {
    let out = ensure_out(&cfg.output.dir)?;
    let oracle: OracleJ = cfg
        .nonlinearity
        .oracle()
        .ok_or_else(|| CliError::Config(format!("family {} has no closed form", cfg.nonlinearity.family)))?;
    let q0 = cfg.decouple.q0.min(0.95 * oracle.validity());
    let field = crate::decoupling::field_from_oracle(
        &oracle,
        q0,
        cfg.decouple.n_q,
        cfg.decouple.b_max,
        cfg.decouple.n_b,
    );
    io::write_decoupling_field(&out.join("oracle.field"), &field)?;
    let mut values = Vec::new();
    for &q in &field.grid.q_grid {
        for b in [-2.0, 0.0, 1.0, 2.0] {
            values.push((q, b, oracle.eval_scalar(q, b).map_err(numerical)?));
        }
    }
    let report = OracleReport {
        family: oracle.label(),
        validity: oracle.validity(),
        values,
    };
    write_report(&out, "oracle_report.json", cfg, report)
}

#[derive(Serialize)]
struct VerifyReport {
    tier: Tier,
    seed: u64,
    all_pass: bool,
    criteria: Vec<crate::verify::CriterionResult>,
}

pub fn cmd_verify(tier: Tier, seed: u64, out_dir: &str) -> Result<(), CliError> {
    let out = ensure_out(out_dir)?;
    let (criteria, all_pass) = run_tier(tier, seed, true);
    io::write_report(
        &out.join("verify_report.json"),
        &VerifyReport {
            tier,
            seed,
            all_pass,
            criteria,
        },
    )?;
    if !all_pass {
        return Err(CliError::Criterion("one or more criteria failed".into()));
    }
    Ok(())
}

//! Thin CLI over the decoupler library: wires TOML run configs and a few
//! flags to the library commands. The real functionality lives in the
//! library and its examples.

use clap::{Parser, Subcommand, ValueEnum};
use decoupler::cli::{self, CliError};
use decoupler::config::RunConfig;
use decoupler::verify::Tier;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "decoupler",
    version,
    about = "Root decoupling functions, their PDE, and the 2D nonlinear stochastic heat equation"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (also read from DECOUPLER_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker pool size (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the root decoupling function by Picard iteration.
    Decouple,
    /// Solve the quasilinear PDE for H = J^2.
    Pde,
    /// One-point law comparison against the forward SDE.
    SpdeOnepoint,
    /// Multipoint law comparison against the tree-correlated system.
    SpdeMultipoint,
    /// Evaluate a closed-form family onto a field container.
    Oracle,
    /// Run the verification suite.
    Verify {
        #[arg(long, value_enum, default_value_t = TierArg::Smoke)]
        tier: TierArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TierArg {
    Smoke,
    Full,
}

fn resolve_seed(flag: Option<u64>) -> Option<u64> {
    flag.or_else(|| {
        std::env::var("DECOUPLER_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
}

fn run(args: Args) -> Result<(), CliError> {
    if args.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let seed = resolve_seed(args.seed);

    if let Command::Verify { tier } = args.command {
        let out = args
            .out
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let tier = match tier {
            TierArg::Smoke => Tier::Smoke,
            TierArg::Full => Tier::Full,
        };
        return cli::cmd_verify(tier, seed.unwrap_or(0), &out);
    }

    let config_path = args
        .config
        .ok_or_else(|| CliError::Config("--config is required for this subcommand".into()))?;
    let mut cfg = RunConfig::from_path(&config_path).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.mc.seed = s;
    }
    if let Some(out) = args.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }

    match args.command {
        Command::Decouple => cli::cmd_decouple(&cfg),
        Command::Pde => cli::cmd_pde(&cfg),
        Command::SpdeOnepoint => cli::cmd_spde_onepoint(&cfg),
        Command::SpdeMultipoint => cli::cmd_spde_multipoint(&cfg),
        Command::Oracle => cli::cmd_oracle(&cfg),
        Command::Verify { .. } => unreachable!(),
    }
}

fn main() {
    let args = Args::parse();
    match run(args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

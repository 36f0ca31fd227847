//! `faddeev <kind> [--config PATH] [--out DIR] [--resume PATH] [--threads N] [--seed N]`
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 when the run aborts.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use faddeev_core::experiments::{parse_config, resolve, run_experiment, ExperimentConfig, ExperimentKind, RunOptions};

#[derive(Parser, Debug)]
#[command(
    name = "faddeev",
    version,
    about = "Geodesic stability experiments for the Faddeev model"
)]
struct Cli {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Subcommand, Debug)]
#[command(rename_all = "snake_case")]
enum Kind {
    /// Zero perturbation against the exact linear-wave background
    GeodesicExactness(RunArgs),
    /// Refinement order of a perturbed run
    ConvergenceOrder(RunArgs),
    /// Energy scaling in epsilon, hyperbolicity, decay and energy equivalence
    StabilityScaling(RunArgs),
    /// Sharp sup-norm bounds of the background
    BoundsAudit(RunArgs),
    /// Conservation, decay and reversibility of the background evolution
    DecayProfile(RunArgs),
    /// Cumulative ghost-weight dissipation
    GhostIntegral(RunArgs),
    /// Exact identities, commutators and inequality harnesses (no evolution)
    IdentitySuite(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML configuration; defaults are used for everything it leaves out
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: runs/<kind>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint written by the same configuration
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Worker threads
    #[arg(long, env = "FADDEEV_THREADS")]
    threads: Option<usize>,
    /// Overrides the configuration seed
    #[arg(long)]
    seed: Option<u64>,
}

impl Kind {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Kind::GeodesicExactness(a) => (ExperimentKind::GeodesicExactness, a),
            Kind::ConvergenceOrder(a) => (ExperimentKind::ConvergenceOrder, a),
            Kind::StabilityScaling(a) => (ExperimentKind::StabilityScaling, a),
            Kind::BoundsAudit(a) => (ExperimentKind::BoundsAudit, a),
            Kind::DecayProfile(a) => (ExperimentKind::DecayProfile, a),
            Kind::GhostIntegral(a) => (ExperimentKind::GhostIntegral, a),
            Kind::IdentitySuite(a) => (ExperimentKind::IdentitySuite, a),
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, faddeev_core::Error> {
    if let Some(n) = args.threads {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let resolved = resolve(cfg, Some(kind))?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("runs").join(kind.name()));
    let started = Instant::now();
    let outcome = run_experiment(
        &resolved,
        &RunOptions {
            out: Some(out.clone()),
            resume: args.resume,
            echo: true,
            halt_at: None,
        },
    )?;
    for c in &outcome.summary.checks {
        eprintln!(
            "{} {} = {:e} ({})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.requirement
        );
    }
    eprintln!(
        "{kind}: {} in {:.1} s, artifacts in {}",
        if outcome.summary.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(outcome.summary.pass)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().kind.split();
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

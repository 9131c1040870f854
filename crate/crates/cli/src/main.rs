//! `viscolab` command line: one subcommand per experiment. A failed check is
//! reported in the manifest and the summary; only errors give a nonzero exit.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use viscolab::experiments::{run, ExperimentConfig, ExperimentKind, Manifest};
use viscolab::TorusGrid;

#[derive(Parser)]
#[command(
    name = "viscolab",
    version,
    about = "Viscous Hamilton-Jacobi experiments on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discounted stationary solve.
    SolveStationary(Common),
    /// Ergodic constant by both routes, plus the eigenvalue oracle when applicable.
    SolveErgodic(Common),
    /// Evolution with snapshot dump and time-Lipschitz checks.
    Evolve(Common),
    /// Discount sweep with gradient, oscillation and Hölder checks.
    SweepEps(Common),
    /// Long-time convergence to the ergodic profile.
    LargeTime(Common),
    /// Growth rate u/t and subadditivity.
    Cesaro(Common),
    /// Regularization ladder for degenerate diffusion.
    DegenerateLadder(Common),
    /// Regularity report for a stored or freshly solved field.
    Certify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config (or JSON when the extension is `.json`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid counts, `n` or `n0,n1`.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<TorusGrid>,
}

fn parse_grid(s: &str) -> anyhow::Result<TorusGrid> {
    let counts = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .with_context(|| format!("bad grid count {t:?}"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if counts.is_empty() || counts.len() > 2 {
        bail!("grid takes one or two counts");
    }
    Ok(TorusGrid::new(&counts)?)
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::SolveStationary(c) => (ExperimentKind::Stationary, c),
            Command::SolveErgodic(c) => (ExperimentKind::Ergodic, c),
            Command::Evolve(c) => (ExperimentKind::Evolve, c),
            Command::SweepEps(c) => (ExperimentKind::EpsilonSweep, c),
            Command::LargeTime(c) => (ExperimentKind::LargeTime, c),
            Command::Cesaro(c) => (ExperimentKind::Cesaro, c),
            Command::DegenerateLadder(c) => (ExperimentKind::DegenerateLadder, c),
            Command::Certify(c) => (ExperimentKind::Certify, c),
        }
    }
}

fn load(common: Common) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = common.out {
        config.output_dir = out;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(grid) = common.grid {
        config.grid = grid;
    }
    Ok(config)
}

fn summarize(m: &Manifest, config: &ExperimentConfig) {
    println!("{} -> {}", m.experiment, config.output_dir.display());
    for c in &m.checks {
        let status = match (c.passed, c.required) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "info",
        };
        println!(
            "  [{status}] {:<40} value={:.6e} threshold={:.6e} {}",
            c.name, c.value, c.threshold, c.detail
        );
    }
    println!("all required checks passed: {}", m.all_required_passed);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.split();
    let result = load(common).and_then(|config| {
        let manifest = run(&config, Some(kind))?;
        summarize(&manifest, &config);
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

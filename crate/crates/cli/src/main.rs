use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relkep_cli::{Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "relkep", version, about = "Relativistic Kepler experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative-error bound (verify) or closure tolerance (find-orbits, continue)
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed forms against quadrature on an (H, L) grid
    Verify(Common),
    /// Isoenergetic non-degeneracy certificates on an (H, L) grid
    Nondeg(Common),
    /// Resonant angular momenta at H*
    Resonance(Common),
    /// Periodic orbits of the perturbed problem at H*
    FindOrbits(Common),
    /// Continue orbit branches in eps
    Continue(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELKEP_LOG", "warn")).init();
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Nondeg(c) => (Command::Nondeg, c),
        Cmd::Resonance(c) => (Command::Resonance, c),
        Cmd::FindOrbits(c) => (Command::FindOrbits, c),
        Cmd::Continue(c) => (Command::Continue, c),
    };
    let cfg = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let ov = Overrides { out: common.out, tol: common.tol, jobs: common.jobs };
    match relkep_cli::run(cmd, cfg, &ov) {
        Ok(outcome) if outcome.ok() => ExitCode::SUCCESS,
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("FAIL {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

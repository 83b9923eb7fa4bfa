//! Experiment runner behind the `relkep` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;

pub use commands::Outcome;
pub use config::{ConfigError, ExperimentConfig};

/// Margin by which the isoenergetic quadratic form must exceed its error.
pub const NONDEG_MARGIN: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Nondeg,
    Resonance,
    FindOrbits,
    Continue,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    /// Relative-error bound for `verify`, closure tolerance for the orbit commands.
    pub tol: Option<f64>,
    pub jobs: Option<usize>,
}

pub fn run(cmd: Command, mut cfg: ExperimentConfig, ov: &Overrides) -> Result<Outcome> {
    if let Some(out) = &ov.out {
        cfg.output_dir = out.clone();
    }
    if let Some(tol) = ov.tol {
        anyhow::ensure!(tol.is_finite() && tol > 0.0, "--tol must be positive, got {tol}");
        match cmd {
            Command::Verify => cfg.tolerances.verify = tol,
            Command::FindOrbits | Command::Continue => cfg.tolerances.shooting.closure_tol = tol,
            Command::Nondeg | Command::Resonance => log::warn!("--tol has no effect on this command"),
        }
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = ov.jobs {
        anyhow::ensure!(j > 0, "--jobs must be at least 1");
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    pool.install(|| match cmd {
        Command::Verify => commands::verify(&cfg, cfg.tolerances.verify),
        Command::Nondeg => commands::nondeg(&cfg, NONDEG_MARGIN),
        Command::Resonance => commands::resonance(&cfg),
        Command::FindOrbits => commands::find_orbits(&cfg),
        Command::Continue => commands::continuation(&cfg),
    })
}

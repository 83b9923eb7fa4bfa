//! Experiment configuration files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "family": "levi-civita",
//!   "system": { "m": 1.0, "kappa": 1.0, "lambda": 0.1 },
//!   "perturbation": [ { "c": 1.0, "a": 1, "b": 0 } ],
//!   "h_star": -0.5,
//!   "n": 2,
//!   "eps": 1e-4
//! }
//! ```

use std::path::{Path, PathBuf};

use relkep::flow::IntegratorConfig;
use relkep::orbits::{self, ShootingOptions};
use relkep::{Family, LeviCivitaSystem, PerturbationSpec, RelativisticSystem, SystemSpec};
use serde::Deserialize;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
}

fn field_err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: Option<u32>,
    family: Option<Family>,
    system: Option<RawSystem>,
    #[serde(default)]
    perturbation: Option<PerturbationSpec>,
    h_star: Option<f64>,
    n: Option<u32>,
    k: Option<u32>,
    eps: Option<f64>,
    eps_schedule: Option<EpsSchedule>,
    grid: Option<GridSpec>,
    #[serde(default)]
    tolerances: RawTolerances,
    n_seeds: Option<usize>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    trajectories: bool,
}

/// Either direct parameters or, for Levi-Civita, the physical ones
/// `G, M, m, c, E`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    m: Option<f64>,
    kappa: Option<f64>,
    lambda: Option<f64>,
    alpha: Option<f64>,
    c: Option<f64>,
    #[serde(rename = "G")]
    g: Option<f64>,
    #[serde(rename = "M")]
    big_m: Option<f64>,
    #[serde(rename = "E")]
    e: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    verify: Option<f64>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    residual: Option<f64>,
    closure: Option<f64>,
    energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSchedule {
    pub eps_max: f64,
    pub steps: usize,
}

/// Energies evenly spaced in `[h_min, h_max]`, angular momenta spread over
/// the admissible interval at each energy.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h_min: f64,
    pub h_max: f64,
    pub n_h: usize,
    pub n_l: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { h_min: -1.2, h_max: -0.1, n_h: 10, n_l: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Bound on closed-form vs quadrature relative error.
    pub verify: f64,
    pub shooting: ShootingOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub perturbation: PerturbationSpec,
    pub h_star: Option<f64>,
    /// Number of winding classes `k = floor + 1, …, floor + n`.
    pub n: u32,
    /// Explicit winding number for continuation.
    pub k: Option<u32>,
    pub eps: f64,
    pub eps_schedule: Option<EpsSchedule>,
    pub grid: GridSpec,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    pub trajectories: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text)?;
        match raw.schema {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(field_err("schema", format!("unsupported version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(field_err("schema", "missing")),
        }
        let family = raw.family.ok_or_else(|| field_err("family", "missing (levi-civita | relativistic)"))?;
        let system = build_system(family, &raw.system.unwrap_or_default())?;

        let perturbation = raw.perturbation.unwrap_or_else(PerturbationSpec::linear_x1);
        for (i, t) in perturbation.terms.iter().enumerate() {
            if !t.c.is_finite() {
                return Err(field_err(&format!("perturbation[{i}].c"), "must be finite"));
            }
        }
        if let Some(h) = raw.h_star {
            let range_ok = match system {
                SystemSpec::LeviCivita(_) => h < 0.0,
                SystemSpec::Relativistic(s) => h < 0.0 && h > -s.m * s.c * s.c,
            };
            if !h.is_finite() || !range_ok {
                return Err(field_err("h_star", format!("{h} is not a bound-orbit energy")));
            }
        }
        let eps = raw.eps.unwrap_or(0.0);
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(field_err("eps", format!("must be finite and non-negative, got {eps}")));
        }
        if let Some(s) = raw.eps_schedule {
            if !(s.eps_max.is_finite() && s.eps_max >= 0.0) {
                return Err(field_err("eps_schedule.eps_max", format!("must be finite and non-negative, got {}", s.eps_max)));
            }
            if s.steps == 0 {
                return Err(field_err("eps_schedule.steps", "must be at least 1"));
            }
        }
        if raw.k == Some(0) {
            return Err(field_err("k", "must be at least 1"));
        }
        let grid = raw.grid.unwrap_or_default();
        if !(grid.h_min.is_finite() && grid.h_max.is_finite() && grid.h_min <= grid.h_max && grid.h_max < 0.0) {
            return Err(field_err("grid", format!("need h_min ≤ h_max < 0, got [{}, {}]", grid.h_min, grid.h_max)));
        }
        if grid.n_h == 0 || grid.n_l == 0 {
            return Err(field_err("grid", "n_h and n_l must be at least 1"));
        }
        if let SystemSpec::Relativistic(s) = system {
            if grid.h_min <= -s.m * s.c * s.c {
                return Err(field_err("grid.h_min", "must exceed −mc²"));
            }
        }
        let tolerances = build_tolerances(&raw.tolerances, raw.n_seeds)?;
        Ok(Self {
            system,
            perturbation,
            h_star: raw.h_star,
            n: raw.n.unwrap_or(1),
            k: raw.k,
            eps,
            eps_schedule: raw.eps_schedule,
            grid,
            tolerances,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            trajectories: raw.trajectories,
        })
    }

    pub fn family(&self) -> Family {
        self.system.family()
    }

    pub fn require_h_star(&self) -> Result<f64, ConfigError> {
        self.h_star.ok_or_else(|| field_err("h_star", "required by this command"))
    }
}

fn positive(field: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    match v {
        None => Err(field_err(field, "missing")),
        Some(x) if x.is_finite() && x > 0.0 => Ok(x),
        Some(x) => Err(field_err(field, format!("must be positive and finite, got {x}"))),
    }
}

fn build_system(family: Family, s: &RawSystem) -> Result<SystemSpec, ConfigError> {
    let reject = |name: &str, present: bool| -> Result<(), ConfigError> {
        if present {
            Err(field_err(&format!("system.{name}"), format!("not a parameter of family {family}")))
        } else {
            Ok(())
        }
    };
    match family {
        Family::LeviCivita => {
            reject("alpha", s.alpha.is_some())?;
            let physical = s.g.is_some() || s.big_m.is_some() || s.e.is_some();
            if physical {
                reject("kappa", s.kappa.is_some())?;
                reject("lambda", s.lambda.is_some())?;
                let (g, big_m, m, c) = (
                    positive("system.G", s.g)?,
                    positive("system.M", s.big_m)?,
                    positive("system.m", s.m)?,
                    positive("system.c", s.c)?,
                );
                let e = s.e.ok_or_else(|| field_err("system.E", "missing"))?;
                let sys =
                    orbits::levi_civita_physical(g, big_m, m, c, e).map_err(|err| field_err("system.E", err.to_string()))?;
                Ok(SystemSpec::LeviCivita(sys))
            } else {
                reject("c", s.c.is_some())?;
                let sys = LeviCivitaSystem::new(
                    positive("system.m", s.m)?,
                    positive("system.kappa", s.kappa)?,
                    positive("system.lambda", s.lambda)?,
                )
                .map_err(|err| field_err("system", err.to_string()))?;
                Ok(SystemSpec::LeviCivita(sys))
            }
        }
        Family::Relativistic => {
            reject("kappa", s.kappa.is_some())?;
            reject("lambda", s.lambda.is_some())?;
            reject("G", s.g.is_some())?;
            reject("M", s.big_m.is_some())?;
            reject("E", s.e.is_some())?;
            let sys = RelativisticSystem::new(
                positive("system.m", s.m)?,
                positive("system.alpha", s.alpha)?,
                positive("system.c", s.c)?,
            )
            .map_err(|err| field_err("system", err.to_string()))?;
            Ok(SystemSpec::Relativistic(sys))
        }
    }
}

fn build_tolerances(t: &RawTolerances, n_seeds: Option<usize>) -> Result<Tolerances, ConfigError> {
    let mut shooting = ShootingOptions::default();
    let mut integ: IntegratorConfig = shooting.integrator;
    if let Some(v) = t.rel_tol {
        integ.rel_tol = v;
    }
    if let Some(v) = t.abs_tol {
        integ.abs_tol = v;
    }
    integ.validate().map_err(|e| field_err("tolerances", e.to_string()))?;
    shooting.integrator = integ;
    for (name, val, slot) in [
        ("tolerances.residual", t.residual, &mut shooting.residual_tol),
        ("tolerances.closure", t.closure, &mut shooting.closure_tol),
        ("tolerances.energy", t.energy, &mut shooting.energy_tol),
    ] {
        if val.is_some() {
            *slot = positive(name, val)?;
        }
    }
    if let Some(n) = n_seeds {
        if n == 0 {
            return Err(field_err("n_seeds", "must be at least 1"));
        }
        shooting.n_seeds = n;
    }
    let verify = match t.verify {
        Some(_) => positive("tolerances.verify", t.verify)?,
        None => 1e-8,
    };
    Ok(Tolerances { verify, shooting })
}

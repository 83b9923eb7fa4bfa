use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use relkep::actionangle;
use relkep::flow;
use relkep::orbits::{self, ContinuationError, ContinuationFamily, PeriodicOrbit};
use relkep::radial::{self, EnergyMomentum};
use relkep::{Family, PerturbedSystem, SystemSpec};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Files written by a command and the checks that did not hold.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn write_file(dir: &Path, name: &str, contents: &str, outcome: &mut Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    outcome.files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn grid(cfg: &ExperimentConfig) -> Result<Vec<EnergyMomentum>> {
    let g = cfg.grid;
    Ok(radial::admissible_grid(&cfg.system, (g.h_min, g.h_max), g.n_h, g.n_l)?)
}

/// Shortest round-trip decimal, exponent form outside `[1e-5, 1e16)`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

struct VerifyRow {
    em: EnergyMomentum,
    t_closed: f64,
    t_quad: f64,
    theta_closed: f64,
    theta_quad: f64,
    a_closed: Option<f64>,
    a_quad: f64,
    rel_err_max: f64,
}

fn verify_row(sys: &SystemSpec, em: EnergyMomentum) -> relkep::Result<VerifyRow> {
    let t_closed = radial::radial_period_closed(sys, em)?;
    let t_quad = radial::radial_period_quadrature(sys, em)?;
    let theta_closed = radial::apsidal_angle_closed(sys, em)?;
    let theta_quad = radial::apsidal_angle_quadrature(sys, em)?;
    let a_quad = radial::area_quadrature(sys, em)?;
    let a_closed = match sys {
        SystemSpec::LeviCivita(s) => Some(radial::area_closed(s, em)?),
        SystemSpec::Relativistic(_) => None,
    };
    let mut rel_err_max = rel_err(t_closed, t_quad).max(rel_err(theta_closed, theta_quad));
    if let Some(a) = a_closed {
        rel_err_max = rel_err_max.max(rel_err(a, a_quad));
    }
    if !rel_err_max.is_finite() {
        rel_err_max = f64::INFINITY;
    }
    Ok(VerifyRow { em, t_closed, t_quad, theta_closed, theta_quad, a_closed, a_quad, rel_err_max })
}

/// Closed forms against quadrature on the configured `(H, L)` grid.
pub fn verify(cfg: &ExperimentConfig, tol: f64) -> Result<Outcome> {
    let family = cfg.family();
    let rows: Vec<VerifyRow> = grid(cfg)?.par_iter().map(|&em| verify_row(&cfg.system, em)).collect::<relkep::Result<_>>()?;
    let mut out = Outcome::default();
    let mut csv = String::from("family,H,L,T_closed,T_quad,Theta_closed,Theta_quad,A_closed,A_quad,rel_err_max\n");
    for r in &rows {
        let a_closed = r.a_closed.map(num).unwrap_or_default();
        writeln!(
            csv,
            "{family},{},{},{},{},{},{},{a_closed},{},{}",
            num(r.em.h),
            num(r.em.l),
            num(r.t_closed),
            num(r.t_quad),
            num(r.theta_closed),
            num(r.theta_quad),
            num(r.a_quad),
            num(r.rel_err_max)
        )?;
        if !(r.rel_err_max <= tol) {
            out.failures.push(format!("(H, L) = ({}, {}): relative error {:e} exceeds {tol:e}", r.em.h, r.em.l, r.rel_err_max));
        }
    }
    let worst = rows.iter().map(|r| r.rel_err_max).fold(0.0, f64::max);
    info!("verify: {} points, worst relative error {worst:e}", rows.len());
    write_file(&cfg.output_dir, "verify.csv", &csv, &mut out)?;
    Ok(out)
}

/// Isoenergetic non-degeneracy certificate on the grid. A point fails when
/// the quadratic form is not separated from zero by `margin` times its
/// error estimate.
pub fn nondeg(cfg: &ExperimentConfig, margin: f64) -> Result<Outcome> {
    let family = cfg.family();
    let rows = grid(cfg)?
        .par_iter()
        .map(|&em| {
            let i = actionangle::actions_from_hl(&cfg.system, em)?;
            let rep = actionangle::isoenergetic_nondegeneracy(&cfg.system, i)?;
            Ok((em, i, rep))
        })
        .collect::<relkep::Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let mut csv = String::from("family,H,L,I1,I2,grad1,grad2,det_hess,trace_hess,bordered_det,quadratic_form,fd_error\n");
    for (em, i, rep) in &rows {
        writeln!(
            csv,
            "{family},{},{},{},{},{},{},{},{},{},{},{}",
            num(em.h),
            num(em.l),
            num(i.i1),
            num(i.i2),
            num(rep.gradient[0]),
            num(rep.gradient[1]),
            num(rep.hessian.determinant()),
            num(rep.hessian.trace()),
            num(rep.bordered_det),
            num(rep.quadratic_form),
            num(rep.quadratic_form_error)
        )?;
        if !(rep.quadratic_form.abs() > margin * rep.quadratic_form_error) {
            out.failures.push(format!(
                "(H, L) = ({}, {}): quadratic form {:e} not separated from zero (error {:e})",
                em.h, em.l, rep.quadratic_form, rep.quadratic_form_error
            ));
        }
    }
    let negative = rows.iter().filter(|(_, _, r)| r.quadratic_form < 0.0).count();
    if negative != 0 && negative != rows.len() {
        out.failures.push(format!("quadratic form changes sign: {negative} of {} points negative", rows.len()));
    }
    write_file(&cfg.output_dir, "nondeg.csv", &csv, &mut out)?;
    Ok(out)
}

fn winding_classes(cfg: &ExperimentConfig, h_star: f64) -> Result<Vec<u32>> {
    let floor = orbits::winding_floor(&cfg.system, h_star)?;
    info!("winding floor at H* = {h_star}: {floor}");
    Ok((1..=cfg.n).map(|j| floor + j).collect())
}

/// Resonant angular momenta `L*_k` at `H*` for the first `n` admissible `k`.
pub fn resonance(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h_star = cfg.require_h_star()?;
    let family = cfg.family();
    let mut out = Outcome::default();
    let mut csv = String::from("family,H,k,L,T,Theta,r_minus,r_plus,I1,I2\n");
    for k in winding_classes(cfg, h_star)? {
        let seed = orbits::solve_resonant_l(&cfg.system, h_star, k)?;
        let (r_minus, r_plus) = radial::turning_points(&cfg.system, seed.em)?;
        let i = actionangle::actions_from_hl(&cfg.system, seed.em)?;
        writeln!(
            csv,
            "{family},{},{k},{},{},{},{},{},{},{}",
            num(h_star),
            num(seed.em.l),
            num(seed.period),
            num(seed.apsidal_angle),
            num(r_minus),
            num(r_plus),
            num(i.i1),
            num(i.i2)
        )?;
    }
    write_file(&cfg.output_dir, "resonance.csv", &csv, &mut out)?;
    Ok(out)
}

#[derive(Serialize)]
struct Residuals {
    closure: f64,
    energy: f64,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct OrbitRecord {
    family: Family,
    H_star: f64,
    k: u32,
    eps: f64,
    tau: f64,
    winding: i64,
    s0: [f64; 4],
    residuals: Residuals,
    minimal: bool,
}

impl OrbitRecord {
    fn new(family: Family, h_star: f64, o: &PeriodicOrbit) -> Self {
        Self {
            family,
            H_star: h_star,
            k: o.k,
            eps: o.eps,
            tau: o.tau,
            winding: o.winding,
            s0: o.s0.to_array(),
            residuals: Residuals { closure: o.closure_residual, energy: o.energy_residual },
            minimal: o.minimal,
        }
    }
}

fn write_trajectory(cfg: &ExperimentConfig, o: &PeriodicOrbit, name: &str, out: &mut Outcome) -> Result<()> {
    let dyn_sys = PerturbedSystem::new(cfg.system, o.eps, cfg.perturbation.clone());
    let traj = flow::integrate(&dyn_sys, &o.s0, o.tau, &cfg.tolerances.shooting.integrator)?;
    let dir = cfg.output_dir.join("trajectories");
    fs::create_dir_all(&dir)?;
    let path = dir.join(name);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    traj.write_csv(&dyn_sys, BufWriter::new(file))?;
    out.files.push(path);
    Ok(())
}

/// Prescribed-energy periodic orbits for `k = floor + 1, …, floor + n`.
/// Fails unless every class yields at least two distinct orbits.
pub fn find_orbits(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h_star = cfg.require_h_star()?;
    let family = cfg.family();
    let mut out = Outcome::default();
    let mut records = Vec::new();
    let ks = if cfg.n == 0 { Vec::new() } else { winding_classes(cfg, h_star)? };
    for k in ks {
        let opts = &cfg.tolerances.shooting;
        let search = match orbits::find_prescribed_energy_orbits(&cfg.system, &cfg.perturbation, cfg.eps, h_star, k, opts) {
            Ok(s) => s,
            Err(e) => {
                warn!("k = {k}: search failed: {e}");
                out.failures.push(format!("k = {k}: {e}"));
                continue;
            }
        };
        for d in search.diagnostics.iter().filter(|d| d.outcome != "converged") {
            warn!("k = {k}, seed θ₀ = {}: {} after {} iterations (residual {:e})", d.theta0, d.outcome, d.iterations, d.residual);
        }
        info!("k = {k}: {} orbits from {} seeds", search.orbits.len(), search.diagnostics.len());
        if search.orbits.len() < 2 {
            out.failures.push(format!("k = {k}: found {} orbits, need at least 2", search.orbits.len()));
        }
        for (i, o) in search.orbits.iter().enumerate() {
            if cfg.trajectories {
                write_trajectory(cfg, o, &format!("k{k}_orbit{i}.csv"), &mut out)?;
            }
            records.push(OrbitRecord::new(family, h_star, o));
        }
    }
    write_file(&cfg.output_dir, "orbits.json", &to_json(&records)?, &mut out)?;
    Ok(out)
}

#[derive(Serialize)]
struct ContinuationPoint {
    eps: f64,
    tau: f64,
    winding: i64,
    s0: [f64; 4],
    residuals: Residuals,
    minimal: bool,
}

#[derive(Serialize)]
struct Stall {
    branch: usize,
    eps: f64,
    reason: String,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ContinuationRecord {
    family: Family,
    H_star: f64,
    k: u32,
    L_star: f64,
    eps_max: f64,
    steps: usize,
    eps_reached: f64,
    stalled: Option<Stall>,
    branches: Vec<Vec<ContinuationPoint>>,
}

/// Natural-parameter continuation of every orbit found at the first step.
pub fn continuation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h_star = cfg.require_h_star()?;
    let schedule = cfg.eps_schedule.ok_or_else(|| anyhow::anyhow!("eps_schedule: required by this command"))?;
    let k = match cfg.k {
        Some(k) => k,
        None => orbits::winding_floor(&cfg.system, h_star)? + 1,
    };
    let opts = &cfg.tolerances.shooting;
    let (fam, stalled): (ContinuationFamily, Option<Stall>) = match orbits::continuation_in_epsilon(
        &cfg.system,
        &cfg.perturbation,
        h_star,
        k,
        schedule.eps_max,
        schedule.steps,
        opts,
    ) {
        Ok(f) => (f, None),
        Err(ContinuationError::Stall { branch, eps, reason, family }) => {
            warn!("continuation stalled on branch {branch} at eps = {eps:e}: {reason}");
            (*family, Some(Stall { branch, eps, reason }))
        }
        Err(ContinuationError::Setup(e)) => return Err(e.into()),
    };
    let mut out = Outcome::default();
    if let Some(s) = &stalled {
        out.failures.push(format!("stalled on branch {} at eps = {:e}: {}", s.branch, s.eps, s.reason));
    }
    let mut csv = String::from("eps,tau,branch_id\n");
    for (id, branch) in fam.branches.iter().enumerate() {
        for p in branch {
            writeln!(csv, "{},{},{id}", num(p.eps), num(p.orbit.tau))?;
            if !p.report.passed() {
                out.failures.push(format!("branch {id} at eps = {:e} failed verification", p.eps));
            }
        }
    }
    let record = ContinuationRecord {
        family: cfg.family(),
        H_star: h_star,
        k,
        L_star: fam.seed.em.l,
        eps_max: schedule.eps_max,
        steps: schedule.steps,
        eps_reached: fam.eps_reached,
        stalled,
        branches: fam
            .branches
            .iter()
            .map(|b| {
                b.iter()
                    .map(|p| ContinuationPoint {
                        eps: p.eps,
                        tau: p.orbit.tau,
                        winding: p.orbit.winding,
                        s0: p.orbit.s0.to_array(),
                        residuals: Residuals { closure: p.orbit.closure_residual, energy: p.orbit.energy_residual },
                        minimal: p.orbit.minimal,
                    })
                    .collect()
            })
            .collect(),
    };
    write_file(&cfg.output_dir, "continuation.json", &to_json(&record)?, &mut out)?;
    write_file(&cfg.output_dir, "continuation.csv", &csv, &mut out)?;
    Ok(out)
}

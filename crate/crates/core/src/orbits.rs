//! Resonant tori and prescribed-energy periodic orbits of the perturbed problem.
//!
//! Orbits are sought on the pericenter section `p_r = 0`. A section point is
//! parametrised by `(r₀, θ₀)`; the momentum is tangential with the magnitude
//! fixed by the energy `H*`, so every shooting iterate lies on the prescribed
//! energy level. The return time `τ` is the next pericenter passage, located
//! on the continuous output, and Levenberg-Marquardt drives `r(τ) − r₀` and
//! `θ(τ) − θ₀ − 2πk` to zero.

use std::f64::consts::TAU;

use log::{debug, info};
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::error::{Error, Result};
use crate::flow::{integrate, section_crossings_between, winding_number, IntegratorConfig, Trajectory};
use crate::radial::{self, EnergyMomentum};
use crate::systems::{CartesianState, Dynamics, LeviCivitaSystem, PerturbationSpec, PerturbedSystem, SystemSpec};

/// An unperturbed torus whose apsidal angle is `2πk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusSeed {
    pub em: EnergyMomentum,
    pub k: u32,
    /// Radial period, which is also the minimal period of every orbit on the torus.
    pub period: f64,
    pub apsidal_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicOrbit {
    /// Pericenter state.
    pub s0: CartesianState,
    pub tau: f64,
    pub k: u32,
    pub eps: f64,
    /// Largest `|H_ε − H*|` along the verified orbit.
    pub energy_residual: f64,
    /// Distance between `s0` and the pericenter passage that closes the orbit.
    pub closure_residual: f64,
    pub winding: i64,
    pub minimal: bool,
}

impl PeriodicOrbit {
    /// Polar angle of the pericenter in `[0, 2π)`.
    pub fn theta0(&self) -> f64 {
        self.s0.x[1].atan2(self.s0.x[0]).rem_euclid(TAU)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub closure_residual: f64,
    /// `|t_return − τ|` for the pericenter passage used for closure.
    pub return_time_offset: f64,
    pub energy_deviation: f64,
    pub winding: f64,
    pub winding_rounded: i64,
    /// Distances `|s(τ/ℓ) − s0|` for `ℓ = 2, …, k`.
    pub submultiple_distances: Vec<f64>,
    pub pericenter: bool,
    pub closure_ok: bool,
    pub energy_ok: bool,
    pub winding_ok: bool,
    pub minimal: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.closure_ok && self.energy_ok && self.winding_ok && self.minimal && self.pericenter
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingOptions {
    pub n_seeds: usize,
    pub integrator: IntegratorConfig,
    /// Newton stops once `‖F‖∞` falls below this.
    pub residual_tol: f64,
    /// Accepted residual when no further decrease is possible.
    pub stall_tol: f64,
    pub max_iter: usize,
    pub dedupe_tol: f64,
    pub closure_tol: f64,
    pub energy_tol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            n_seeds: 16,
            integrator: IntegratorConfig::default().tightened(),
            residual_tol: 1e-10,
            stall_tol: 1e-9,
            max_iter: 50,
            dedupe_tol: 1e-6,
            closure_tol: 1e-7,
            energy_tol: 1e-7,
        }
    }
}

/// What happened to one shooting seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedDiagnostic {
    pub theta0: f64,
    pub iterations: usize,
    pub residual: f64,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSearch {
    pub seed: TorusSeed,
    /// Verified, deduplicated orbits sorted by pericenter angle.
    pub orbits: Vec<PeriodicOrbit>,
    pub diagnostics: Vec<SeedDiagnostic>,
}

/// `L*_max = √(2λ + κ²/(−2H)) / √m`, the largest admissible `L` at energy `H`.
pub fn lstar_max_lc(sys: &LeviCivitaSystem, h: f64) -> Result<f64> {
    if !(h < 0.0) {
        return Err(Error::OutOfRange(format!("L*_max needs H < 0, got {h}")));
    }
    Ok(radial::lstar_max(sys, h))
}

/// Largest `k` with `Θ(H, L) ≤ 2πk` somewhere on the admissible `L` range;
/// resonances exist for every `k` above it.
pub fn winding_floor(sys: &SystemSpec, h: f64) -> Result<u32> {
    let q = match sys {
        SystemSpec::LeviCivita(s) => {
            if !(h < 0.0) {
                return Err(Error::OutOfRange(format!("winding floor needs H < 0, got {h}")));
            }
            (-2.0 * h).sqrt() / s.kappa * (2.0 * s.lambda + s.kappa * s.kappa / (-2.0 * h)).sqrt()
        }
        SystemSpec::Relativistic(s) => {
            let mc2 = s.m * s.c * s.c;
            if !(h > -mc2 && h < 0.0) {
                return Err(Error::OutOfRange(format!("winding floor needs −mc² < H < 0, got {h}")));
            }
            mc2 / (h + mc2)
        }
    };
    Ok(q.floor() as u32)
}

fn resonant_l_closed(sys: &SystemSpec, k: u32) -> f64 {
    let k2 = f64::from(k) * f64::from(k);
    match sys {
        SystemSpec::LeviCivita(s) => (2.0 * s.lambda * k2 / (s.m * (k2 - 1.0))).sqrt(),
        SystemSpec::Relativistic(s) => s.alpha / s.c * (k2 / (k2 - 1.0)).sqrt(),
    }
}

/// Solve `Θ(H, L) = 2πk` by bisection on the admissible `L` interval.
pub fn resonant_l_bisection(sys: &SystemSpec, h: f64, k: u32) -> Result<f64> {
    let (lo, hi) = radial::l_bounds(sys, h).ok_or_else(|| Error::OutOfRange(format!("no admissible L at H = {h}")))?;
    let target = TAU * f64::from(k);
    let f = |l: f64| radial::apsidal_angle_closed(sys, EnergyMomentum::new(h, l)).map(|t| t - target);
    let width = hi - lo;
    let (mut a, mut b) = (lo + 1e-12 * width, hi - 1e-12 * width);
    let (fa, fb) = (f(a)?, f(b)?);
    if fa.signum() == fb.signum() {
        return Err(Error::OutOfRange(format!("Θ = 2π·{k} has no solution at H = {h}")));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f(m)?.signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// The resonant torus with winding `k` at energy `h`.
pub fn solve_resonant_l(sys: &SystemSpec, h: f64, k: u32) -> Result<TorusSeed> {
    let floor = winding_floor(sys, h)?;
    if k <= floor {
        return Err(Error::OutOfRange(format!("k = {k} must exceed the winding floor {floor} at H = {h}")));
    }
    let mut l = resonant_l_closed(sys, k);
    let target = TAU * f64::from(k);
    let check = |l: f64| -> Result<f64> { radial::apsidal_angle_closed(sys, EnergyMomentum::new(h, l)) };
    let ok = |theta: f64| ((theta - target) / target).abs() <= 1e-10;
    if !radial::admissible(sys, EnergyMomentum::new(h, l)) || !ok(check(l)?) {
        l = resonant_l_bisection(sys, h, k)?;
    }
    let em = EnergyMomentum::new(h, l);
    let theta = check(l)?;
    if !ok(theta) {
        return Err(Error::OutOfRange(format!("no resonant L found for k = {k} at H = {h}")));
    }
    Ok(TorusSeed { em, k, period: radial::radial_period_closed(sys, em)?, apsidal_angle: theta })
}

/// Pericenter state of `seed` with the pericenter at polar angle `psi`.
pub fn pericenter_state(sys: &SystemSpec, seed: &TorusSeed, psi: f64) -> Result<CartesianState> {
    let (r_minus, _) = radial::turning_points(sys, seed.em)?;
    let p = sys.p_theta_from_l(seed.em.l) / r_minus;
    let (s, c) = psi.sin_cos();
    Ok(CartesianState::new([r_minus * c, r_minus * s], [-p * s, p * c]))
}

/// The unperturbed periodic orbit through the pericenter at angle `psi`,
/// checked by integration.
pub fn unperturbed_orbit(sys: &SystemSpec, seed: &TorusSeed, psi: f64, cfg: &IntegratorConfig) -> Result<PeriodicOrbit> {
    let s0 = pericenter_state(sys, seed, psi)?;
    let orbit = PeriodicOrbit {
        s0,
        tau: seed.period,
        k: seed.k,
        eps: 0.0,
        energy_residual: 0.0,
        closure_residual: 0.0,
        winding: 0,
        minimal: false,
    };
    let report = verify_orbit(sys, &PerturbationSpec::zero(), 0.0, &orbit, seed.em.h, cfg)?;
    if !report.passed() {
        return Err(Error::VerificationFailed(format!(
            "unperturbed orbit at ψ = {psi}: closure {:e}, energy {:e}, winding {}",
            report.closure_residual, report.energy_deviation, report.winding
        )));
    }
    Ok(apply_report(orbit, &report))
}

fn apply_report(orbit: PeriodicOrbit, report: &VerificationReport) -> PeriodicOrbit {
    PeriodicOrbit {
        energy_residual: report.energy_deviation,
        closure_residual: report.closure_residual,
        winding: report.winding_rounded,
        minimal: report.minimal,
        ..orbit
    }
}

/// Section state at `(r₀, θ₀)` with tangential momentum on the energy level `h_star`.
pub fn section_state(
    sys: &SystemSpec,
    potential: &PerturbationSpec,
    eps: f64,
    h_star: f64,
    r0: f64,
    theta0: f64,
) -> Result<CartesianState> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::Domain(format!("section radius {r0} must be positive")));
    }
    let (s, c) = theta0.sin_cos();
    let x = Vector2::new(r0 * c, r0 * s);
    let kinetic = h_star - sys.central_potential(r0) + eps * potential.value(&x);
    let p = sys
        .momentum_for_kinetic(kinetic)
        .filter(|p| *p > 0.0)
        .ok_or_else(|| Error::EnergyBranch(format!("kinetic energy {kinetic} at r₀ = {r0}, θ₀ = {theta0}")))?;
    Ok(CartesianState { x, p: Vector2::new(-p * s, p * c) })
}

/// Solution, return time, iterations, residual; or reason, iterations, residual.
type LmOutcome = std::result::Result<(Vector2<f64>, f64, usize, f64), (String, usize, f64)>;

/// A continued branch, or the part that succeeded with the stall point and reason.
type BranchOutcome = std::result::Result<Vec<BranchPoint>, (Vec<BranchPoint>, f64, String)>;

struct Shooter<'a> {
    sys: &'a SystemSpec,
    model: PerturbedSystem,
    h_star: f64,
    k: u32,
    /// Expected return time; returns are searched in `[0.5, 1.5]` of it.
    tau_guess: f64,
    cfg: IntegratorConfig,
}

/// Return-map residual `((r(τ) − r₀)/r₀, θ(τ) − θ₀ − 2πk)` where `τ` is the
/// first pericenter passage after leaving the section, so `p_r(τ) = 0` holds
/// by construction.
struct Evaluation {
    f: Vector2<f64>,
    tau: f64,
}

impl Shooter<'_> {
    fn residual(&self, u: &Vector2<f64>) -> Result<Evaluation> {
        let s0 = section_state(self.sys, &self.model.potential, self.model.eps, self.h_star, u[0], u[1])?;
        let traj = integrate(&self.model, &s0, 1.5 * self.tau_guess, &self.cfg)?;
        let c = section_crossings_between(&traj, 0.5 * self.tau_guess, 1.5 * self.tau_guess)?
            .into_iter()
            .next()
            .ok_or(Error::InsufficientCrossings { found: 0, requested: 1 })?;
        let turns = c.theta - traj.theta(0) - TAU * f64::from(self.k);
        Ok(Evaluation { f: Vector2::new((c.state.radius() - u[0]) / u[0], turns), tau: c.t })
    }

    fn jacobian(&self, u: &Vector2<f64>) -> Result<Matrix2<f64>> {
        let steps = [1e-6 * u[0], 1e-4];
        let mut j = Matrix2::zeros();
        for (col, h) in steps.into_iter().enumerate() {
            let mut up = *u;
            let mut dn = *u;
            up[col] += h;
            dn[col] -= h;
            let d = (self.residual(&up)?.f - self.residual(&dn)?.f) / (2.0 * h);
            j.set_column(col, &d);
        }
        Ok(j)
    }

    /// Levenberg-Marquardt from `u`. Returns the solution with its return
    /// time, the iteration count and the final residual norm.
    fn solve(&self, mut u: Vector2<f64>, opts: &ShootingOptions) -> LmOutcome {
        let mut ev = self.residual(&u).map_err(|e| (e.to_string(), 0, f64::NAN))?;
        let mut mu = 1e-8;
        let mut nu = 2.0;
        for iter in 0..opts.max_iter {
            let fnorm = ev.f.amax();
            if fnorm <= opts.residual_tol {
                return Ok((u, ev.tau, iter, fnorm));
            }
            let j = self.jacobian(&u).map_err(|e| (e.to_string(), iter, fnorm))?;
            let a = j.transpose() * j;
            let g = j.transpose() * ev.f;
            let dmax = a.diagonal().max();
            let damp = a.diagonal().map(|d| d.max(1e-12 * dmax));
            let f2 = ev.f.norm_squared();
            let mut accepted = false;
            for _ in 0..40 {
                let m = a + Matrix2::from_diagonal(&(damp * mu));
                let Some(delta) = m.lu().solve(&(-g)) else {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                };
                let trial = u + delta;
                let predicted = f2 - (ev.f + j * delta).norm_squared();
                match self.residual(&trial) {
                    Ok(et) if predicted > 0.0 && et.f.norm_squared() < f2 => {
                        let rho = (f2 - et.f.norm_squared()) / predicted;
                        mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                        nu = 2.0;
                        u = trial;
                        ev = et;
                        accepted = true;
                        break;
                    }
                    _ => {
                        mu *= nu;
                        nu *= 2.0;
                    }
                }
            }
            if !accepted {
                let fnorm = ev.f.amax();
                // stuck at the integration noise floor
                return if fnorm <= opts.stall_tol {
                    Ok((u, ev.tau, iter, fnorm))
                } else {
                    Err(("damping exhausted without decrease".into(), iter, fnorm))
                };
            }
        }
        let fnorm = ev.f.amax();
        if fnorm <= opts.stall_tol {
            Ok((u, ev.tau, opts.max_iter, fnorm))
        } else {
            Err((format!("no convergence in {} iterations", opts.max_iter), opts.max_iter, fnorm))
        }
    }
}

/// Shooting from one initial guess; the result is verified but not deduplicated.
pub fn shoot_from(
    sys: &SystemSpec,
    potential: &PerturbationSpec,
    eps: f64,
    h_star: f64,
    k: u32,
    guess: (f64, f64, f64),
    opts: &ShootingOptions,
) -> std::result::Result<(PeriodicOrbit, VerificationReport, SeedDiagnostic), SeedDiagnostic> {
    let shooter = Shooter {
        sys,
        model: PerturbedSystem::new(*sys, eps, potential.clone()),
        h_star,
        k,
        tau_guess: guess.2,
        cfg: opts.integrator,
    };
    let u0 = Vector2::new(guess.0, guess.1);
    let diag = |outcome: String, iterations, residual| SeedDiagnostic { theta0: guess.1, iterations, residual, outcome };
    let (u, tau, iterations, residual) = shooter.solve(u0, opts).map_err(|(m, i, r)| diag(m, i, r))?;
    let s0 = section_state(sys, potential, eps, h_star, u[0], u[1]).map_err(|e| diag(e.to_string(), iterations, residual))?;
    let orbit = PeriodicOrbit { s0, tau, k, eps, energy_residual: 0.0, closure_residual: 0.0, winding: 0, minimal: false };
    let check = VerifyTolerances { closure: opts.closure_tol, energy: opts.energy_tol };
    let report = verify_with(sys, potential, eps, &orbit, h_star, &opts.integrator, check)
        .map_err(|e| diag(e.to_string(), iterations, residual))?;
    if !report.passed() {
        return Err(diag(
            format!(
                "verification failed: closure {:e}, energy {:e}, winding {}, minimal {}, pericenter {}",
                report.closure_residual, report.energy_deviation, report.winding, report.minimal, report.pericenter
            ),
            iterations,
            residual,
        ));
    }
    Ok((apply_report(orbit, &report), report, diag("converged".into(), iterations, residual)))
}

/// Periodic orbits of `H_ε = H₀ − εU` on the level `H*` near the resonant
/// torus of winding `k`, from `n_seeds` pericenter angles.
pub fn find_prescribed_energy_orbits(
    sys: &SystemSpec,
    potential: &PerturbationSpec,
    eps: f64,
    h_star: f64,
    k: u32,
    opts: &ShootingOptions,
) -> Result<OrbitSearch> {
    sys.validate()?;
    opts.integrator.validate()?;
    if opts.n_seeds == 0 {
        return Err(Error::InvalidParameter { name: "n_seeds", reason: "must be at least 1".into() });
    }
    let seed = solve_resonant_l(sys, h_star, k)?;
    let (r_minus, _) = radial::turning_points(sys, seed.em)?;
    let guesses: Vec<f64> = (0..opts.n_seeds).map(|i| TAU * i as f64 / opts.n_seeds as f64).collect();
    let outcomes: Vec<_> =
        guesses.par_iter().map(|&th| shoot_from(sys, potential, eps, h_star, k, (r_minus, th, seed.period), opts)).collect();
    let mut diagnostics = Vec::with_capacity(outcomes.len());
    let mut found = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((orbit, _, d)) => {
                diagnostics.push(d);
                found.push(orbit);
            }
            Err(d) => {
                debug!("seed θ₀ = {:.4}: {}", d.theta0, d.outcome);
                diagnostics.push(d);
            }
        }
    }
    let orbits = deduplicate(found, opts.dedupe_tol);
    info!("{} orbit(s) at k = {k}, eps = {eps:e}", orbits.len());
    Ok(OrbitSearch { seed, orbits, diagnostics })
}

/// Keep one representative per section state, sorted by pericenter angle.
pub fn deduplicate(mut orbits: Vec<PeriodicOrbit>, tol: f64) -> Vec<PeriodicOrbit> {
    orbits.sort_by(|a, b| a.closure_residual.total_cmp(&b.closure_residual));
    let mut kept: Vec<PeriodicOrbit> = Vec::new();
    for o in orbits {
        if kept.iter().all(|q| q.s0.distance(&o.s0) > tol) {
            kept.push(o);
        }
    }
    kept.sort_by(|a, b| a.theta0().total_cmp(&b.theta0()));
    kept
}

#[derive(Debug, Clone, Copy)]
struct VerifyTolerances {
    closure: f64,
    energy: f64,
}

/// Re-integrate `orbit` at tightened tolerance and check closure, energy,
/// winding and minimality.
///
/// Closure is measured at the pericenter passage nearest `τ`: right at the
/// pericenter `ṗ` is large, so comparing states at the fixed time `τ` would
/// mostly measure the timing error.
pub fn verify_orbit(
    sys: &SystemSpec,
    potential: &PerturbationSpec,
    eps: f64,
    orbit: &PeriodicOrbit,
    h_star: f64,
    cfg: &IntegratorConfig,
) -> Result<VerificationReport> {
    let d = ShootingOptions::default();
    verify_with(sys, potential, eps, orbit, h_star, cfg, VerifyTolerances { closure: d.closure_tol, energy: d.energy_tol })
}

fn verify_with(
    sys: &SystemSpec,
    potential: &PerturbationSpec,
    eps: f64,
    orbit: &PeriodicOrbit,
    h_star: f64,
    cfg: &IntegratorConfig,
    tol: VerifyTolerances,
) -> Result<VerificationReport> {
    let model = PerturbedSystem::new(*sys, eps, potential.clone());
    let tight = cfg.tightened();
    let tau = orbit.tau;
    let traj = integrate(&model, &orbit.s0, 1.05 * tau, &tight)?;

    let returns = section_crossings_between(&traj, 0.5 * tau, 1.05 * tau)?;
    let (closure, offset) = returns
        .iter()
        .min_by(|a, b| (a.t - tau).abs().total_cmp(&(b.t - tau).abs()))
        .map(|c| (c.state.distance(&orbit.s0), (c.t - tau).abs()))
        .unwrap_or((f64::INFINITY, f64::INFINITY));

    let energy = max_energy_deviation(&model, &traj, tau, h_star)?;
    let w = winding_number(&traj, 0.0, tau, false)?;
    let submultiple_distances: Vec<f64> =
        (2..=orbit.k).map(|l| traj.eval(tau / f64::from(l)).map(|(s, _)| s.distance(&orbit.s0))).collect::<Result<_>>()?;
    let minimal = submultiple_distances.iter().all(|d| *d > 1e-3);

    let f = model.field(&orbit.s0)?;
    let radial_accel = f.dx.dot(&orbit.s0.p) + orbit.s0.x.dot(&f.dp);
    let pericenter = radial_accel > 0.0 && orbit.s0.radial_momentum().abs() <= 1e-9 * orbit.s0.p.norm();

    Ok(VerificationReport {
        closure_residual: closure,
        return_time_offset: offset,
        energy_deviation: energy,
        winding: w.value,
        winding_rounded: w.rounded,
        submultiple_distances,
        pericenter,
        closure_ok: closure <= tol.closure,
        energy_ok: energy <= tol.energy,
        winding_ok: w.rounded == i64::from(orbit.k) && w.distance_to_integer() < 1e-3,
        minimal,
    })
}

fn max_energy_deviation(model: &PerturbedSystem, traj: &Trajectory, tau: f64, h_star: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, &t) in traj.times().iter().enumerate() {
        if t > tau {
            break;
        }
        worst = worst.max((model.energy(&traj.state(i))? - h_star).abs());
    }
    let (end, _) = traj.eval(tau)?;
    Ok(worst.max((model.energy(&end)? - h_star).abs()))
}

/// Distance from a section state to the circle of pericenter states of the
/// unperturbed torus, in the rotation-invariant coordinates `(r, |p|)`.
pub fn torus_distance(sys: &SystemSpec, seed: &TorusSeed, s: &CartesianState) -> Result<f64> {
    let p = pericenter_state(sys, seed, 0.0)?;
    Ok((s.radius() - p.radius()).hypot(s.p.norm() - p.p.norm()))
}

/// One member of a continuation branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub eps: f64,
    pub orbit: PeriodicOrbit,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationFamily {
    pub seed: TorusSeed,
    /// Branches in the order of the pericenter angle at the first step.
    pub branches: Vec<Vec<BranchPoint>>,
    /// Largest `eps` reached by every branch.
    pub eps_reached: f64,
}

#[derive(Debug, ThisError)]
pub enum ContinuationError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("continuation stalled on branch {branch} at eps = {eps:e}: {reason}")]
    Stall { branch: usize, eps: f64, reason: String, family: Box<ContinuationFamily> },
}

/// Natural-parameter continuation from `eps_max/steps` up to `eps_max`.
///
/// Each branch is stepped independently from its previous member; a failed
/// step is halved, and a step below `1e-8` stalls the continuation.
pub fn continuation_in_epsilon(
    sys: &SystemSpec,
    potential: &PerturbationSpec,
    h_star: f64,
    k: u32,
    eps_max: f64,
    steps: usize,
    opts: &ShootingOptions,
) -> std::result::Result<ContinuationFamily, ContinuationError> {
    if steps == 0 {
        return Err(Error::InvalidParameter { name: "steps", reason: "must be at least 1".into() }.into());
    }
    if !(eps_max >= 0.0 && eps_max.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps_max",
            reason: format!("must be finite and non-negative, got {eps_max}"),
        }
        .into());
    }
    let first = eps_max / steps as f64;
    let search = find_prescribed_energy_orbits(sys, potential, first, h_star, k, opts)?;
    let mut family = ContinuationFamily { seed: search.seed, branches: Vec::new(), eps_reached: first };
    if search.orbits.is_empty() {
        return Err(ContinuationError::Stall {
            branch: 0,
            eps: first,
            reason: "no orbit found at the first step".into(),
            family: Box::new(family),
        });
    }
    let verify_tol = VerifyTolerances { closure: opts.closure_tol, energy: opts.energy_tol };
    let mut branches = Vec::new();
    for orbit in &search.orbits {
        let report = verify_with(sys, potential, first, orbit, h_star, &opts.integrator, verify_tol)?;
        branches.push(vec![BranchPoint { eps: first, orbit: *orbit, report }]);
    }
    family.branches = branches;
    if eps_max == 0.0 {
        family.eps_reached = 0.0;
        return Ok(family);
    }

    let nominal = first;
    let results: Vec<BranchOutcome> = family
        .branches
        .clone()
        .into_par_iter()
        .map(|mut branch| {
            let mut step = nominal;
            loop {
                let last = branch.last().expect("branch starts non-empty").clone();
                if last.eps >= eps_max {
                    return Ok(branch);
                }
                let target = (last.eps + step).min(eps_max);
                let target = if eps_max - target < 1e-3 * nominal { eps_max } else { target };
                let o = &last.orbit;
                let guess = (o.s0.radius(), o.s0.x[1].atan2(o.s0.x[0]), o.tau);
                match shoot_from(sys, potential, target, h_star, k, guess, opts) {
                    Ok((orbit, report, _)) if same_branch(o, &orbit) => {
                        branch.push(BranchPoint { eps: target, orbit, report });
                        step = (2.0 * step).min(nominal);
                    }
                    outcome => {
                        step *= 0.5;
                        if step < 1e-8 {
                            let reason = match outcome {
                                Err(d) => d.outcome,
                                Ok(_) => "jumped to another branch".into(),
                            };
                            return Err((branch, last.eps, reason));
                        }
                    }
                }
            }
        })
        .collect();

    let mut stall = None;
    family.branches = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(b) => b,
            Err((b, eps, reason)) => {
                stall.get_or_insert((i, eps, reason));
                b
            }
        })
        .collect();
    family.eps_reached = family.branches.iter().map(|b| b.last().map_or(0.0, |p| p.eps)).fold(f64::INFINITY, f64::min);
    match stall {
        None => Ok(family),
        Some((branch, eps, reason)) => Err(ContinuationError::Stall { branch, eps, reason, family: Box::new(family) }),
    }
}

/// Continuation accepts a step only if the pericenter direction moved by
/// less than 0.2 rad.
fn same_branch(a: &PeriodicOrbit, b: &PeriodicOrbit) -> bool {
    let d = (a.theta0() - b.theta0()).rem_euclid(TAU);
    d.min(TAU - d) < 0.2
}

/// Levi-Civita parameters of a test particle of mass `m` and energy `E`
/// around a mass `M`: `κ = mGM + 4EGM/c²`, `λ = 3G²M²/c²`.
pub fn levi_civita_physical(g: f64, big_m: f64, m: f64, c: f64, e: f64) -> Result<LeviCivitaSystem> {
    for (name, v) in [("G", g), ("M", big_m), ("m", m), ("c", c)] {
        crate::error::ensure_positive(name, v)?;
    }
    let c2 = c * c;
    if !(e > -m * c2 / 4.0 && e < 0.0) {
        return Err(Error::OutOfRange(format!("energy {e} outside (−mc²/4, 0) = ({}, 0)", -m * c2 / 4.0)));
    }
    let kappa = m * g * big_m + 4.0 * e * g * big_m / c2;
    let lambda = 3.0 * g * g * big_m * big_m / c2;
    LeviCivitaSystem::new(m, kappa, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::RelativisticSystem;
    use approx::assert_relative_eq;

    fn lc() -> SystemSpec {
        SystemSpec::from(LeviCivitaSystem::new(1.0, 1.0, 0.1).unwrap())
    }

    fn rel() -> SystemSpec {
        SystemSpec::from(RelativisticSystem::new(1.0, 1.0, 10.0).unwrap())
    }

    #[test]
    fn lstar_max_example_and_defining_property() {
        let SystemSpec::LeviCivita(s) = lc() else { unreachable!() };
        let l = lstar_max_lc(&s, -0.5).unwrap();
        assert_relative_eq!(l, 1.2f64.sqrt(), epsilon = 1e-15);
        assert!((l - 1.095445).abs() < 1e-6);
        assert!((radial::w_min(&s, l).unwrap().0 + 0.5).abs() < 1e-12);
        assert!(lstar_max_lc(&s, 0.0).is_err());
    }

    #[test]
    fn winding_floor_examples() {
        assert_eq!(winding_floor(&lc(), -0.5).unwrap(), 1);
        assert_eq!(winding_floor(&rel(), -0.5).unwrap(), 1);
        let kepler = SystemSpec::from(LeviCivitaSystem::new(1.0, 1.0, 1e-12).unwrap());
        for h in [-2.0, -0.5, -0.01] {
            assert_eq!(winding_floor(&kepler, h).unwrap(), 1);
        }
        assert!(winding_floor(&rel(), -100.0).is_err());
    }

    #[test]
    fn resonant_l_examples() {
        let s = solve_resonant_l(&lc(), -0.5, 2).unwrap();
        assert_relative_eq!(s.em.l * s.em.l, 0.8 / 3.0, max_relative = 1e-14);
        assert!((s.em.l - 0.516398).abs() < 1e-6);
        assert_relative_eq!(s.apsidal_angle, 2.0 * TAU, max_relative = 1e-12);
        let quad = radial::apsidal_angle_quadrature(&lc(), s.em).unwrap();
        assert_relative_eq!(quad, 2.0 * TAU, max_relative = 1e-10);

        let r = solve_resonant_l(&rel(), -0.5, 2).unwrap();
        assert_relative_eq!(r.em.l * r.em.l, 4.0 / 300.0, max_relative = 1e-14);
        assert!((r.em.l - 0.115470).abs() < 1e-6);
        assert!((r.period - 6.306822).abs() < 1e-6);
    }

    #[test]
    fn resonant_l_agrees_with_bisection_and_limits() {
        for k in 2..6 {
            for sys in [lc(), rel()] {
                let s = solve_resonant_l(&sys, -0.5, k).unwrap();
                let b = resonant_l_bisection(&sys, -0.5, k).unwrap();
                assert_relative_eq!(s.em.l, b, max_relative = 1e-9);
            }
        }
        let l = solve_resonant_l(&lc(), -0.5, 400).unwrap().em.l;
        assert!((l - 0.2f64.sqrt()).abs() < 1e-5);
        assert!(solve_resonant_l(&lc(), -0.5, 1).is_err());
    }

    #[test]
    fn unperturbed_orbit_closes_with_winding_k() {
        let cfg = IntegratorConfig::default();
        let seed = solve_resonant_l(&lc(), -0.5, 2).unwrap();
        let o = unperturbed_orbit(&lc(), &seed, 0.0, &cfg).unwrap();
        assert_relative_eq!(o.tau, TAU, max_relative = 1e-10);
        assert_eq!(o.winding, 2);
        assert!(o.closure_residual < 1e-7 && o.minimal);
    }

    #[test]
    fn unperturbed_orbit_rotates_with_psi() {
        let cfg = IntegratorConfig::default();
        let seed = solve_resonant_l(&lc(), -0.5, 2).unwrap();
        let psi = 1.234;
        let a = unperturbed_orbit(&lc(), &seed, 0.0, &cfg).unwrap();
        let b = unperturbed_orbit(&lc(), &seed, psi, &cfg).unwrap();
        let model = PerturbedSystem::unperturbed(lc());
        let ta = integrate(&model, &a.s0, a.tau, &cfg).unwrap();
        let tb = integrate(&model, &b.s0, b.tau, &cfg).unwrap();
        for t in [0.3, 1.7, 4.0] {
            let (sa, _) = ta.eval(t).unwrap();
            let (sb, _) = tb.eval(t).unwrap();
            assert!(sb.rotated(-psi).distance(&sa) < 1e-8);
        }
    }

    #[test]
    fn doubled_period_is_not_minimal() {
        let cfg = IntegratorConfig::default();
        let seed = solve_resonant_l(&lc(), -0.5, 2).unwrap();
        let o = unperturbed_orbit(&lc(), &seed, 0.0, &cfg).unwrap();
        let doubled = PeriodicOrbit { tau: 2.0 * o.tau, ..o };
        let rep = verify_orbit(&lc(), &PerturbationSpec::zero(), 0.0, &doubled, -0.5, &cfg).unwrap();
        assert!(!rep.minimal);
        assert!(rep.submultiple_distances[0] < 1e-3);
        assert!(!rep.passed());
    }

    #[test]
    fn unperturbed_seeds_converge_without_steps() {
        let opts = ShootingOptions { n_seeds: 4, ..Default::default() };
        let search = find_prescribed_energy_orbits(&lc(), &PerturbationSpec::linear_x1(), 0.0, -0.5, 2, &opts).unwrap();
        assert_eq!(search.orbits.len(), 4);
        assert!(search.diagnostics.iter().all(|d| d.iterations == 0 && d.residual < 1e-9), "{:?}", search.diagnostics);
    }

    #[test]
    fn section_state_respects_energy() {
        let u = PerturbationSpec::linear_x1();
        let s = section_state(&rel(), &u, 1e-3, -0.5, 0.3, 0.7).unwrap();
        assert!((rel().hamiltonian(&s, 1e-3, &u).unwrap() + 0.5).abs() < 1e-14);
        assert!(s.radial_momentum().abs() < 1e-15 && s.angular_momentum() > 0.0);
        assert!(matches!(section_state(&lc(), &u, 0.0, -0.5, 10.0, 0.0), Err(Error::EnergyBranch(_))));
    }

    #[test]
    fn physical_parameters() {
        let s = levi_civita_physical(1.0, 1.0, 1.0, 10.0, -0.5).unwrap();
        assert_eq!(s.kappa, 0.98);
        assert_eq!(s.lambda, 0.03);
        assert!(levi_civita_physical(1.0, 1.0, 1.0, 10.0, -25.0).is_err());
        assert!(levi_civita_physical(1.0, 1.0, 1.0, 10.0, 0.0).is_err());
        let far = levi_civita_physical(1.0, 1.0, 1.0, 1e6, -0.5).unwrap();
        assert!((far.kappa - 1.0).abs() < 1e-11 && far.lambda < 1e-11);
    }
}

//! Action-angle reduction of the unperturbed problems.
//!
//! Actions are `I₁ = 𝒜(H, L)/2π + L`, `I₂ = L`; angles are the normalised time
//! since the last pericenter and the pericenter direction advanced uniformly
//! over the radial period.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate, section_crossings, IntegratorConfig};
use crate::radial::{self, EnergyMomentum};
use crate::systems::{CartesianState, LeviCivitaSystem, PerturbedSystem, RelativisticSystem, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionPair {
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
}

impl ActionPair {
    pub fn new(i1: f64, i2: f64) -> Self {
        Self { i1, i2 }
    }

    fn norm(&self) -> f64 {
        self.i1.hypot(self.i2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub phi1: f64,
    pub phi2: f64,
}

impl AnglePair {
    /// Both components reduced to `[0, 2π)`.
    pub fn new(phi1: f64, phi2: f64) -> Self {
        Self { phi1: reduce_angle(phi1), phi2: reduce_angle(phi2) }
    }

    /// Componentwise distance on the torus.
    pub fn distance(&self, other: &AnglePair) -> f64 {
        let d = |a: f64, b: f64| {
            let x = (a - b).rem_euclid(TAU);
            x.min(TAU - x)
        };
        d(self.phi1, other.phi1).max(d(self.phi2, other.phi2))
    }
}

fn reduce_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NondegeneracyReport {
    pub gradient: Vector2<f64>,
    pub hessian: Matrix2<f64>,
    /// Determinant of `[[∇²K₀, ∇K₀ᵀ], [∇K₀, 0]]`.
    pub bordered_det: f64,
    /// `⟨∇²K₀ v, v⟩` with `v = (∂₂K₀, −∂₁K₀)`.
    pub quadratic_form: f64,
    /// Largest entrywise Hessian discrepancy: analytic against finite
    /// differences for Levi-Civita, the finite-difference error estimate for
    /// the relativistic family.
    pub analytic_vs_fd_error: f64,
    /// `analytic_vs_fd_error` propagated to the quadratic form.
    pub quadratic_form_error: f64,
}

pub fn actions_from_hl(sys: &SystemSpec, em: EnergyMomentum) -> Result<ActionPair> {
    let area = radial::area(sys, em)?;
    Ok(ActionPair::new(area / TAU + em.l, em.l))
}

/// `γ(I₁, I₂) = I₁ − I₂ + √m √(mI₂² − 2λ)`.
pub fn gamma(sys: &LeviCivitaSystem, i: ActionPair) -> Result<f64> {
    let a = sys.m * i.i2 * i.i2 - 2.0 * sys.lambda;
    if !(a > 0.0) {
        return Err(Error::Domain(format!("mI₂² − 2λ = {a} must be positive")));
    }
    let g = i.i1 - i.i2 + sys.m.sqrt() * a.sqrt();
    if !(g > 0.0) {
        return Err(Error::Domain(format!("γ = {g} must be positive")));
    }
    Ok(g)
}

pub fn k0_levicivita(sys: &LeviCivitaSystem, i: ActionPair) -> Result<f64> {
    let g = gamma(sys, i)?;
    Ok(-0.5 * sys.m * sys.kappa * sys.kappa / (g * g))
}

/// Radial part `X = I₁ − I₂ + √(I₂² − α²/c²)` of the relativistic action map.
fn relativistic_x(sys: &RelativisticSystem, i: ActionPair) -> Result<(f64, f64)> {
    let a = sys.alpha / sys.c;
    let d = i.i2 * i.i2 - a * a;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("c²I₂² − α² = {} must be positive", d * sys.c * sys.c)));
    }
    Ok((i.i1 - i.i2 + d.sqrt(), a))
}

pub fn k0_relativistic(sys: &RelativisticSystem, i: ActionPair) -> Result<f64> {
    let (x, a) = relativistic_x(sys, i)?;
    let rad = x * x + a * a;
    if !(rad > 0.0) {
        return Err(Error::Domain(format!("radicand {rad} must be positive")));
    }
    if x > 0.0 {
        // mc²(X/√(X²+a²) − 1) without the cancellation
        let s = rad.sqrt();
        Ok(-sys.m * sys.alpha * sys.alpha / (s * (x + s)))
    } else {
        k0_relativistic_direct(sys, i)
    }
}

/// The relativistic `K₀` in its unsimplified form
/// `mc² (I₁ − I₂ + √(c²I₂² − α²)/c) / √((I₁−I₂)² + I₂² + (2/c)(I₁−I₂)√(c²I₂² − α²)) − mc²`.
pub fn k0_relativistic_direct(sys: &RelativisticSystem, i: ActionPair) -> Result<f64> {
    let c = sys.c;
    let w = c * c * i.i2 * i.i2 - sys.alpha * sys.alpha;
    if !(w > 0.0) {
        return Err(Error::Domain(format!("c²I₂² − α² = {w} must be positive")));
    }
    let d = i.i1 - i.i2;
    let rad = d * d + i.i2 * i.i2 + 2.0 / c * d * w.sqrt();
    if !(rad > 0.0) {
        return Err(Error::Domain(format!("radicand {rad} must be positive")));
    }
    let mc2 = sys.m * c * c;
    Ok(mc2 * (d + w.sqrt() / c) / rad.sqrt() - mc2)
}

pub fn k0(sys: &SystemSpec, i: ActionPair) -> Result<f64> {
    match sys {
        SystemSpec::LeviCivita(s) => k0_levicivita(s, i),
        SystemSpec::Relativistic(s) => k0_relativistic(s, i),
    }
}

fn lc_gradient(sys: &LeviCivitaSystem, i: ActionPair) -> Result<Vector2<f64>> {
    let g = gamma(sys, i)?;
    let m = sys.m;
    let base = m * sys.kappa * sys.kappa / g.powi(3);
    let a = m * i.i2 * i.i2 - 2.0 * sys.lambda;
    Ok(Vector2::new(base, base * (m * m.sqrt() * i.i2 / a.sqrt() - 1.0)))
}

fn lc_hessian(sys: &LeviCivitaSystem, i: ActionPair) -> Result<Matrix2<f64>> {
    let g = gamma(sys, i)?;
    let m = sys.m;
    let mk2 = m * sys.kappa * sys.kappa;
    let a = m * i.i2 * i.i2 - 2.0 * sys.lambda;
    let g2 = m * m.sqrt() * i.i2 / a.sqrt() - 1.0;
    let g22 = -2.0 * sys.lambda * m * m.sqrt() / (a * a.sqrt());
    let c4 = -3.0 * mk2 / g.powi(4);
    let h11 = c4;
    let h12 = c4 * g2;
    let h22 = c4 * g2 * g2 + mk2 / g.powi(3) * g22;
    Ok(Matrix2::new(h11, h12, h12, h22))
}

/// Closed determinant `6λ m³√m κ⁴ γ⁻⁷ (mI₂² − 2λ)^{−3/2}` of the Levi-Civita Hessian.
pub fn lc_hessian_det_closed(sys: &LeviCivitaSystem, i: ActionPair) -> Result<f64> {
    let g = gamma(sys, i)?;
    let m = sys.m;
    let a = m * i.i2 * i.i2 - 2.0 * sys.lambda;
    Ok(6.0 * sys.lambda * m.powi(3) * m.sqrt() * sys.kappa.powi(4) / g.powi(7) / (a * a.sqrt()))
}

/// Derivative estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate<T> {
    pub value: T,
    pub error: f64,
}

/// Room for finite-difference stencils: the distance from `i` to the edge of
/// the `I₂` domain.
fn stencil_room(sys: &SystemSpec, i: ActionPair) -> f64 {
    match sys {
        SystemSpec::LeviCivita(s) => i.i2.abs() - (2.0 * s.lambda / s.m).sqrt(),
        SystemSpec::Relativistic(s) => i.i2.abs() - s.alpha / s.c,
    }
}

fn step_base(sys: &SystemSpec, i: ActionPair, rel: f64) -> f64 {
    (rel * i.norm().max(1.0)).min(0.05 * stencil_room(sys, i))
}

/// Central differences at `h`, `h/2`, `h/4`, two Richardson levels; the error
/// is the spread between the two extrapolants plus a round-off bound.
fn richardson<F: Fn(f64) -> Result<f64>>(d: F, h: f64, roundoff: f64, order: i32) -> Result<(f64, f64)> {
    let d1 = d(h)?;
    let d2 = d(h / 2.0)?;
    let d4 = d(h / 4.0)?;
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    let round = roundoff / (h / 4.0).powi(order);
    Ok((r2, (r2 - r1).abs() + round))
}

/// Richardson-extrapolated central-difference gradient with step
/// `1e-5·max(1, |I|)`, shrunk near the edge of the domain.
pub fn k0_gradient_fd(sys: &SystemSpec, i: ActionPair) -> Result<FdEstimate<Vector2<f64>>> {
    let f0 = k0(sys, i)?;
    let h = step_base(sys, i, 1e-5);
    let round = 4.0 * f64::EPSILON * f0.abs().max(f64::MIN_POSITIVE);
    let f = |a: f64, b: f64| k0(sys, ActionPair::new(i.i1 + a, i.i2 + b));
    let (g1, e1) = richardson(|h| Ok((f(h, 0.0)? - f(-h, 0.0)?) / (2.0 * h)), h, round, 1)?;
    let (g2, e2) = richardson(|h| Ok((f(0.0, h)? - f(0.0, -h)?) / (2.0 * h)), h, round, 1)?;
    Ok(FdEstimate { value: Vector2::new(g1, g2), error: e1.max(e2) })
}

/// Richardson-extrapolated second differences with step `1e-3·max(1, |I|)`,
/// shrunk near the edge of the domain.
pub fn k0_hessian_fd(sys: &SystemSpec, i: ActionPair) -> Result<FdEstimate<Matrix2<f64>>> {
    let f0 = k0(sys, i)?;
    let h = step_base(sys, i, 1e-3);
    let round = 8.0 * f64::EPSILON * f0.abs().max(f64::MIN_POSITIVE);
    let f = |a: f64, b: f64| k0(sys, ActionPair::new(i.i1 + a, i.i2 + b));
    let (h11, e11) = richardson(|h| Ok((f(h, 0.0)? - 2.0 * f0 + f(-h, 0.0)?) / (h * h)), h, round, 2)?;
    let (h22, e22) = richardson(|h| Ok((f(0.0, h)? - 2.0 * f0 + f(0.0, -h)?) / (h * h)), h, round, 2)?;
    let (h12, e12) = richardson(|h| Ok((f(h, h)? - f(h, -h)? - f(-h, h)? + f(-h, -h)?) / (4.0 * h * h)), h, round, 2)?;
    Ok(FdEstimate { value: Matrix2::new(h11, h12, h12, h22), error: e11.max(e22).max(e12) })
}

/// `∇K₀`: analytic for Levi-Civita, finite differences for the relativistic family.
pub fn k0_gradient(sys: &SystemSpec, i: ActionPair) -> Result<FdEstimate<Vector2<f64>>> {
    match sys {
        SystemSpec::LeviCivita(s) => Ok(FdEstimate { value: lc_gradient(s, i)?, error: 0.0 }),
        SystemSpec::Relativistic(_) => k0_gradient_fd(sys, i),
    }
}

/// `∇²K₀`: analytic for Levi-Civita, finite differences for the relativistic family.
pub fn k0_hessian(sys: &SystemSpec, i: ActionPair) -> Result<FdEstimate<Matrix2<f64>>> {
    match sys {
        SystemSpec::LeviCivita(s) => Ok(FdEstimate { value: lc_hessian(s, i)?, error: 0.0 }),
        SystemSpec::Relativistic(_) => k0_hessian_fd(sys, i),
    }
}

pub fn bordered_determinant(hess: &Matrix2<f64>, grad: &Vector2<f64>) -> f64 {
    Matrix3::new(hess[(0, 0)], hess[(0, 1)], grad[0], hess[(1, 0)], hess[(1, 1)], grad[1], grad[0], grad[1], 0.0).determinant()
}

pub fn isoenergetic_quadratic_form(hess: &Matrix2<f64>, grad: &Vector2<f64>) -> f64 {
    let v = Vector2::new(grad[1], -grad[0]);
    (hess * v).dot(&v)
}

pub fn isoenergetic_nondegeneracy(sys: &SystemSpec, i: ActionPair) -> Result<NondegeneracyReport> {
    let grad = k0_gradient(sys, i)?;
    let hess = k0_hessian(sys, i)?;
    let hess_err = match sys {
        SystemSpec::LeviCivita(_) => {
            let fd = k0_hessian_fd(sys, i)?;
            (fd.value - hess.value).abs().max()
        }
        SystemSpec::Relativistic(_) => hess.error,
    };
    let (g, h) = (grad.value, hess.value);
    let v = Vector2::new(g[1], -g[0]);
    let hv = h * v;
    let qf_err = hess_err * v.lp_norm(1).powi(2) + 2.0 * hv.lp_norm(1) * grad.error;
    Ok(NondegeneracyReport {
        gradient: g,
        hessian: h,
        bordered_det: bordered_determinant(&h, &g),
        quadratic_form: hv.dot(&v),
        analytic_vs_fd_error: hess_err,
        quadratic_form_error: qf_err,
    })
}

/// Angles of an unperturbed state.
///
/// The state is integrated forward to the next pericenter at `t_c`; the time
/// since the previous pericenter is `μ = T − t_c` and the previous pericenter
/// direction is `θ(t_c) − Θ`.
pub fn angles_from_state(sys: &SystemSpec, s: &CartesianState, cfg: &IntegratorConfig) -> Result<AnglePair> {
    let model = PerturbedSystem::unperturbed(*sys);
    let h = sys.hamiltonian(s, 0.0, &crate::systems::PerturbationSpec::zero())?;
    let l = sys.orbit_l(s);
    let em = EnergyMomentum::new(h, l);
    let pr = s.radial_momentum();
    let circular = pr.abs() <= 1e-9 * s.p.norm();
    if !radial::admissible(sys, em) {
        return Err(if h < 0.0 && circular {
            Error::Degenerate("circular orbit has no transversal pericenter".into())
        } else {
            Error::NotAdmissible { h, l }
        });
    }
    let (r_minus, r_plus) = radial::turning_points(sys, em)?;
    let period = radial::radial_period_closed(sys, em)?;
    let sign = l.signum();
    let big_theta = sign * radial::apsidal_angle_closed(sys, em)?;
    let theta0 = s.x[1].atan2(s.x[0]);
    if circular && s.radius() < 0.5 * (r_minus + r_plus) {
        return Ok(AnglePair::new(0.0, theta0));
    }
    let traj = integrate(&model, s, 1.05 * period, cfg)?;
    let crossing = section_crossings(&traj, 1)
        .map_err(|e| match e {
            Error::InsufficientCrossings { .. } => Error::Degenerate("no transversal pericenter within one period".into()),
            other => other,
        })?
        .remove(0);
    let mu = (period - crossing.t).max(0.0);
    let psi = crossing.theta - big_theta;
    let frac = mu / period;
    Ok(AnglePair::new(TAU * frac, (big_theta - sign * TAU) * frac + psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lc_sys() -> LeviCivitaSystem {
        LeviCivitaSystem::new(1.0, 1.0, 0.1).unwrap()
    }

    fn rel_sys() -> RelativisticSystem {
        RelativisticSystem::new(1.0, 1.0, 10.0).unwrap()
    }

    #[test]
    fn k0_levicivita_example() {
        let i = ActionPair::new(1.2, 1.0);
        assert_relative_eq!(gamma(&lc_sys(), i).unwrap(), 0.2 + 0.8f64.sqrt(), epsilon = 1e-15);
        assert!((k0_levicivita(&lc_sys(), i).unwrap() + 0.417442).abs() < 1e-6);
    }

    #[test]
    fn actions_example_and_round_trip() {
        let sys = SystemSpec::from(lc_sys());
        let i = actions_from_hl(&sys, EnergyMomentum::new(-0.5, 1.0)).unwrap();
        assert_eq!(i.i2, 1.0);
        assert!((i.i1 - 1.105573).abs() < 1e-6);
        assert_relative_eq!(k0(&sys, i).unwrap(), -0.5, max_relative = 1e-14);
    }

    #[test]
    fn kepler_reduction_of_actions() {
        let sys = SystemSpec::from(LeviCivitaSystem::new(1.0, 1.3, 1e-14).unwrap());
        let i = actions_from_hl(&sys, EnergyMomentum::new(-0.4, 0.9)).unwrap();
        assert_relative_eq!(i.i1, 1.3 / 0.8f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(k0(&sys, i).unwrap(), -1.69 / (2.0 * i.i1 * i.i1), max_relative = 1e-12);
    }

    #[test]
    fn lc_gradient_example() {
        let g = lc_gradient(&lc_sys(), ActionPair::new(1.2, 1.0)).unwrap();
        assert!((g[0] - 0.762850).abs() < 1e-6);
        assert!((g[1] - 0.090042).abs() < 1e-6);
    }

    #[test]
    fn lc_determinant_matches_closed_form() {
        let i = ActionPair::new(1.2, 1.0);
        let h = lc_hessian(&lc_sys(), i).unwrap();
        let closed = lc_hessian_det_closed(&lc_sys(), i).unwrap();
        assert_relative_eq!(h.determinant(), closed, max_relative = 1e-12);
        assert!(closed > 0.0 && h.trace() < 0.0);
    }

    #[test]
    fn relativistic_forms_agree() {
        let sys = rel_sys();
        for (i1, i2) in [(0.5, 0.3), (1.2, 1.0), (0.2, 0.15), (3.0, 0.5)] {
            let i = ActionPair::new(i1, i2);
            let a = k0_relativistic(&sys, i).unwrap();
            let b = k0_relativistic_direct(&sys, i).unwrap();
            assert!((a - b).abs() <= 1e-12 * 100.0, "{a} vs {b}");
        }
    }

    #[test]
    fn relativistic_circular_branch() {
        let sys = rel_sys();
        let i = 0.4;
        let expect = 100.0 * ((100.0 * i * i - 1.0f64).sqrt() / (10.0 * i) - 1.0);
        assert_relative_eq!(k0_relativistic(&sys, ActionPair::new(i, i)).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn k0_domain_errors() {
        assert!(k0_levicivita(&lc_sys(), ActionPair::new(1.0, 0.3)).is_err());
        assert!(k0_levicivita(&lc_sys(), ActionPair::new(-2.0, 1.0)).is_err());
        assert!(k0_relativistic(&rel_sys(), ActionPair::new(1.0, 0.05)).is_err());
    }

    /// Chain rule through `X(I)`: an independent oracle for the relativistic derivatives.
    fn rel_analytic(sys: &RelativisticSystem, i: ActionPair) -> (Vector2<f64>, Matrix2<f64>) {
        let a = sys.alpha / sys.c;
        let d = i.i2 * i.i2 - a * a;
        let x = i.i1 - i.i2 + d.sqrt();
        let q = x * x + a * a;
        let mc2 = sys.m * sys.c * sys.c;
        let g1 = mc2 * a * a / q.powf(1.5);
        let g2 = -3.0 * mc2 * a * a * x / q.powf(2.5);
        let x2 = -1.0 + i.i2 / d.sqrt();
        let x22 = -a * a / d.powf(1.5);
        let grad = Vector2::new(g1, g1 * x2);
        let hess = Matrix2::new(g2, g2 * x2, g2 * x2, g2 * x2 * x2 + g1 * x22);
        (grad, hess)
    }

    #[test]
    fn relativistic_fd_matches_chain_rule() {
        let sys = rel_sys();
        let spec = SystemSpec::from(sys);
        for em in [EnergyMomentum::new(-0.5, 0.115470), EnergyMomentum::new(-0.3, 0.6), EnergyMomentum::new(-1.0, 0.4)] {
            let i = actions_from_hl(&spec, em).unwrap();
            let (g, h) = rel_analytic(&sys, i);
            let gf = k0_gradient(&spec, i).unwrap();
            let hf = k0_hessian(&spec, i).unwrap();
            assert!((gf.value - g).abs().max() <= 1e-8 * g.abs().max());
            assert!((hf.value - h).abs().max() <= 1e-5 * h.abs().max(), "{} vs {}", hf.value, h);
            // the error estimates bound the actual error
            assert!((gf.value - g).abs().max() <= gf.error.max(1e-14 * g.abs().max()));
            assert!((hf.value - h).abs().max() <= hf.error);
        }
    }

    #[test]
    fn relativistic_reference_point_is_nondegenerate() {
        let spec = SystemSpec::from(rel_sys());
        let i = actions_from_hl(&spec, EnergyMomentum::new(-0.5, 0.115470)).unwrap();
        let rep = isoenergetic_nondegeneracy(&spec, i).unwrap();
        assert!(rep.quadratic_form.abs() > 1e3 * rep.quadratic_form_error);
        assert_relative_eq!(rep.bordered_det, -rep.quadratic_form, max_relative = 1e-9);
    }

    #[test]
    fn frequencies_match_radial_data() {
        for spec in [SystemSpec::from(lc_sys()), SystemSpec::from(rel_sys())] {
            let em = EnergyMomentum::new(-0.5, 0.6);
            let i = actions_from_hl(&spec, em).unwrap();
            let g = k0_gradient(&spec, i).unwrap().value;
            let t = radial::radial_period_closed(&spec, em).unwrap();
            let th = radial::apsidal_angle_closed(&spec, em).unwrap();
            assert_relative_eq!(g[0], TAU / t, max_relative = 1e-6);
            assert_relative_eq!(g[1], (th - TAU) / t, max_relative = 1e-6);
        }
    }

    fn pericenter_state(spec: &SystemSpec, em: EnergyMomentum) -> CartesianState {
        let (rm, _) = radial::turning_points(spec, em).unwrap();
        CartesianState::new([rm, 0.0], [0.0, spec.p_theta_from_l(em.l) / rm])
    }

    #[test]
    fn angles_at_pericenter_vanish() {
        let spec = SystemSpec::from(lc_sys());
        let s = pericenter_state(&spec, EnergyMomentum::new(-0.5, 0.7));
        let a = angles_from_state(&spec, &s, &IntegratorConfig::default()).unwrap();
        assert!(a.distance(&AnglePair::new(0.0, 0.0)) < 1e-9);
    }

    #[test]
    fn angles_advance_linearly_and_periodically() {
        let cfg = IntegratorConfig::default();
        for spec in [SystemSpec::from(lc_sys()), SystemSpec::from(rel_sys())] {
            let em = EnergyMomentum::new(-0.5, 0.7);
            let s = pericenter_state(&spec, em);
            let t = radial::radial_period_closed(&spec, em).unwrap();
            let th = radial::apsidal_angle_closed(&spec, em).unwrap();
            let model = PerturbedSystem::unperturbed(spec);
            let quarter = integrate(&model, &s, 0.25 * t, &cfg).unwrap().last_state();
            let a = angles_from_state(&spec, &quarter, &cfg).unwrap();
            assert!((a.phi1 - TAU / 4.0).abs() < 1e-8, "{}", a.phi1);
            assert!(a.distance(&AnglePair::new(TAU / 4.0, (th - TAU) / 4.0)) < 1e-8, "{a:?} {}", (th - TAU) / 4.0);
            // one radial period later the pericenter has advanced by Θ
            let full = integrate(&model, &quarter, t, &cfg).unwrap().last_state();
            let b = angles_from_state(&spec, &full, &cfg).unwrap();
            assert!(b.distance(&AnglePair::new(a.phi1, a.phi2 + th - TAU)) < 1e-8);
        }
    }

    #[test]
    fn angles_periodic_on_resonant_torus() {
        let cfg = IntegratorConfig::default().tightened();
        let spec = SystemSpec::from(lc_sys());
        let em = EnergyMomentum::new(-0.5, (0.8f64 / 3.0).sqrt());
        let t = radial::radial_period_closed(&spec, em).unwrap();
        let model = PerturbedSystem::unperturbed(spec);
        let s = integrate(&model, &pericenter_state(&spec, em), 0.3 * t, &cfg).unwrap().last_state();
        let a = angles_from_state(&spec, &s, &cfg).unwrap();
        let later = integrate(&model, &s, t, &cfg).unwrap().last_state();
        let b = angles_from_state(&spec, &later, &cfg).unwrap();
        assert!(b.distance(&a) < 1e-8, "{a:?} {b:?}");
    }

    #[test]
    fn circular_orbit_is_degenerate() {
        let spec = SystemSpec::from(lc_sys());
        let (w, r) = radial::w_min(&lc_sys(), 0.7).unwrap();
        let _ = w;
        let s = CartesianState::new([r, 0.0], [0.0, 0.7 / r]);
        assert!(matches!(angles_from_state(&spec, &s, &IntegratorConfig::default()), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn bordered_identity(h11 in -5.0..5.0f64, h12 in -5.0..5.0f64, h22 in -5.0..5.0f64,
                             g1 in -5.0..5.0f64, g2 in -5.0..5.0f64) {
            let h = Matrix2::new(h11, h12, h12, h22);
            let g = Vector2::new(g1, g2);
            let b = bordered_determinant(&h, &g);
            let q = isoenergetic_quadratic_form(&h, &g);
            let scale = h.abs().max() * g.norm_squared();
            prop_assert!((b + q).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn lc_derivatives_match_fd(h in -1.5..-0.1f64, frac in 0.05..0.95f64) {
            let spec = SystemSpec::from(lc_sys());
            let (lo, hi) = radial::l_bounds(&spec, h).unwrap();
            let i = actions_from_hl(&spec, EnergyMomentum::new(h, lo + frac * (hi - lo))).unwrap();
            let g = lc_gradient(&lc_sys(), i).unwrap();
            let gf = k0_gradient_fd(&spec, i).unwrap().value;
            prop_assert!((g - gf).abs().max() <= 1e-7 * g.abs().max());
            let hs = lc_hessian(&lc_sys(), i).unwrap();
            let hf = k0_hessian_fd(&spec, i).unwrap().value;
            prop_assert!((hs - hf).abs().max() <= 1e-7 * hs.abs().max());
            prop_assert!(hs.determinant() > 0.0 && hs.trace() < 0.0);
        }
    }
}

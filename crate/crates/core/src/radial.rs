//! Radial phase-plane analysis of the unperturbed problems.
//!
//! For both families the squared radial momentum is a quadratic in `r` over `r²`:
//!
//! ```text
//! p_r²(r) = (A r² + B r + C) / r²,   A < 0 on bounded orbits
//! Levi-Civita:   A = 2mH,              B = 2mκ,              C = −m(mL² − 2λ)
//! relativistic:  A = H(H + 2mc²)/c²,   B = 2α(H + mc²)/c²,   C = α²/c² − L²
//! ```
//!
//! so the turning points have closed forms. The quadrature oracles integrate
//! the radial period, apsidal angle and enclosed area after the substitution
//! `r = r₋ + (r₊ − r₋) sin²u`, which turns the inverse square-root endpoint
//! singularities into smooth integrands on `[0, π/2]`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_doubling, DoublingSchedule};
use crate::systems::{LeviCivitaSystem, RelativisticSystem, SystemSpec};

/// Energy and angular-momentum label of an unperturbed torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMomentum {
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl EnergyMomentum {
    pub fn new(h: f64, l: f64) -> Self {
        Self { h, l }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialOrbitData {
    pub r_minus: f64,
    pub r_plus: f64,
    pub period: f64,
    pub apsidal_angle: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy)]
struct RadialQuadratic {
    a: f64,
    b: f64,
    c: f64,
}

impl RadialQuadratic {
    fn eval(&self, r: f64) -> f64 {
        (self.a * r + self.b) * r + self.c
    }

    fn slope(&self, r: f64) -> f64 {
        2.0 * self.a * r + self.b
    }
}

fn radial_quadratic(sys: &SystemSpec, em: EnergyMomentum) -> RadialQuadratic {
    match sys {
        SystemSpec::LeviCivita(s) => {
            RadialQuadratic { a: 2.0 * s.m * em.h, b: 2.0 * s.m * s.kappa, c: -s.m * (s.m * em.l * em.l - 2.0 * s.lambda) }
        }
        SystemSpec::Relativistic(s) => {
            let c2 = s.c * s.c;
            RadialQuadratic {
                a: em.h * (em.h + 2.0 * s.m * c2) / c2,
                b: 2.0 * s.alpha * (em.h + s.m * c2) / c2,
                c: s.alpha * s.alpha / c2 - em.l * em.l,
            }
        }
    }
}

/// Levi-Civita effective potential `W(r; L) = (mL² − 2λ)/(2r²) − κ/r`.
///
/// For the relativistic family this is the energy of a state with `p_r = 0`,
/// `c√(m²c² + L²/r²) − mc² − α/r`, so that `p_r² ≥ 0 ⇔ H ≥ W` in both cases.
pub fn effective_potential(sys: &SystemSpec, r: f64, l: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("effective potential needs r > 0, got {r}")));
    }
    match sys {
        SystemSpec::LeviCivita(s) => {
            let a = s.m * l * l - 2.0 * s.lambda;
            if a <= 0.0 {
                return Err(Error::Domain(format!("mL² − 2λ = {a} must be positive")));
            }
            Ok(a / (2.0 * r * r) - s.kappa / r)
        }
        SystemSpec::Relativistic(s) => Ok(s.kinetic_energy(&nalgebra::Vector2::new(l / r, 0.0)) - s.alpha / r),
    }
}

/// Global minimum of `W(·; L)` and its location `(mL² − 2λ)/κ`.
pub fn w_min(sys: &LeviCivitaSystem, l: f64) -> Result<(f64, f64)> {
    let a = sys.m * l * l - 2.0 * sys.lambda;
    if a <= 0.0 {
        return Err(Error::Domain(format!("mL² − 2λ = {a} must be positive")));
    }
    Ok((-sys.kappa * sys.kappa / (2.0 * a), a / sys.kappa))
}

/// `p_r²` at radius `r`, evaluated directly from the energy relation.
pub fn radial_momentum_sq(sys: &SystemSpec, r: f64, em: EnergyMomentum) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("p_r² needs r > 0, got {r}")));
    }
    Ok(match sys {
        SystemSpec::LeviCivita(s) => {
            let w = (s.m * em.l * em.l - 2.0 * s.lambda) / (2.0 * r * r) - s.kappa / r;
            2.0 * s.m * (em.h - w)
        }
        SystemSpec::Relativistic(s) => {
            let k = em.h + s.alpha / r;
            k * (k + 2.0 * s.m * s.c * s.c) / (s.c * s.c) - em.l * em.l / (r * r)
        }
    })
}

/// Membership in the region Λ of bounded non-circular, non-collision orbits.
pub fn admissible(sys: &SystemSpec, em: EnergyMomentum) -> bool {
    let (h, l) = (em.h, em.l);
    if !(h.is_finite() && l.is_finite()) {
        return false;
    }
    match sys {
        SystemSpec::LeviCivita(s) => {
            let a = s.m * l * l - 2.0 * s.lambda;
            a > 0.0 && -s.kappa * s.kappa / (2.0 * a) < h && h < 0.0
        }
        SystemSpec::Relativistic(s) => {
            let mc2 = s.m * s.c * s.c;
            let l2 = l * l;
            -mc2 < h && h < 0.0 && {
                let upper = s.alpha * s.alpha * s.m * s.m * s.c * s.c / (-h * (h + 2.0 * mc2));
                s.alpha * s.alpha / (s.c * s.c) < l2 && l2 < upper
            }
        }
    }
}

/// Open interval of admissible `|L|` at energy `h`, if any.
pub fn l_bounds(sys: &SystemSpec, h: f64) -> Option<(f64, f64)> {
    match sys {
        SystemSpec::LeviCivita(s) => (h < 0.0).then(|| ((2.0 * s.lambda / s.m).sqrt(), lstar_max(s, h))),
        SystemSpec::Relativistic(s) => {
            let mc2 = s.m * s.c * s.c;
            (h > -mc2 && h < 0.0).then(|| (s.alpha / s.c, s.alpha * s.m * s.c / (-h * (h + 2.0 * mc2)).sqrt()))
        }
    }
}

/// Largest admissible `L` at energy `h < 0` for Levi-Civita: `W_min(L) = h`.
pub fn lstar_max(sys: &LeviCivitaSystem, h: f64) -> f64 {
    ((2.0 * sys.lambda + sys.kappa * sys.kappa / (-2.0 * h)) / sys.m).sqrt()
}

fn require_admissible(sys: &SystemSpec, em: EnergyMomentum) -> Result<()> {
    if admissible(sys, em) {
        Ok(())
    } else {
        Err(Error::NotAdmissible { h: em.h, l: em.l })
    }
}

/// The two turning radii `r₋ < r₊`.
pub fn turning_points(sys: &SystemSpec, em: EnergyMomentum) -> Result<(f64, f64)> {
    require_admissible(sys, em)?;
    let q = radial_quadratic(sys, em);
    let disc = q.b * q.b - 4.0 * q.a * q.c;
    if !(disc > 0.0) {
        return Err(Error::Degenerate(format!("radial discriminant {disc:e} at (H, L) = ({}, {})", em.h, em.l)));
    }
    let qq = -0.5 * (q.b + q.b.signum() * disc.sqrt());
    let (x1, x2) = (qq / q.a, q.c / qq);
    let polish = |r: f64| {
        let d = q.slope(r);
        if d != 0.0 {
            r - q.eval(r) / d
        } else {
            r
        }
    };
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let (lo, hi) = (polish(lo), polish(hi));
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Degenerate(format!("turning points ({lo}, {hi}) are not ordered positive radii")));
    }
    Ok((lo, hi))
}

#[derive(Clone, Copy)]
enum Quantity {
    Period,
    Apsidal,
    Area,
}

fn radial_quadrature(sys: &SystemSpec, em: EnergyMomentum, what: Quantity) -> Result<f64> {
    let (r_minus, r_plus) = turning_points(sys, em)?;
    let q = radial_quadratic(sys, em);
    let lead_sqrt = (-q.a).sqrt();
    let delta = r_plus - r_minus;
    let l = em.l.abs();
    // p_r = √(−A) Δ sin u cos u / r,   dr = 2Δ sin u cos u du
    let integrand = move |u: f64| {
        let (s, c) = u.sin_cos();
        let r = r_minus + delta * s * s;
        match (what, sys) {
            (Quantity::Period, SystemSpec::LeviCivita(p)) => 2.0 * p.m * r / lead_sqrt,
            (Quantity::Period, SystemSpec::Relativistic(p)) => {
                let e = em.h + p.m * p.c * p.c;
                2.0 * (e * r + p.alpha) / (p.c * p.c * lead_sqrt)
            }
            (Quantity::Apsidal, SystemSpec::LeviCivita(p)) => 2.0 * p.m * l / (r * lead_sqrt),
            (Quantity::Apsidal, SystemSpec::Relativistic(_)) => 2.0 * l / (r * lead_sqrt),
            (Quantity::Area, _) => 2.0 * lead_sqrt * delta * delta * (s * c).powi(2) / r,
        }
    };
    let (half, _) = integrate_doubling(0.0, FRAC_PI_2, DoublingSchedule::default(), integrand)?;
    Ok(2.0 * half)
}

/// `T = 2∫ dr/|ṙ|` between the turning points.
pub fn radial_period_quadrature(sys: &SystemSpec, em: EnergyMomentum) -> Result<f64> {
    radial_quadrature(sys, em, Quantity::Period)
}

/// `Θ = 2∫ (dθ/dr) dr` between the turning points.
pub fn apsidal_angle_quadrature(sys: &SystemSpec, em: EnergyMomentum) -> Result<f64> {
    radial_quadrature(sys, em, Quantity::Apsidal)
}

/// `𝒜 = ∮ p_r dr`; for Levi-Civita `p_r = mṙ`.
pub fn area_quadrature(sys: &SystemSpec, em: EnergyMomentum) -> Result<f64> {
    radial_quadrature(sys, em, Quantity::Area)
}

pub fn radial_period_closed(sys: &SystemSpec, em: EnergyMomentum) -> Result<f64> {
    require_admissible(sys, em)?;
    Ok(match sys {
        SystemSpec::LeviCivita(s) => PI * s.kappa * s.m.sqrt() / (2f64.sqrt() * (-em.h).powf(1.5)),
        SystemSpec::Relativistic(s) => relativistic_period(s, em.h),
    })
}

/// `2π α m² c³ / (−2mc²H − H²)^{3/2}`; depends on `H` only.
pub fn relativistic_period(s: &RelativisticSystem, h: f64) -> f64 {
    let c2 = s.c * s.c;
    TAU * s.alpha * s.m * s.m * c2 * s.c / (-h * (h + 2.0 * s.m * c2)).powf(1.5)
}

pub fn apsidal_angle_closed(sys: &SystemSpec, em: EnergyMomentum) -> Result<f64> {
    require_admissible(sys, em)?;
    let l = em.l.abs();
    Ok(match sys {
        SystemSpec::LeviCivita(s) => TAU * s.m.sqrt() * l / (s.m * l * l - 2.0 * s.lambda).sqrt(),
        SystemSpec::Relativistic(s) => TAU / (1.0 - (s.alpha / (s.c * l)).powi(2)).sqrt(),
    })
}

pub fn area_closed(sys: &LeviCivitaSystem, em: EnergyMomentum) -> Result<f64> {
    require_admissible(&SystemSpec::LeviCivita(*sys), em)?;
    Ok(TAU * sys.m.sqrt() * (sys.kappa / (-2.0 * em.h).sqrt() - (sys.m * em.l * em.l - 2.0 * sys.lambda).sqrt()))
}

/// Enclosed area by the closed form where one exists (Levi-Civita), else by quadrature.
pub fn area(sys: &SystemSpec, em: EnergyMomentum) -> Result<f64> {
    match sys {
        SystemSpec::LeviCivita(s) => area_closed(s, em),
        SystemSpec::Relativistic(_) => area_quadrature(sys, em),
    }
}

pub fn radial_orbit_data(sys: &SystemSpec, em: EnergyMomentum) -> Result<RadialOrbitData> {
    let (r_minus, r_plus) = turning_points(sys, em)?;
    Ok(RadialOrbitData {
        r_minus,
        r_plus,
        period: radial_period_closed(sys, em)?,
        apsidal_angle: apsidal_angle_closed(sys, em)?,
        area: area(sys, em)?,
    })
}

/// An `n_h × n_l` grid of admissible pairs: energies evenly spaced in
/// `[h_lo, h_hi]`, and for each energy the angular momenta at fractions
/// `0.05 … 0.95` of the admissible `L` interval.
pub fn admissible_grid(sys: &SystemSpec, h_range: (f64, f64), n_h: usize, n_l: usize) -> Result<Vec<EnergyMomentum>> {
    let mut out = Vec::with_capacity(n_h * n_l);
    let frac = |i: usize, n: usize| if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
    for i in 0..n_h {
        let t = frac(i, n_h);
        let h = h_range.0 * (1.0 - t) + h_range.1 * t;
        let (lo, hi) = l_bounds(sys, h).ok_or_else(|| Error::OutOfRange(format!("no admissible L at H = {h}")))?;
        for j in 0..n_l {
            let l = lo + (hi - lo) * (0.05 + 0.9 * frac(j, n_l));
            let em = EnergyMomentum::new(h, l);
            require_admissible(sys, em)?;
            out.push(em);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lc() -> SystemSpec {
        SystemSpec::LeviCivita(LeviCivitaSystem::new(1.0, 1.0, 0.1).unwrap())
    }

    fn rel() -> SystemSpec {
        SystemSpec::Relativistic(RelativisticSystem::new(1.0, 1.0, 10.0).unwrap())
    }

    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let x = 0.5 * (a + b);
        (x, f(x))
    }

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let fa = f(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (f(m) > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn lc_effective_potential_value() {
        assert_relative_eq!(effective_potential(&lc(), 1.0, 1.0).unwrap(), -0.6, epsilon = 1e-15);
        assert!(effective_potential(&lc(), 1.0, 0.1).is_err());
        assert!(effective_potential(&lc(), 0.0, 1.0).is_err());
    }

    #[test]
    fn w_min_matches_numerical_minimum() {
        let SystemSpec::LeviCivita(s) = lc() else { unreachable!() };
        let (w, at) = w_min(&s, 1.0).unwrap();
        assert_relative_eq!(w, -0.625, epsilon = 1e-15);
        assert_relative_eq!(at, 0.8, epsilon = 1e-15);
        let (x, fx) = golden_min(|r| effective_potential(&lc(), r, 1.0).unwrap(), 0.1, 5.0);
        assert!((x - at).abs() < 1e-6);
        assert!((fx - w).abs() < 1e-12);
    }

    #[test]
    fn relativistic_radial_momentum_classical_limit() {
        let (r, em) = (0.7, EnergyMomentum::new(-0.4, 0.6));
        let classical = 2.0 * (em.h + 1.0 / r) - em.l * em.l / (r * r);
        let errs: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&c| {
                let sys = SystemSpec::Relativistic(RelativisticSystem::new(1.0, 1.0, c).unwrap());
                (radial_momentum_sq(&sys, r, em).unwrap() - classical).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(((w[0] / w[1]).log10() - 2.0).abs() < 0.01);
        }
    }

    #[test]
    fn relativistic_effective_potential_is_zero_set_of_radial_momentum() {
        let sys = rel();
        let (r, l) = (0.9, 0.4);
        let w = effective_potential(&sys, r, l).unwrap();
        assert!(radial_momentum_sq(&sys, r, EnergyMomentum::new(w, l)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn admissibility_examples() {
        assert!(admissible(&lc(), EnergyMomentum::new(-0.5, 0.7)));
        assert!(admissible(&lc(), EnergyMomentum::new(-0.5, -0.7)));
        assert!(admissible(&rel(), EnergyMomentum::new(-0.5, 0.115470)));
        assert!(!admissible(&lc(), EnergyMomentum::new(0.0, 0.7)));
        assert!(!admissible(&rel(), EnergyMomentum::new(0.0, 0.5)));
        assert!(!admissible(&lc(), EnergyMomentum::new(-0.5, 0.4)));
        assert!(!admissible(&lc(), EnergyMomentum::new(-2.0, 0.7)));
        assert!(!admissible(&rel(), EnergyMomentum::new(-0.5, 0.09)));
        assert!(!admissible(&rel(), EnergyMomentum::new(-0.5, 1.01)));
    }

    #[test]
    fn lc_turning_points_example() {
        let em = EnergyMomentum::new(-0.5, 0.7);
        let (lo, hi) = turning_points(&lc(), em).unwrap();
        assert_relative_eq!(lo, 1.0 - 0.71f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(hi, 1.0 + 0.71f64.sqrt(), epsilon = 1e-14);
        assert!((lo - 0.157385).abs() < 1e-6 && (hi - 1.842615).abs() < 1e-6);
        // independent: bisection on sign changes of p_r²
        let f = |r: f64| radial_momentum_sq(&lc(), r, em).unwrap();
        assert!((bisect(f, 0.01, 0.5) - lo).abs() < 1e-12);
        assert!((bisect(f, 1.0, 3.0) - hi).abs() < 1e-12);
        assert!(f(0.5 * (lo + hi)) > 0.0);
    }

    #[test]
    fn relativistic_turning_points_bracket_positive_momentum() {
        let em = EnergyMomentum::new(-0.5, 0.3);
        let (lo, hi) = turning_points(&rel(), em).unwrap();
        let f = |r: f64| radial_momentum_sq(&rel(), r, em).unwrap();
        assert!(f(lo).abs() < 1e-9 && f(hi).abs() < 1e-9);
        assert!(f(0.5 * (lo + hi)) > 0.0);
        assert!(f(0.5 * lo) < 0.0 && f(2.0 * hi) < 0.0);
    }

    #[test]
    fn turning_points_collapse_at_circular_orbit() {
        let SystemSpec::LeviCivita(s) = lc() else { unreachable!() };
        let (w, _) = w_min(&s, 0.7).unwrap();
        let mut prev = f64::INFINITY;
        for d in [1e-2, 1e-4, 1e-6] {
            let (lo, hi) = turning_points(&lc(), EnergyMomentum::new(w + d, 0.7)).unwrap();
            assert!(hi - lo < prev);
            prev = hi - lo;
        }
        assert!(prev < 1e-2);
        assert!(turning_points(&lc(), EnergyMomentum::new(w, 0.7)).is_err());
    }

    #[test]
    fn lc_period_is_two_pi_at_half_energy() {
        for l in [0.5, 0.7, 1.0] {
            let em = EnergyMomentum::new(-0.5, l);
            assert_relative_eq!(radial_period_closed(&lc(), em).unwrap(), TAU, epsilon = 1e-14);
            assert_relative_eq!(radial_period_quadrature(&lc(), em).unwrap(), TAU, max_relative = 1e-10);
        }
    }

    #[test]
    fn lc_apsidal_angle_six_pi() {
        let em = EnergyMomentum::new(-0.5, 0.225f64.sqrt());
        assert_relative_eq!(apsidal_angle_closed(&lc(), em).unwrap(), 3.0 * TAU, max_relative = 1e-14);
        assert_relative_eq!(apsidal_angle_quadrature(&lc(), em).unwrap(), 3.0 * TAU, max_relative = 1e-10);
    }

    #[test]
    fn lc_area_example() {
        let em = EnergyMomentum::new(-0.5, 1.0);
        let SystemSpec::LeviCivita(s) = lc() else { unreachable!() };
        let a = area_closed(&s, em).unwrap();
        assert_relative_eq!(a, TAU * (1.0 - 0.8f64.sqrt()), epsilon = 1e-14);
        assert!((a - 0.663334).abs() < 1e-6);
        assert_relative_eq!(area_quadrature(&lc(), em).unwrap(), a, max_relative = 1e-10);
    }

    #[test]
    fn kepler_limit_apsidal_angle() {
        let sys = SystemSpec::LeviCivita(LeviCivitaSystem::new(1.0, 1.0, 1e-14).unwrap());
        for (h, l) in [(-0.5, 0.6), (-0.2, 1.3), (-1.5, 0.3)] {
            let em = EnergyMomentum::new(h, l);
            assert!((apsidal_angle_quadrature(&sys, em).unwrap() - TAU).abs() < 1e-10);
            assert!((apsidal_angle_closed(&sys, em).unwrap() - TAU).abs() < 1e-10);
        }
    }

    #[test]
    fn relativistic_period_example() {
        let em = EnergyMomentum::new(-0.5, 0.3);
        let t = radial_period_closed(&rel(), em).unwrap();
        assert_relative_eq!(t, TAU * 1000.0 / 99.75f64.powf(1.5), epsilon = 1e-13);
        assert!((t - 6.306822).abs() < 1e-6);
        assert_relative_eq!(radial_period_quadrature(&rel(), em).unwrap(), t, max_relative = 1e-10);
    }

    #[test]
    fn relativistic_period_needs_alpha_factor() {
        let sys = SystemSpec::Relativistic(RelativisticSystem::new(1.0, 2.0, 10.0).unwrap());
        let em = EnergyMomentum::new(-0.5, 0.8);
        let quad = radial_period_quadrature(&sys, em).unwrap();
        assert_relative_eq!(radial_period_closed(&sys, em).unwrap(), quad, max_relative = 1e-10);
        let without_alpha = TAU * 1000.0 / 99.75f64.powf(1.5);
        assert!((without_alpha - quad).abs() / quad > 0.4);
    }

    #[test]
    fn closed_forms_reject_inadmissible() {
        let bad = EnergyMomentum::new(0.1, 1.0);
        assert!(radial_period_closed(&lc(), bad).is_err());
        assert!(apsidal_angle_quadrature(&rel(), bad).is_err());
        assert!(matches!(turning_points(&lc(), bad), Err(Error::NotAdmissible { .. })));
    }

    #[test]
    fn grid_points_are_admissible() {
        for sys in [lc(), rel()] {
            let g = admissible_grid(&sys, (-1.0, -0.2), 4, 5).unwrap();
            assert_eq!(g.len(), 20);
            assert!(g.iter().all(|em| admissible(&sys, *em)));
        }
    }
}

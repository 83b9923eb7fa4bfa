//! Adaptive Dormand-Prince 5(4) integration with continuous output, pericenter
//! section detection and winding numbers.
//!
//! The integrated state is `(x₁, x₂, p₁, p₂, θ)`: the polar angle is carried
//! along as a quadrature `θ̇ = (x₁ẋ₂ − x₂ẋ₁)/|x|²`, so it is always unwrapped and
//! never reduced modulo 2π.

use std::io::Write;

use crate::error::{Error, Result};
use crate::systems::{angular_momentum, CartesianState, Dynamics};

pub const DIM: usize = 5;
type State = [f64; DIM];

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension (Hairer & Wanner)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub r_floor: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-11, abs_tol: 1e-12, max_step: 1.0, r_floor: 1e-8, max_steps: 2_000_000 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return Err(Error::InvalidParameter { name, reason: format!("must lie in (0, 1e-2], got {tol}") });
            }
        }
        crate::error::ensure_positive("max_step", self.max_step)?;
        crate::error::ensure_positive("r_floor", self.r_floor)
    }

    /// Same configuration with both tolerances divided by ten.
    pub fn tightened(&self) -> Self {
        Self { rel_tol: self.rel_tol / 10.0, abs_tol: self.abs_tol / 10.0, ..*self }
    }
}

/// Accepted steps with their continuous-output coefficients.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<State>,
    dense: Vec<[State; 5]>,
}

/// A pericenter passage located on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub state: CartesianState,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Winding {
    /// `(θ(t₁) − θ(t₀)) / 2π` before rounding.
    pub value: f64,
    pub rounded: i64,
}

impl Winding {
    pub fn distance_to_integer(&self) -> f64 {
        (self.value - self.rounded as f64).abs()
    }
}

fn augmented<D: Dynamics + ?Sized>(dynamics: &D, y: &State, t: f64, r_floor: f64) -> Result<State> {
    let s = CartesianState::from_array([y[0], y[1], y[2], y[3]]);
    let r2 = y[0] * y[0] + y[1] * y[1];
    let r = r2.sqrt();
    if r < r_floor {
        return Err(Error::Collision { r, floor: r_floor, t });
    }
    let f = dynamics.field(&s)?;
    let theta_dot = (y[0] * f.dx[1] - y[1] * f.dx[0]) / r2;
    Ok([f.dx[0], f.dx[1], f.dp[0], f.dp[1], theta_dot])
}

fn combine(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (coef, k) in terms {
            acc += coef * k[i];
        }
        *o += h * acc;
    }
    out
}

fn error_norm(err: &State, y0: &State, y1: &State, cfg: &IntegratorConfig) -> f64 {
    let sum: f64 = (0..DIM)
        .map(|i| {
            let sk = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            (err[i] / sk).powi(2)
        })
        .sum();
    (sum / DIM as f64).sqrt()
}

fn initial_step<D: Dynamics + ?Sized>(dynamics: &D, y0: &State, f0: &State, cfg: &IntegratorConfig, span: f64) -> Result<f64> {
    let scale = |v: &State, i: usize| cfg.abs_tol + cfg.rel_tol * v[i].abs();
    let norm = |v: &State| (v.iter().enumerate().map(|(i, x)| (x / scale(y0, i)).powi(2)).sum::<f64>() / DIM as f64).sqrt();
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(cfg.max_step);
    let y1 = combine(y0, h0, &[(1.0, f0)]);
    let f1 = augmented(dynamics, &y1, h0, cfg.r_floor)?;
    let diff: State = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(span).min(cfg.max_step))
}

/// Integrate `s0` over `[0, t_end]`.
pub fn integrate<D: Dynamics + ?Sized>(
    dynamics: &D,
    s0: &CartesianState,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter { name: "t_end", reason: format!("must be positive, got {t_end}") });
    }
    let theta0 = s0.x[1].atan2(s0.x[0]);
    let mut y: State = [s0.x[0], s0.x[1], s0.p[0], s0.p[1], theta0];
    let mut t = 0.0;
    let mut k1 = augmented(dynamics, &y, t, cfg.r_floor)?;
    let mut h = initial_step(dynamics, &y, &k1, cfg, t_end)?;
    let mut fac_old: f64 = 1e-4;
    let mut reject_streak = false;

    let mut traj = Trajectory { times: vec![t], states: vec![y], dense: Vec::new() };
    let mut steps = 0usize;
    while t < t_end {
        if steps >= cfg.max_steps {
            return Err(Error::TooManySteps(cfg.max_steps));
        }
        steps += 1;
        let last = t + h >= t_end * (1.0 - 1e-15) || t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::StepUnderflow { t, h });
        }
        let k2 = augmented(dynamics, &combine(&y, h, &[(A21, &k1)]), t + C2 * h, cfg.r_floor)?;
        let k3 = augmented(dynamics, &combine(&y, h, &[(A31, &k1), (A32, &k2)]), t + C3 * h, cfg.r_floor)?;
        let k4 = augmented(dynamics, &combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]), t + C4 * h, cfg.r_floor)?;
        let k5 =
            augmented(dynamics, &combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]), t + C5 * h, cfg.r_floor)?;
        let k6 = augmented(
            dynamics,
            &combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            t + h,
            cfg.r_floor,
        )?;
        let y_new = combine(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = augmented(dynamics, &y_new, t + h, cfg.r_floor)?;
        let err_vec: State =
            std::array::from_fn(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]));
        let err = error_norm(&err_vec, &y, &y_new, cfg);

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(cfg.max_step);
            if reject_streak {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            reject_streak = false;

            let ydiff: State = std::array::from_fn(|i| y_new[i] - y[i]);
            let bspl: State = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
            let rc4: State = std::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]);
            let rc5: State =
                std::array::from_fn(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]));
            traj.dense.push([y, ydiff, bspl, rc4, rc5]);

            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            traj.times.push(t);
            traj.states.push(y);
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            reject_streak = true;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    Ok(traj)
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial node")
    }

    pub fn state(&self, i: usize) -> CartesianState {
        let y = &self.states[i];
        CartesianState::from_array([y[0], y[1], y[2], y[3]])
    }

    pub fn theta(&self, i: usize) -> f64 {
        self.states[i][4]
    }

    pub fn last_state(&self) -> CartesianState {
        self.state(self.len() - 1)
    }

    pub fn last_theta(&self) -> f64 {
        self.theta(self.len() - 1)
    }

    fn eval_raw(&self, t: f64) -> Result<State> {
        let (t0, t1) = (self.times[0], self.t_end());
        if !(t >= t0 && t <= t1) {
            return Err(Error::Domain(format!("t = {t} outside trajectory span [{t0}, {t1}]")));
        }
        if self.dense.is_empty() {
            return Ok(self.states[0]);
        }
        let idx = self.times.partition_point(|&ti| ti <= t).saturating_sub(1).min(self.dense.len() - 1);
        let h = self.times[idx + 1] - self.times[idx];
        let s = (t - self.times[idx]) / h;
        let s1 = 1.0 - s;
        let rc = &self.dense[idx];
        Ok(std::array::from_fn(|i| rc[0][i] + s * (rc[1][i] + s1 * (rc[2][i] + s * (rc[3][i] + s1 * rc[4][i])))))
    }

    /// Continuous-output state and unwrapped angle at time `t`.
    pub fn eval(&self, t: f64) -> Result<(CartesianState, f64)> {
        let y = self.eval_raw(t)?;
        Ok((CartesianState::from_array([y[0], y[1], y[2], y[3]]), y[4]))
    }

    pub fn theta_at(&self, t: f64) -> Result<f64> {
        Ok(self.eval_raw(t)?[4])
    }

    /// CSV with header `t,x1,x2,p1,p2,r,theta_unwrapped,H,L`; `L` is `⟨x, Jp⟩`.
    pub fn write_csv<D: Dynamics + ?Sized, W: Write>(&self, dynamics: &D, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x1,x2,p1,p2,r,theta_unwrapped,H,L")?;
        for i in 0..self.len() {
            let s = self.state(i);
            let h = dynamics.energy(&s).unwrap_or(f64::NAN);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.times[i],
                s.x[0],
                s.x[1],
                s.p[0],
                s.p[1],
                s.radius(),
                self.theta(i),
                h,
                angular_momentum(&s)
            )?;
        }
        Ok(())
    }
}

fn radial_indicator(y: &State) -> f64 {
    y[0] * y[2] + y[1] * y[3]
}

/// Locate the first `count` pericenter passages (upward zero crossings of
/// `p_r`) after the initial node.
pub fn section_crossings(traj: &Trajectory, count: usize) -> Result<Vec<Crossing>> {
    let mut found = Vec::with_capacity(count);
    if count == 0 {
        return Ok(found);
    }
    scan_crossings(traj, 0.0, traj.t_end(), |c| {
        found.push(c);
        found.len() < count
    })?;
    if found.len() == count {
        Ok(found)
    } else {
        Err(Error::InsufficientCrossings { found: found.len(), requested: count })
    }
}

/// All pericenter passages with `t0 ≤ t ≤ t1`.
pub fn section_crossings_between(traj: &Trajectory, t0: f64, t1: f64) -> Result<Vec<Crossing>> {
    let mut found = Vec::new();
    scan_crossings(traj, t0, t1, |c| {
        found.push(c);
        true
    })?;
    Ok(found)
}

fn scan_crossings(traj: &Trajectory, t0: f64, t1: f64, mut keep_going: impl FnMut(Crossing) -> bool) -> Result<()> {
    for i in 0..traj.len().saturating_sub(1) {
        if traj.times[i + 1] < t0 {
            continue;
        }
        if traj.times[i] > t1 {
            break;
        }
        let (ga, gb) = (radial_indicator(&traj.states[i]), radial_indicator(&traj.states[i + 1]));
        if !(ga < 0.0 && gb >= 0.0) {
            continue;
        }
        // transversality: reject sign flips that are round-off on a circular orbit
        let scale = |y: &State| (y[0].hypot(y[1])) * (y[2].hypot(y[3]));
        if gb - ga <= 1e-9 * scale(&traj.states[i]).max(scale(&traj.states[i + 1])) {
            continue;
        }
        let t = refine_root(traj, traj.times[i], traj.times[i + 1], ga, gb)?;
        if t < t0 || t > t1 {
            continue;
        }
        let y = traj.eval_raw(t)?;
        let c = Crossing { t, state: CartesianState::from_array([y[0], y[1], y[2], y[3]]), theta: y[4] };
        if !keep_going(c) {
            break;
        }
    }
    Ok(())
}

/// Illinois-modified regula falsi on the continuous output, run to the
/// resolution of the time axis.
fn refine_root(traj: &Trajectory, mut a: f64, mut b: f64, mut ga: f64, mut gb: f64) -> Result<f64> {
    if gb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let width = b - a;
        if width <= 2.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
        let mut t = (a * gb - b * ga) / (gb - ga);
        if !(t > a && t < b) {
            t = 0.5 * (a + b);
        }
        let g = radial_indicator(&traj.eval_raw(t)?);
        if g == 0.0 {
            return Ok(t);
        }
        if g < 0.0 {
            a = t;
            ga = g;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            gb = g;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    // endpoint with the smaller residual
    Ok(if ga.abs() < gb.abs() { a } else { b })
}

/// Winding number of the position angle over `[t0, t1]`.
///
/// With `periodic` set, a pre-rounding value farther than 0.05 from an integer
/// is an error.
pub fn winding_number(traj: &Trajectory, t0: f64, t1: f64, periodic: bool) -> Result<Winding> {
    if !(t0 < t1) {
        return Err(Error::Domain(format!("winding interval [{t0}, {t1}] is empty")));
    }
    let value = (traj.theta_at(t1)? - traj.theta_at(t0)?) / std::f64::consts::TAU;
    let w = Winding { value, rounded: value.round() as i64 };
    if periodic && w.distance_to_integer() > 0.05 {
        return Err(Error::AmbiguousWinding { value, distance: w.distance_to_integer() });
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{LeviCivitaSystem, PerturbedSystem, SystemSpec, Tangent};
    use std::f64::consts::{PI, TAU};

    /// Isotropic harmonic oscillator `H = (|p|² + |x|²)/2`.
    struct Oscillator;

    impl Dynamics for Oscillator {
        fn field(&self, s: &CartesianState) -> Result<Tangent> {
            Ok(Tangent { dx: s.p, dp: -s.x })
        }
        fn energy(&self, s: &CartesianState) -> Result<f64> {
            Ok(0.5 * (s.p.norm_squared() + s.x.norm_squared()))
        }
    }

    fn lc_model() -> PerturbedSystem {
        PerturbedSystem::unperturbed(SystemSpec::from(LeviCivitaSystem::new(1.0, 1.0, 0.1).unwrap()))
    }

    #[test]
    fn oscillator_returns_after_one_period() {
        let s0 = CartesianState::new([1.0, 0.0], [0.0, 1.0]);
        let cfg = IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, ..Default::default() };
        let traj = integrate(&Oscillator, &s0, TAU, &cfg).unwrap();
        assert!(traj.last_state().distance(&s0) < 1e-9);
        assert_eq!(traj.t_end(), TAU);
        let w = winding_number(&traj, 0.0, TAU, true).unwrap();
        assert_eq!(w.rounded, 1);
    }

    #[test]
    fn dense_output_reproduces_nodes() {
        let s0 = CartesianState::new([1.0, 0.0], [0.0, 0.7]);
        let traj = integrate(&lc_model(), &s0, 5.0, &IntegratorConfig::default()).unwrap();
        for i in 0..traj.len() {
            let (s, th) = traj.eval(traj.times()[i]).unwrap();
            assert!(s.distance(&traj.state(i)) <= 1e-13 * (1.0 + traj.state(i).p.norm()));
            assert!((th - traj.theta(i)).abs() <= 1e-13 * (1.0 + th.abs()));
        }
        assert!(traj.eval(5.1).is_err());
    }

    #[test]
    fn dense_output_order_on_oscillator() {
        // step size fixed by max_step; tolerances loose enough not to interfere
        let s0 = CartesianState::new([1.0, 0.0], [0.0, 0.5]);
        let exact = |t: f64| CartesianState::new([t.cos(), 0.5 * t.sin()], [-t.sin(), 0.5 * t.cos()]);
        let err_for = |h: f64| {
            let cfg = IntegratorConfig { rel_tol: 1e-2, abs_tol: 1e-2, max_step: h, ..Default::default() };
            let traj = integrate(&Oscillator, &s0, 4.0, &cfg).unwrap();
            (0..400)
                .map(|i| {
                    let t = 4.0 * (i as f64 + 0.37) / 400.0;
                    traj.eval(t).unwrap().0.distance(&exact(t))
                })
                .fold(0.0, f64::max)
        };
        let ratio = err_for(0.2) / err_for(0.1);
        assert!(ratio >= 16.0, "dense error ratio {ratio}");
    }

    #[test]
    fn circular_orbit_radius_is_constant_and_has_no_crossings() {
        let sys = LeviCivitaSystem::new(1.0, 1.0, 0.1).unwrap();
        // m v²/r = κ/r² + 2λ/r³  at r = 1
        let v = (sys.kappa + 2.0 * sys.lambda).sqrt();
        let s0 = CartesianState::new([1.0, 0.0], [0.0, v]);
        let period = TAU / v;
        let traj = integrate(&lc_model(), &s0, period, &IntegratorConfig::default()).unwrap();
        let max_dev = (0..traj.len()).map(|i| (traj.state(i).radius() - 1.0).abs()).fold(0.0, f64::max);
        assert!(max_dev < 1e-9, "radius deviation {max_dev}");
        assert_eq!(winding_number(&traj, 0.0, period, true).unwrap().rounded, 1);
        assert!(matches!(section_crossings(&traj, 1), Err(Error::InsufficientCrossings { .. })));
    }

    #[test]
    fn crossings_refine_to_zero_radial_momentum() {
        let s0 = CartesianState::new([1.2, 0.0], [0.1, 0.6]);
        let traj = integrate(&lc_model(), &s0, 30.0, &IntegratorConfig::default()).unwrap();
        let cs = section_crossings(&traj, 3).unwrap();
        for c in &cs {
            assert!(c.state.radial_momentum().abs() < 1e-10, "p_r = {}", c.state.radial_momentum());
        }
        // refinement is idempotent
        let i = traj.times().partition_point(|&t| t <= cs[0].t);
        let (a, b) = (cs[0].t - 1e-9, cs[0].t + 1e-9);
        let ga = radial_indicator(&traj.eval_raw(a).unwrap());
        let gb = radial_indicator(&traj.eval_raw(b).unwrap());
        let again = refine_root(&traj, a, b, ga, gb).unwrap();
        assert!(i > 0);
        assert!((again - cs[0].t).abs() <= 1e-14 * cs[0].t.abs().max(1.0) * 10.0);
    }

    #[test]
    fn winding_is_additive_and_flips_under_time_reversal() {
        let s0 = CartesianState::new([1.0, 0.0], [0.05, 0.8]);
        let cfg = IntegratorConfig::default();
        let traj = integrate(&lc_model(), &s0, 20.0, &cfg).unwrap();
        let a = winding_number(&traj, 0.0, 7.0, false).unwrap().value;
        let b = winding_number(&traj, 7.0, 20.0, false).unwrap().value;
        let ab = winding_number(&traj, 0.0, 20.0, false).unwrap().value;
        assert!((a + b - ab).abs() < 1e-12);

        let end = traj.last_state();
        let back = CartesianState { x: end.x, p: -end.p };
        let rev = integrate(&lc_model(), &back, 20.0, &cfg).unwrap();
        let w = winding_number(&rev, 0.0, 20.0, false).unwrap().value;
        assert!((w + ab).abs() < 1e-8);
    }

    #[test]
    fn ambiguous_winding_is_reported() {
        let s0 = CartesianState::new([1.0, 0.0], [0.0, 1.0]);
        let traj = integrate(&Oscillator, &s0, PI, &IntegratorConfig::default()).unwrap();
        assert!(matches!(winding_number(&traj, 0.0, PI, true), Err(Error::AmbiguousWinding { .. })));
        assert_eq!(winding_number(&traj, 0.0, PI, false).unwrap().rounded.abs(), 1);
    }

    #[test]
    fn collision_and_config_errors() {
        let s0 = CartesianState::new([1.0, 0.0], [0.0, 0.0]);
        let cfg = IntegratorConfig { r_floor: 1e-3, ..Default::default() };
        assert!(matches!(integrate(&lc_model(), &s0, 10.0, &cfg), Err(Error::Collision { .. })));
        let bad = IntegratorConfig { rel_tol: 0.5, ..Default::default() };
        assert!(integrate(&lc_model(), &s0, 1.0, &bad).is_err());
        assert!(integrate(&lc_model(), &s0, -1.0, &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let s0 = CartesianState::new([1.0, 0.0], [0.0, 0.9]);
        let traj = integrate(&lc_model(), &s0, 1.0, &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&lc_model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,p1,p2,r,theta_unwrapped,H,L");
        assert_eq!(lines.count(), traj.len());
    }
}

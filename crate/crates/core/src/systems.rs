//! The two Hamiltonian families, their phase-space states and the polynomial
//! perturbation family.
//!
//! Both families live on `(ℝ² ∖ {0}) × ℝ²` with canonical variables `(x, p)`:
//!
//! ```text
//! Levi-Civita:   H = |p|²/(2m) − κ/|x| − λ/|x|² − ε U(x)
//! relativistic:  H = mc² (√(1 + |p|²/(m²c²)) − 1) − α/|x| − ε U(x)
//! ```
//!
//! Kinetic terms are evaluated in cancellation-free form so that the
//! `c → ∞` limit can be probed at large `c`.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

pub type Vec2 = Vector2<f64>;

/// Default collision floor on `|x|`.
pub const DEFAULT_R_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeviCivitaSystem {
    pub m: f64,
    pub kappa: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativisticSystem {
    pub m: f64,
    pub alpha: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LeviCivita,
    Relativistic,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::LeviCivita => "levi-civita",
            Family::Relativistic => "relativistic",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One of the two system families, tagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemSpec {
    LeviCivita(LeviCivitaSystem),
    Relativistic(RelativisticSystem),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub x: Vec2,
    pub p: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarState {
    pub r: f64,
    /// Unwrapped; never reduced modulo 2π.
    pub theta: f64,
    pub p_r: f64,
    pub p_theta: f64,
}

/// Time derivative `(ẋ, ṗ)` of a phase-space state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub dx: Vec2,
    pub dp: Vec2,
}

/// A single monomial `c · x₁^a · x₂^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub c: f64,
    pub a: u32,
    pub b: u32,
}

/// External potential `U(x) = Σ cᵢ x₁^{aᵢ} x₂^{bᵢ}`.
///
/// Serialized as a bare JSON array of `{"c", "a", "b"}` objects.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerturbationSpec {
    pub terms: Vec<Monomial>,
}

impl LeviCivitaSystem {
    pub fn new(m: f64, kappa: f64, lambda: f64) -> Result<Self> {
        let sys = Self { m, kappa, lambda };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("m", self.m)?;
        ensure_positive("kappa", self.kappa)?;
        ensure_positive("lambda", self.lambda)
    }

    pub fn hamiltonian(&self, s: &CartesianState, eps: f64, u: &PerturbationSpec) -> Result<f64> {
        let r = checked_radius(&s.x)?;
        Ok(s.p.norm_squared() / (2.0 * self.m) - self.kappa / r - self.lambda / (r * r) - eps * u.value(&s.x))
    }
}

impl RelativisticSystem {
    pub fn new(m: f64, alpha: f64, c: f64) -> Result<Self> {
        let sys = Self { m, alpha, c };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("m", self.m)?;
        ensure_positive("alpha", self.alpha)?;
        ensure_positive("c", self.c)
    }

    /// `mc²(√(1+q) − 1)` with `q = |p|²/(m²c²)`, written as `|p|²/(m(√(1+q)+1))`.
    pub fn kinetic_energy(&self, p: &Vec2) -> f64 {
        let p2 = p.norm_squared();
        let q = p2 / (self.m * self.m * self.c * self.c);
        p2 / (self.m * ((1.0 + q).sqrt() + 1.0))
    }

    pub fn hamiltonian(&self, s: &CartesianState, eps: f64, u: &PerturbationSpec) -> Result<f64> {
        let r = checked_radius(&s.x)?;
        Ok(self.kinetic_energy(&s.p) - self.alpha / r - eps * u.value(&s.x))
    }

    /// Energy written with the velocity instead of the momentum.
    pub fn energy_from_velocity(&self, x: &Vec2, v: &Vec2, eps: f64, u: &PerturbationSpec) -> Result<f64> {
        let r = checked_radius(x)?;
        let v2 = v.norm_squared();
        let beta2 = v2 / (self.c * self.c);
        if beta2 >= 1.0 {
            return Err(Error::Domain(format!("|v| = {} is not below c = {}", v2.sqrt(), self.c)));
        }
        let s = (1.0 - beta2).sqrt();
        // mc²(1/s − 1) = m v² / (s (1 + s))
        let kinetic = self.m * v2 / (s * (1.0 + s));
        Ok(kinetic - self.alpha / r - eps * u.value(x))
    }

    pub fn velocity_to_momentum(&self, v: &Vec2) -> Result<Vec2> {
        let beta2 = v.norm_squared() / (self.c * self.c);
        if beta2 >= 1.0 {
            return Err(Error::Domain(format!("|v| = {} is not below c = {}", v.norm(), self.c)));
        }
        Ok(v * (self.m / (1.0 - beta2).sqrt()))
    }

    pub fn momentum_to_velocity(&self, p: &Vec2) -> Vec2 {
        let q = p.norm_squared() / (self.m * self.m * self.c * self.c);
        p / (self.m * (1.0 + q).sqrt())
    }
}

impl SystemSpec {
    pub fn family(&self) -> Family {
        match self {
            SystemSpec::LeviCivita(_) => Family::LeviCivita,
            SystemSpec::Relativistic(_) => Family::Relativistic,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            SystemSpec::LeviCivita(s) => s.m,
            SystemSpec::Relativistic(s) => s.m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::LeviCivita(s) => s.validate(),
            SystemSpec::Relativistic(s) => s.validate(),
        }
    }

    pub fn hamiltonian(&self, s: &CartesianState, eps: f64, u: &PerturbationSpec) -> Result<f64> {
        match self {
            SystemSpec::LeviCivita(sys) => sys.hamiltonian(s, eps, u),
            SystemSpec::Relativistic(sys) => sys.hamiltonian(s, eps, u),
        }
    }

    /// Kinetic part of the Hamiltonian.
    pub fn kinetic_energy(&self, p: &Vec2) -> f64 {
        match self {
            SystemSpec::LeviCivita(sys) => p.norm_squared() / (2.0 * sys.m),
            SystemSpec::Relativistic(sys) => sys.kinetic_energy(p),
        }
    }

    /// Unperturbed central potential `V(r)`.
    pub fn central_potential(&self, r: f64) -> f64 {
        match self {
            SystemSpec::LeviCivita(sys) => -sys.kappa / r - sys.lambda / (r * r),
            SystemSpec::Relativistic(sys) => -sys.alpha / r,
        }
    }

    /// `ẋ = ∂H/∂p`.
    pub fn velocity(&self, p: &Vec2) -> Vec2 {
        match self {
            SystemSpec::LeviCivita(sys) => p / sys.m,
            SystemSpec::Relativistic(sys) => sys.momentum_to_velocity(p),
        }
    }

    /// Hamilton's equations for `H_ε`.
    pub fn vector_field(&self, s: &CartesianState, eps: f64, u: &PerturbationSpec) -> Result<Tangent> {
        let r = checked_radius(&s.x)?;
        let r3 = r * r * r;
        let central = match self {
            SystemSpec::LeviCivita(sys) => -s.x * (sys.kappa / r3 + 2.0 * sys.lambda / (r3 * r)),
            SystemSpec::Relativistic(sys) => -s.x * (sys.alpha / r3),
        };
        let dp = if eps == 0.0 { central } else { central + u.gradient(&s.x) * eps };
        Ok(Tangent { dx: self.velocity(&s.p), dp })
    }

    /// The angular-momentum label `L` used by the radial analysis.
    ///
    /// Levi-Civita: `L = ⟨x, Jp⟩ / m = r²θ̇`. Relativistic: `L = ⟨x, Jp⟩`.
    pub fn orbit_l(&self, s: &CartesianState) -> f64 {
        angular_momentum(s) / self.l_scale()
    }

    /// Canonical angular momentum `p_θ` for a label `L`.
    pub fn p_theta_from_l(&self, l: f64) -> f64 {
        l * self.l_scale()
    }

    fn l_scale(&self) -> f64 {
        match self {
            SystemSpec::LeviCivita(sys) => sys.m,
            SystemSpec::Relativistic(_) => 1.0,
        }
    }

    /// Magnitude of the momentum with kinetic energy `kinetic`, or `None` when
    /// `kinetic < 0`.
    pub fn momentum_for_kinetic(&self, kinetic: f64) -> Option<f64> {
        if !(kinetic >= 0.0) {
            return None;
        }
        Some(match self {
            SystemSpec::LeviCivita(sys) => (2.0 * sys.m * kinetic).sqrt(),
            SystemSpec::Relativistic(sys) => {
                // |p|² = (K/c)² + 2mK with K the kinetic energy
                let kc = kinetic / sys.c;
                (kc * kc + 2.0 * sys.m * kinetic).sqrt()
            }
        })
    }
}

impl From<LeviCivitaSystem> for SystemSpec {
    fn from(s: LeviCivitaSystem) -> Self {
        SystemSpec::LeviCivita(s)
    }
}

impl From<RelativisticSystem> for SystemSpec {
    fn from(s: RelativisticSystem) -> Self {
        SystemSpec::Relativistic(s)
    }
}

fn checked_radius(x: &Vec2) -> Result<f64> {
    let r = x.norm();
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Domain(format!("position |x| = {r} is not in ℝ² ∖ {{0}}")))
    }
}

/// `⟨x, Jp⟩` with `J = [[0, 1], [−1, 0]]`.
pub fn angular_momentum(s: &CartesianState) -> f64 {
    s.x[0] * s.p[1] - s.x[1] * s.p[0]
}

impl CartesianState {
    pub fn new(x: [f64; 2], p: [f64; 2]) -> Self {
        Self { x: Vec2::new(x[0], x[1]), p: Vec2::new(p[0], p[1]) }
    }

    pub fn radius(&self) -> f64 {
        self.x.norm()
    }

    pub fn radial_momentum(&self) -> f64 {
        self.x.dot(&self.p) / self.x.norm()
    }

    pub fn angular_momentum(&self) -> f64 {
        angular_momentum(self)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x[0], self.x[1], self.p[0], self.p[1]]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new([a[0], a[1]], [a[2], a[3]])
    }

    pub fn to_polar(&self) -> Result<PolarState> {
        let r = checked_radius(&self.x)?;
        Ok(PolarState { r, theta: self.x[1].atan2(self.x[0]), p_r: self.x.dot(&self.p) / r, p_theta: angular_momentum(self) })
    }

    /// Rotate position and momentum by `angle` (counter-clockwise).
    pub fn rotated(&self, angle: f64) -> Self {
        let rot = nalgebra::Rotation2::new(angle);
        Self { x: rot * self.x, p: rot * self.p }
    }

    pub fn distance(&self, other: &CartesianState) -> f64 {
        ((self.x - other.x).norm_squared() + (self.p - other.p).norm_squared()).sqrt()
    }
}

impl PolarState {
    pub fn to_cartesian(&self) -> Result<CartesianState> {
        if !(self.r > 0.0) {
            return Err(Error::Domain(format!("polar radius {} must be positive", self.r)));
        }
        let (s, c) = self.theta.sin_cos();
        let e_r = Vec2::new(c, s);
        let e_t = Vec2::new(-s, c);
        Ok(CartesianState { x: e_r * self.r, p: e_r * self.p_r + e_t * (self.p_theta / self.r) })
    }
}

impl Monomial {
    pub fn new(c: f64, a: u32, b: u32) -> Self {
        Self { c, a, b }
    }
}

impl PerturbationSpec {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `U(x) = x₁`.
    pub fn linear_x1() -> Self {
        Self::new(vec![Monomial::new(1.0, 1, 0)])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.c == 0.0)
    }

    pub fn value(&self, x: &Vec2) -> f64 {
        self.terms.iter().map(|t| t.c * powu(x[0], t.a) * powu(x[1], t.b)).sum()
    }

    pub fn gradient(&self, x: &Vec2) -> Vec2 {
        let mut g = Vec2::zeros();
        for t in &self.terms {
            if t.a > 0 {
                g[0] += t.c * f64::from(t.a) * powu(x[0], t.a - 1) * powu(x[1], t.b);
            }
            if t.b > 0 {
                g[1] += t.c * f64::from(t.b) * powu(x[0], t.a) * powu(x[1], t.b - 1);
            }
        }
        g
    }

    /// The potential `x ↦ U(R⁻¹x)` where `R` rotates by `angle`, expanded back
    /// into monomials.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut acc: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for t in &self.terms {
            // (R⁻¹x)₁ = c x₁ + s x₂,  (R⁻¹x)₂ = −s x₁ + c x₂
            for i in 0..=t.a {
                let ci = binomial(t.a, i) * c.powi(i as i32) * s.powi((t.a - i) as i32);
                for j in 0..=t.b {
                    let cj = binomial(t.b, j) * (-s).powi(j as i32) * c.powi((t.b - j) as i32);
                    *acc.entry((i + j, t.a - i + t.b - j)).or_insert(0.0) += t.c * ci * cj;
                }
            }
        }
        Self::new(acc.into_iter().filter(|&(_, coef)| coef != 0.0).map(|((a, b), coef)| Monomial::new(coef, a, b)).collect())
    }

    /// `U ∘ σ` with `σ(x₁, x₂) = (x₁, −x₂)`; used to reach negative-L orbits.
    pub fn reflected(&self) -> Self {
        Self::new(self.terms.iter().map(|t| Monomial::new(if t.b % 2 == 1 { -t.c } else { t.c }, t.a, t.b)).collect())
    }
}

fn powu(x: f64, n: u32) -> f64 {
    x.powi(n as i32)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Autonomous dynamics on `(x, p)` that can be handed to the integrator.
pub trait Dynamics: Sync {
    fn field(&self, s: &CartesianState) -> Result<Tangent>;
    fn energy(&self, s: &CartesianState) -> Result<f64>;
}

/// A system family together with a perturbation `ε U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSystem {
    pub system: SystemSpec,
    pub eps: f64,
    pub potential: PerturbationSpec,
}

impl PerturbedSystem {
    pub fn new(system: SystemSpec, eps: f64, potential: PerturbationSpec) -> Self {
        Self { system, eps, potential }
    }

    pub fn unperturbed(system: SystemSpec) -> Self {
        Self::new(system, 0.0, PerturbationSpec::zero())
    }

    pub fn angular_momentum(&self, s: &CartesianState) -> f64 {
        angular_momentum(s)
    }
}

impl Dynamics for PerturbedSystem {
    fn field(&self, s: &CartesianState) -> Result<Tangent> {
        self.system.vector_field(s, self.eps, &self.potential)
    }

    fn energy(&self, s: &CartesianState) -> Result<f64> {
        self.system.hamiltonian(s, self.eps, &self.potential)
    }
}

//! Numerical toolkit for two relativistic variants of the planar Kepler problem:
//! the Newtonian potential with a Levi-Civita inverse-square correction, and the
//! Kepler problem driven by the special-relativistic momentum operator.
//!
//! The crate is organised bottom-up:
//!
//! - [`systems`]: Hamiltonians, momentum/velocity transforms, vector fields and
//!   the polynomial perturbation family.
//! - [`flow`]: adaptive Dormand-Prince integration with dense output, pericenter
//!   section detection and winding numbers.
//! - [`radial`]: radial phase-plane analysis, closed forms for the radial period,
//!   apsidal angle and enclosed area, and independent quadrature oracles.
//! - [`actionangle`]: the action map, the unperturbed Hamiltonian in actions, its
//!   derivatives and isoenergetic non-degeneracy certificates.
//! - [`orbits`]: resonant tori, shooting for prescribed-energy periodic orbits of
//!   the perturbed problem, verification and continuation in the perturbation size.
//!
//! # Angular momentum normalization
//!
//! The radial quantities are labelled by a pair `(H, L)`. For the Levi-Civita
//! family `L = r²θ̇` is the *specific* angular momentum, so the canonical
//! momentum is `⟨x, Jp⟩ = mL`. For the relativistic family `L = ⟨x, Jp⟩` is the
//! canonical angular momentum itself (the kinetic mass factor is not constant).
//! [`systems::SystemSpec::orbit_l`] converts a phase-space state to this label.

pub mod actionangle;
pub mod error;
pub mod flow;
pub mod orbits;
pub mod quadrature;
pub mod radial;
pub mod systems;

pub use error::{Error, Result};
pub use systems::{
    CartesianState, Family, LeviCivitaSystem, PerturbationSpec, PerturbedSystem, PolarState, RelativisticSystem, SystemSpec,
};

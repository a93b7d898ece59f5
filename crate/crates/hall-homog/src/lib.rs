//! Effective conductivity of high-contrast, Hall-perturbed columnar composites.
//!
//! A columnar two-phase conductor in a constant magnetic field `h` carries the
//! non-symmetric conductivity `σ(h) = α I₃ + β E(h)`, where `E(h)x = h × x`.
//! Because the microstructure is independent of the third coordinate, the 3×3
//! periodic cell problems reduce to 2D transversal problems on the unit cell,
//! and the full homogenized tensor can be assembled in two independent ways:
//!
//! * **direct** — solve the transversal cell problems for `λ = e₁, e₂` and a
//!   reduced source problem for the `e₃` column ([`cell::homogenize`]);
//! * **pi** — conjugate by the unit-triangular pair `Π, Π̂` that makes the
//!   off-blocks phase-constant, homogenize the transformed medium where the
//!   third column is explicit, and conjugate back ([`cell::homogenize_via_pi`]).
//!
//! In the high-contrast limit (inclusion fraction `θₙ → 0` with
//! `θₙ α₂,ₙ → α₂`, `θₙ β₂,ₙ → β₂`) the effective tensor has a closed form in
//! terms of the transversal limit `σ̃*` and `θ`; the [`formulas`] module holds
//! that assembly together with the fully explicit circular-fibre and thin-grid
//! oracles. [`sweep`] drives contrast schedules through the solver and compares
//! against the oracles; [`macro3d`] validates the homogenization statement
//! itself on small 3D Dirichlet problems.
//!
//! Independent solves (distinct `λ`, schedule stages, fine/homogenized runs)
//! execute in parallel when the `parallel` feature is enabled (default); every
//! individual solve is sequential, so results do not depend on scheduling.

pub mod cell;
pub mod fem;
pub mod formulas;
pub mod geometry;
pub mod macro3d;
pub mod par;
pub mod sweep;
pub mod tensor;

mod error;

pub use error::HomogError;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, HomogError>;

//! Numerical engine for the one-phase Muskat (Hele-Shaw) problem in a vessel
//! with moving contact points.
//!
//! Layout follows the computation: [`model`] and [`remainder`] hold the shared
//! vocabulary, [`stationary`] fixes the reference domain, [`diffeo`] and
//! [`elliptic`] map and solve the potential problem, [`dynamics`] advances the
//! surface perturbation and [`diagnostics`] audits the energy identities.

pub mod diagnostics;
pub mod diffeo;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod remainder;
pub mod stationary;

pub use error::{MuskatError, Result};
pub use grid::GridFn1D;
pub use model::{PhysParams, VesselGeometry, WallProfile};

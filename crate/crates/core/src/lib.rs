//! Numerical laboratory for scalar-curvature rigidity of geodesic balls in `S^n`.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: stereographic chart of the cap `Ω = {f ≥ c}`, background
//!   geometry in closed form, and product quadrature.
//! - [`fields`] and [`jet`]: perturbations `h`, vector fields, and their
//!   covariant jets.
//! - [`curvature`]: exact, expanded and brute-force scalar and mean curvature
//!   of `g = ḡ + h`.
//! - [`gauge`]: least-squares projection onto the divergence-free slice.
//! - [`analysis`]: integral identities, the quadratic form `Q`, thresholds,
//!   coercivity spectra and the rigidity certificate.

pub mod analysis;
pub mod curvature;
pub mod error;
pub mod fields;
pub mod gauge;
pub mod geometry;
pub mod jet;
pub mod poly;
pub mod taylor;

pub use error::{Error, Result};
pub use fields::{Derivatives, FieldRecipe, SymTensorField, VectorField};
pub use geometry::{ChartSpec, QuadParams};
pub use jet::FieldJet;

//! Numerical laboratory for the mean field equation
//!
//! ```text
//! Δu + ρ (f e^u / ∫ f e^u dV − 1/|M|) = 0
//! ```
//!
//! and its volume-form gradient flow `∂t e^u = Δu + ρ (f e^u / ∫ f e^u dV − 1/|M|)`
//! on the flat torus `[0, 2π)²` and the unit sphere.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure function of
//! its inputs; file formats, configuration and the command line live in the
//! `meanflow` companion crate.
//!
//! Module map:
//!
//! * [`mesh`]: grids, quadrature, Laplace–Beltrami operator, Dirichlet energy, distances.
//! * [`fieldexpr`]: closed-form expressions for `f` and `u₀`.
//! * [`symmetry`]: finite isometry groups as exact node permutations.
//! * [`diagnostics`]: energy, dissipation, Moser–Trudinger functionals, bubbles.
//! * [`flow`]: explicit RK4 integration of the flow with mass projection.
//! * [`stationary`]: damped Newton–Krylov solver for the elliptic equation.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod diagnostics;
pub mod fft;
pub mod fieldexpr;
pub mod flow;
mod linalg;
pub mod math;
pub mod mesh;
pub mod stationary;
pub mod symmetry;

pub use diagnostics::DiagnosticsRecord;
pub use fieldexpr::FieldExpr;
pub use flow::{FlowConfig, FlowResult, FlowState, FlowStatus};
pub use mesh::{Field, MeshGeometry, MeshKind, MeshSpec};
pub use stationary::NewtonConfig;
pub use symmetry::GroupAction;

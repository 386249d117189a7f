//! Nonconforming least-squares spectral element solver for the
//! two-dimensional generalized Stokes equations
//!
//! ```text
//! alpha u - nu Laplace u + grad p = f,   -div u = h
//! ```
//!
//! on meshes of curvilinear quadrilaterals. The discrete solution minimizes a
//! weighted sum of residual norms with a matrix-free preconditioned conjugate
//! gradient method.

pub mod assembly;
pub mod cli;
pub mod basis;
pub mod error;
pub mod geometry;
pub mod norms;
pub mod postproc;
pub mod problems;
pub mod solver;

pub use assembly::{FunctionalBreakdown, LeastSquaresSystem, SpectralField, Var};
pub use error::{Error, Result};
pub use geometry::{build_case_mesh, Mesh};
pub use problems::{make_case, CaseData, CaseParams};

//! Numerical laboratory for the 3D Ginzburg–Landau functional with pinning.

// NaN-rejecting guards are written as `!(x > 0.0)`; stencils index several arrays by axis.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod energy;
pub mod error;
pub mod io;
pub mod isoflux;
pub mod linalg;
pub mod mesh;
pub mod minimize;
pub mod meissner;
pub mod pinning;
pub mod vortex;

pub use error::{Error, Result};
pub use mesh::{ComplexField, Grid, GridSpec, Loc, Omega, ScalarField, VKind, VectorField};
pub use num_complex::Complex64;
pub use pinning::{DensitySolution, PinningKind, PinningProfile};

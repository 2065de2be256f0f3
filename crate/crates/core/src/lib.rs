//! Certifying exactness of semidefinite relaxations of quadratically
//! constrained quadratic programs whose feasible cone is carved out by a
//! (possibly infinite) family of quadratic constraints.
//!
//! The pipeline: normalize the constraint data, facially reduce to a face
//! with a positive definite point, prune redundant constraints, certify the
//! pairwise separation condition, solve the SDP and extract a rank-one
//! solution.

pub mod certify;
pub mod dense;
pub mod error;
pub mod exact;
pub mod gallery;
pub mod io;
pub mod model;
pub mod oracle;
pub mod plot;
pub mod reduce;
pub mod sdp;
pub mod symmat;

pub use error::{Error, Result};
pub use symmat::SymMat;

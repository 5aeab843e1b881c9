//! Dense linear algebra, assignment and seeded randomness.

pub mod hungarian;
pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod svd;

pub use hungarian::{assignment_cost, hungarian};
pub use linalg::{cholesky, log_det_spd, op_norm_2, submatrix};
pub use matrix::{dot, norm2, Matrix};
pub use rng::{derive_seed, rng_streams, RngStream};
pub use svd::{svd, svd_project_backward, SvdResult};

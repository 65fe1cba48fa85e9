//! Exponentially small splitting of the two-dimensional invariant manifolds of a
//! Hopf-zero unfolding: Melnikov coefficients, their asymptotics, and direct
//! high-precision measurement of the splitting.

// `!(x > 0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod hp;
pub mod linalg;
pub mod melnikov;
pub mod manifolds;
pub mod model;
pub mod special;

pub use error::{Error, Result};
pub use hp::{HPComplex, Real, ScalarConfig};

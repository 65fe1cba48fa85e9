//! Gamma function, quadrature and the `I` integrals behind the Melnikov coefficients.

pub mod gamma;
pub mod integrals;
pub mod quadrature;

pub use gamma::{beta, gamma};
pub use integrals::{i_asymptotic, i_bound_check, i_closed, i_closed_beta, i_quadrature, i_recurrence, IIntegralKey};

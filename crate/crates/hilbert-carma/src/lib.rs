//! Continuous-time autoregressive moving-average (CARMA) processes with values
//! in separable Hilbert spaces, represented by spectral truncation.
//!
//! The state process solves
//!
//! ```text
//! dZ(t) = C_p Z(t) dt + P_p* dL(t),    X(t) = L_U Z(t),
//! ```
//!
//! where `C_p` is a p x p companion matrix of operators acting on a product
//! space `H = H_1 x ... x H_p`, `L` is a zero-mean square-integrable Levy
//! process in `H_p`, and `L_U` is a bounded observation operator. Every space
//! is truncated to its first `N` basis coefficients, so all operators become
//! dense matrices and the mild solution is evaluated exactly on the grid by
//! the semigroup of the truncated generator.
//!
//! Module map:
//!
//! - [`space`]: truncated Hilbert spaces, product spaces, linear maps and
//!   weight-aware adjoints.
//! - [`operators`]: companion system assembly, the derived `B_q` operators,
//!   the operator polynomial `Q_p` and the spectral stability check.
//! - [`semigroup`]: evaluation of `S_p(t)` by dense matrix exponential, by a
//!   recursive variation-of-constants series, and by the closed-form wave
//!   semigroup.
//! - [`noise`]: Q-Wiener and compound-Poisson noise, characteristic
//!   exponents, mode decomposition.
//! - [`carma`]: path simulation, observation, conditional and stationary
//!   Gaussian laws, characteristic functionals, semimartingale identities.
//! - [`discretize`]: the exact AR(1) step, innovation covariance, forward
//!   differences and the functional AR(p) scheme.

pub mod carma;
pub mod discretize;
pub mod error;
mod linalg;
pub mod noise;
pub mod operators;
pub mod quadrature;
pub mod semigroup;
pub mod space;

pub use error::{Error, Result};

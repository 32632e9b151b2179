//! Numerical laboratory for the Sherrington-Kirkpatrick spin glass at high
//! temperature, built around conditioning on the sigma-fields generated by a
//! recursive modification of the Gaussian interaction matrix.
//!
//! * [`order_params`]: N-independent scalars (the overlap `q`, the sequences
//!   `gamma_k`, `rho_k`, the AT value, the replica-symmetric free energy).
//! * [`vectorspace`]: normalized inner products, outer products, dense
//!   matrices and reproducible disorder sampling.
//! * [`cavity_recursion`]: the stage-by-stage construction of
//!   `g^(k)`, `phi^(k)`, `xi/eta/zeta^(k)`, `h^(k)` and `m^(k)`.
//! * [`sk_model`]: exact small-N enumeration of quenched and conditionally
//!   annealed partition functions.
//! * [`lab_harness`]: replica orchestration, statistics and reports.

pub mod cavity_recursion;
pub mod error;
pub mod lab_harness;
pub mod order_params;
pub mod sk_model;
pub mod vectorspace;

pub use error::{Error, Result};
pub use order_params::{ModelParams, OrderParams};
pub use vectorspace::{Disorder, Matrix};

//! Data-driven synthesis of structured distributed controllers from
//! frequency-response data.
//!
//! The library covers the full pipeline:
//!
//! * networked discrete-time LTI models, simulation and exact frequency
//!   response ([`lti`]),
//! * frequency-response estimation from experiment records and
//!   generalized-plant assembly ([`frf`]),
//! * linearly parameterized left-factorized controller classes with
//!   communication sparsity and delays ([`structure`]),
//! * iterative frequency-gridded semidefinite programming for H2, H-infinity
//!   and spatial-regret objectives ([`synthesis`], [`sdp`]),
//! * closed-loop evaluation: norms, regret sweeps and time-domain
//!   disturbance experiments ([`evaluation`]).
//!
//! The `power_grid` builders in [`lti`] reproduce the 5-bus swing-dynamics
//! case study end to end; see the `fresyn` CLI for the batch pipeline.

pub mod evaluation;
pub mod frf;
pub mod hermitian;
pub mod lti;
pub mod sdp;
pub mod structure;
pub mod synthesis;
pub mod textio;

pub use hermitian::{CMat, RMat};

//! Likelihood-ratio prediction intervals and bounds for a future observation.
//!
//! The LR statistic compares a reduced model, where the data and the
//! predictand share one parameter vector, against a full model where one
//! pre-selected component may differ for the predictand. Inverting the
//! statistic against a calibrated threshold gives the prediction region.

// `!(a < b)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calibrate;
pub mod discrete;
pub mod error;
pub mod ext_real;
pub mod families;
pub mod io;
pub mod lr;
pub mod optim;
pub mod rng;
pub mod simstudy;
pub mod special;
pub mod within_sample;

pub use error::{Error, Result};

//! Positive random features for the scaled softmax kernel with closed-form
//! variance-optimal parameters.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod attention;
pub mod dataio;
pub mod error;
pub mod experiments;
pub mod features;
pub mod kernel;
pub mod linalg;
pub mod qmc;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};

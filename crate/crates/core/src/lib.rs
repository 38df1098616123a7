//! Sparse identification of ODE/PDE right-hand sides from noisy data.
//!
//! The pipeline prepares finite-difference derivatives and a polynomial
//! candidate library, samples a regularized-horseshoe posterior over the
//! library coefficients with Langevin-type samplers (SGLD, MALA, cyclical
//! step sizes, two-replica exchange), prunes small coefficients by
//! sequential thresholding and reports coefficient and trajectory
//! uncertainty. An active-learning loop grows the training set from a
//! candidate pool with a hybrid variance / space-filling acquisition rule.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod identify;
pub mod io;
pub mod posterior;
pub mod samplers;
pub mod scenario;
pub mod seed;
pub mod systems;

pub use error::{Error, Result};

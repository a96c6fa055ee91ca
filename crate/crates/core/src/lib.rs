//! Joint assortment selection and pricing under the censored multinomial
//! logit choice model.
//!
//! - [`model`]: the environment (choice probabilities, censoring, revenue, instances).
//! - [`estimator`]: online mirror descent with Gram-matrix designs.
//! - [`assortment`]: exact cardinality-constrained MNL assortment optimisation.
//! - [`policies`]: LCB-pricing policies with UCB or Thompson-sampling assortments, plus baselines.
//! - [`harness`]: replicated expected-regret experiments.
//! - [`validation`]: the self-check suite behind `cmnl validate`.

pub mod assortment;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod policies;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};

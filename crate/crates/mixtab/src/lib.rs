//! Mixed-type tabular imputation and modeling toolkit.
//!
//! The pipeline: ingest a CSV of continuous and categorical columns with
//! missing cells ([`tabular`]), complete the missing entries by iterative
//! hard-thresholded SVD matrix completion with a cross-validated threshold
//! ([`completion`] on top of [`linalg`]), fit a gradient-boosted regression
//! tree model ([`gbt`]), attribute predictions to features with exact
//! Shapley values ([`shap`]), and probe bivariate associations ([`assoc`]).
//! [`bench`] generates seeded synthetic instances and compares the SVD
//! imputer against a median/mode baseline under identical masks and folds.
//!
//! Everything is deterministic given a seed: fixed inputs produce bit-exact
//! outputs regardless of thread count.

pub mod assoc;
pub mod bench;
pub mod cli;
pub mod completion;
pub mod error;
pub mod gbt;
pub mod linalg;
pub mod shap;
pub mod tabular;

mod rng;

pub use error::{Error, Result};

//! Wrapper variable selection for Gaussian model-based clustering.
//!
//! Candidate variables are scored by the BIC difference between a model in
//! which the variable carries cluster structure (a Gaussian mixture on the
//! selected set plus the candidate) and one in which it does not (a mixture on
//! the selected set plus a linear regression of the candidate on it). Greedy
//! stepwise and headlong searches walk the subset space using that score.
//!
//! - [`data`]: datasets, CSV ingestion, row sub-sampling
//! - [`gmm`]: parsimonious Gaussian mixtures, EM, hierarchical initialization
//! - [`regress`]: regression BIC with regressor-subset selection
//! - [`selection`]: the BIC-difference score and the search algorithms
//! - [`metrics`]: ARI, CER, classification error, VSER
//! - [`datagen`]: seeded synthetic scenarios
//! - [`bench`]: timing harness and Amdahl's-law fitting

pub mod bench;
pub mod data;
pub mod datagen;
pub mod error;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod regress;
pub mod selection;

pub use data::{Dataset, VariableSet};
pub use error::{Error, Result};

//! Clustering of items that are themselves multivariate normal estimates
//! `(x_i, Σ_i)`, scored by the exact marginal log-likelihood of the partition
//! under a flat or normal prior on the cluster means.
//!
//! The crate provides the likelihood with incremental per-cluster statistics,
//! Ward-D2/Bhattacharyya proposal dendrograms, greedy and Metropolis–Hastings
//! partition search, an equal-means chi-squared test for choosing the number
//! of clusters, and a synthetic benchmark generator.

pub mod error;
pub mod io;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod search;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use likelihood::{log_likelihood, LikelihoodBreakdown, PriorSpec};
pub use linalg::{CholeskyFactor, SpdMatrix};
pub use model::{ClusterStats, Dataset, GaussianItem, Partition};

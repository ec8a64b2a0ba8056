//! Partition proposals and optimisation.
//!
//! Agglomerative proposals (Bhattacharyya distances fed to Ward-D2) give one
//! nested partition per k; greedy single-item moves and a Metropolis sampler
//! refine partitions with the number of clusters left free.

mod distance;
mod greedy;
mod metropolis;
mod ward;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RandomStream;
use crate::model::{Dataset, Partition};

pub use distance::{bhattacharyya_distance, bhattacharyya_matrix};
pub use greedy::greedy_improve;
pub use metropolis::{metropolis_sample, MetropolisChain, Visit};
pub use ward::{cut_dendrogram, ward_d2_dendrogram, Dendrogram, Merge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Greedy,
    Metropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Greedy: sweep limit per restart. Metropolis: chain length in units of n proposals.
    pub max_sweeps: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Greedy: random restarts besides the supplied start. Metropolis: chains.
    pub restarts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::Greedy,
            max_sweeps: 100,
            temperature: 1.0,
            seed: 0,
            restarts: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig {
                field: "sweeps".into(),
                reason: "must be at least 1".into(),
            });
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig {
                field: "temperature".into(),
                reason: format!("must be positive and finite, got {}", self.temperature),
            });
        }
        Ok(())
    }
}

/// How Bhattacharyya distances are handed to the Ward-D2 recurrence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceTransform {
    /// Distances used as computed.
    #[default]
    AsIs,
    /// Square roots, so the recurrence squares back to the Bhattacharyya values.
    Sqrt,
}

/// Agglomerates once and cuts the dendrogram at every k in `k_min..=k_max`.
pub fn dendrogram_proposals(
    dataset: &Dataset,
    k_min: usize,
    k_max: usize,
    transform: DistanceTransform,
) -> Result<Vec<Partition>> {
    let n = dataset.len();
    for k in [k_min, k_max] {
        if k == 0 || k > n {
            return Err(Error::KOutOfRange { k, n });
        }
    }
    if k_min > k_max {
        return Err(Error::InvalidConfig {
            field: "k-min".into(),
            reason: format!("{k_min} exceeds k-max {k_max}"),
        });
    }
    let mut d = bhattacharyya_matrix(dataset)?;
    if transform == DistanceTransform::Sqrt {
        d.apply(|v| *v = v.sqrt());
    }
    let tree = ward_d2_dendrogram(&d)?;
    (k_min..=k_max).map(|k| cut_dendrogram(&tree, k)).collect()
}

/// Uniformly random number of clusters, then uniformly random labels.
pub(crate) fn random_partition(n: usize, rng: &mut RandomStream) -> Partition {
    use rand::Rng;
    let m = rng.random_range(1..=n.max(1));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    Partition::from_labels(&labels)
}

//! Items, datasets, partitions and per-cluster sufficient statistics.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det_2pi_inv, CholeskyFactor, SpdMatrix};

/// One multivariate normal estimate: a mean and its precision, with the
/// derived quantities the likelihood needs cached at construction.
#[derive(Debug, Clone)]
pub struct GaussianItem {
    id: String,
    mean: DVector<f64>,
    precision: SpdMatrix,
    precision_chol: CholeskyFactor,
    covariance: DMatrix<f64>,
    log_det_2pi_cov: f64,
    precision_times_mean: DVector<f64>,
    quad_self: f64,
    // x (Γx)ᵀ, summed per cluster to get the shrinkage term without a pass over members
    mean_outer_precision_mean: DMatrix<f64>,
}

impl GaussianItem {
    pub fn from_covariance(
        id: impl Into<String>,
        mean: DVector<f64>,
        covariance: SpdMatrix,
    ) -> Result<Self> {
        let id = id.into();
        let f = cholesky(&covariance).map_err(|e| tag(e, &id))?;
        let precision = SpdMatrix::new(f.inverse()).map_err(|e| tag(e, &id))?;
        Self::from_precision(id, mean, precision)
    }

    pub fn from_precision(
        id: impl Into<String>,
        mean: DVector<f64>,
        precision: SpdMatrix,
    ) -> Result<Self> {
        let id = id.into();
        if mean.len() != precision.dim() {
            return Err(Error::DimensionMismatch(format!(
                "item `{id}`: mean has length {}, precision is {}x{}",
                mean.len(),
                precision.dim(),
                precision.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("item `{id}`: non-finite mean")));
        }
        let precision_chol = cholesky(&precision).map_err(|e| tag(e, &id))?;
        let covariance = precision_chol.inverse();
        let log_det_2pi_cov = log_det_2pi_inv(&precision_chol);
        let precision_times_mean = precision.matrix() * &mean;
        let quad_self = mean.dot(&precision_times_mean).max(0.0);
        let mean_outer_precision_mean = &mean * precision_times_mean.transpose();
        Ok(GaussianItem {
            id,
            mean,
            precision,
            precision_chol,
            covariance,
            log_det_2pi_cov,
            precision_times_mean,
            quad_self,
            mean_outer_precision_mean,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn precision(&self) -> &SpdMatrix {
        &self.precision
    }
    pub fn precision_chol(&self) -> &CholeskyFactor {
        &self.precision_chol
    }
    /// Covariance recovered from the stored precision.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
    /// `log |2π Γ⁻¹|`.
    pub fn log_det_2pi_cov(&self) -> f64 {
        self.log_det_2pi_cov
    }
    /// `log |Σ|`.
    pub fn log_det_cov(&self) -> f64 {
        -self.precision_chol.log_det()
    }
    pub fn precision_times_mean(&self) -> &DVector<f64> {
        &self.precision_times_mean
    }
    pub fn quad_self(&self) -> f64 {
        self.quad_self
    }
}

fn tag(e: Error, id: &str) -> Error {
    match e {
        Error::NotPositiveDefinite(m) => Error::NotPositiveDefinite(format!("item `{id}`: {m}")),
        Error::DimensionMismatch(m) => Error::DimensionMismatch(format!("item `{id}`: {m}")),
        other => other,
    }
}

/// Items sharing one dimension, in load order.
#[derive(Debug, Clone)]
pub struct Dataset {
    dimension: usize,
    items: Vec<GaussianItem>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(items: Vec<GaussianItem>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::InvalidPartition(
                "dataset must contain at least one item".into(),
            ));
        };
        let dimension = first.dim();
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.dim() != dimension {
                return Err(Error::DimensionMismatch(format!(
                    "item `{}` has dimension {}, dataset has {dimension}",
                    item.id(),
                    item.dim()
                )));
            }
            if index.insert(item.id().to_string(), i).is_some() {
                return Err(Error::DuplicateId(item.id().to_string()));
            }
        }
        Ok(Dataset {
            dimension,
            items,
            index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn len(&self) -> usize {
        self.items.len()
    }
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
    pub fn items(&self) -> &[GaussianItem] {
        &self.items
    }
    pub fn item(&self, index: usize) -> &GaussianItem {
        &self.items[index]
    }
    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    /// Builds a partition from `(id, label)` pairs that must cover every item once.
    pub fn partition_from_assignment<'a, I>(&self, pairs: I) -> Result<Partition>
    where
        I: IntoIterator<Item = (&'a str, usize)>,
    {
        let mut labels: Vec<Option<usize>> = vec![None; self.len()];
        for (id, label) in pairs {
            let i = self.index_of(id)?;
            if labels[i].replace(label).is_some() {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::MissingId(self.items[i].id().to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Partition::from_labels(&labels))
    }
}

/// Assignment of items to `m` nonempty clusters labelled `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Accepts labels already in `0..m` with every label used.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let m = labels.iter().max().map_or(0, |&l| l + 1);
        let mut seen = vec![false; m];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!(
                "cluster label {missing} is unused"
            )));
        }
        Ok(Partition {
            labels,
            num_clusters: m,
        })
    }

    /// Arbitrary labels, compacted into canonical form.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = HashMap::new();
        let canonical = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            labels: canonical,
            num_clusters: map.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            num_clusters: n,
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            num_clusters: usize::from(n > 0),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
    pub fn label(&self, item: usize) -> usize {
        self.labels[item]
    }

    /// Member indices per cluster, ascending within each cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_clusters];
        for &l in &self.labels {
            out[l] += 1;
        }
        out
    }

    /// Relabels clusters by ascending smallest member index.
    pub fn canonicalize(&self) -> Partition {
        Partition::from_labels(&self.labels)
    }

    pub fn is_canonical(&self) -> bool {
        let mut next = 0;
        for &l in &self.labels {
            if l == next {
                next += 1;
            } else if l > next {
                return false;
            }
        }
        true
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} items, dataset has {n}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Additive sufficient statistics of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub n: usize,
    /// `ΣΓ_k`
    pub sum_precision: DMatrix<f64>,
    /// `ΣΓ_k x_k`
    pub sum_precision_mean: DVector<f64>,
    /// `Σ x_kᵀ Γ_k x_k`
    pub sum_quad: f64,
    /// `Σ log |2π Γ_k⁻¹|`
    pub sum_log_det_2pi_cov: f64,
    /// `Σ x_k (Γ_k x_k)ᵀ`
    pub sum_mean_outer: DMatrix<f64>,
}

impl ClusterStats {
    pub fn empty(p: usize) -> Self {
        ClusterStats {
            n: 0,
            sum_precision: DMatrix::zeros(p, p),
            sum_precision_mean: DVector::zeros(p),
            sum_quad: 0.0,
            sum_log_det_2pi_cov: 0.0,
            sum_mean_outer: DMatrix::zeros(p, p),
        }
    }

    pub fn from_item(item: &GaussianItem) -> Self {
        ClusterStats {
            n: 1,
            sum_precision: item.precision().matrix().clone(),
            sum_precision_mean: item.precision_times_mean.clone(),
            sum_quad: item.quad_self,
            sum_log_det_2pi_cov: item.log_det_2pi_cov,
            sum_mean_outer: item.mean_outer_precision_mean.clone(),
        }
    }

    pub fn from_indices(dataset: &Dataset, members: &[usize]) -> Self {
        let mut s = ClusterStats::empty(dataset.dimension());
        for &i in members {
            s.add_item(dataset.item(i));
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.sum_precision_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn add_item(&mut self, item: &GaussianItem) {
        self.n += 1;
        self.sum_precision += item.precision().matrix();
        self.sum_precision_mean += &item.precision_times_mean;
        self.sum_quad += item.quad_self;
        self.sum_log_det_2pi_cov += item.log_det_2pi_cov;
        self.sum_mean_outer += &item.mean_outer_precision_mean;
    }

    /// Removes an item counted in these stats; an emptied cluster is reset to exact zeros.
    pub fn remove_item(&mut self, item: &GaussianItem) {
        debug_assert!(self.n > 0, "removing from empty stats");
        self.n -= 1;
        if self.n == 0 {
            *self = ClusterStats::empty(self.dim());
            return;
        }
        self.sum_precision -= item.precision().matrix();
        self.sum_precision_mean -= &item.precision_times_mean;
        self.sum_quad -= item.quad_self;
        self.sum_log_det_2pi_cov -= item.log_det_2pi_cov;
        self.sum_mean_outer -= &item.mean_outer_precision_mean;
    }

    /// Like [`remove_item`](Self::remove_item) but refuses to empty the cluster.
    pub fn try_remove_item(&mut self, item: &GaussianItem) -> Result<()> {
        if self.n <= 1 {
            return Err(Error::EmptyClusterResult);
        }
        self.remove_item(item);
        Ok(())
    }

    pub fn merged(&self, other: &ClusterStats) -> ClusterStats {
        ClusterStats {
            n: self.n + other.n,
            sum_precision: &self.sum_precision + &other.sum_precision,
            sum_precision_mean: &self.sum_precision_mean + &other.sum_precision_mean,
            sum_quad: self.sum_quad + other.sum_quad,
            sum_log_det_2pi_cov: self.sum_log_det_2pi_cov + other.sum_log_det_2pi_cov,
            sum_mean_outer: &self.sum_mean_outer + &other.sum_mean_outer,
        }
    }

    /// Largest fieldwise absolute difference, for tolerance checks.
    pub fn max_abs_diff(&self, other: &ClusterStats) -> f64 {
        let mut d = (self.sum_precision.clone() - &other.sum_precision).amax();
        d = d.max((&self.sum_precision_mean - &other.sum_precision_mean).amax());
        d = d.max((self.sum_quad - other.sum_quad).abs());
        d = d.max((self.sum_log_det_2pi_cov - other.sum_log_det_2pi_cov).abs());
        d = d.max((&self.sum_mean_outer - &other.sum_mean_outer).amax());
        if self.n != other.n {
            d = f64::INFINITY;
        }
        d
    }
}

/// Sufficient statistics for the items named by `member_ids`.
pub fn cluster_stats(dataset: &Dataset, member_ids: &[&str]) -> Result<ClusterStats> {
    if member_ids.is_empty() {
        return Err(Error::EmptyClusterResult);
    }
    let idx = member_ids
        .iter()
        .map(|id| dataset.index_of(id))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterStats::from_indices(dataset, &idx))
}

pub fn stats_add(a: &ClusterStats, b: &ClusterStats) -> ClusterStats {
    a.merged(b)
}

pub fn stats_remove(a: &ClusterStats, item: &GaussianItem) -> ClusterStats {
    let mut s = a.clone();
    s.remove_item(item);
    s
}

pub fn canonicalize(partition: &Partition) -> Partition {
    partition.canonicalize()
}

//! Equal-means chi-squared test, multiplicity adjustment and per-k model
//! selection tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood, LikelihoodBreakdown, PriorSpec};
use crate::linalg::{factorize, quad_form};
use crate::model::{Dataset, Partition};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSqResult {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Upper tail `P(χ²_dof > x)`, the regularized incomplete gamma `Q(dof/2, x/2)`.
pub fn chisq_sf(x: f64, dof: u64) -> f64 {
    if dof == 0 || x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    statrs::function::gamma::gamma_ur(dof as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Number of distinct within-cluster pairs, `Σ n_g(n_g−1)/2`.
pub fn within_pairs(partition: &Partition) -> u64 {
    partition
        .cluster_sizes()
        .iter()
        .map(|&n| (n as u64) * (n as u64).saturating_sub(1) / 2)
        .sum()
}

/// Degrees of freedom of the equal-means test: every within-cluster pair
/// contributes one p-dimensional quadratic form.
pub fn equal_means_dof(partition: &Partition, dimension: usize) -> u64 {
    within_pairs(partition) * dimension as u64
}

fn pair_statistic(dataset: &Dataset, i: usize, j: usize) -> Result<f64> {
    let (a, b) = (dataset.item(i), dataset.item(j));
    let f = factorize(&(a.covariance() + b.covariance())).map_err(|e| match e {
        Error::NotPositiveDefinite(m) => {
            Error::NotPositiveDefinite(format!("pair ({}, {}): {m}", a.id(), b.id()))
        }
        other => other,
    })?;
    let d = a.mean() - b.mean();
    quad_form(&f, &d, &d)
}

fn finish(statistic: f64, dof: u64) -> ChiSqResult {
    let p_value = if dof == 0 {
        1.0
    } else {
        chisq_sf(statistic, dof)
    };
    ChiSqResult {
        statistic,
        dof,
        p_value,
    }
}

/// `Σ_g Σ_{i<j∈g} (x_i−x_j)ᵀ(Σ_i+Σ_j)⁻¹(x_i−x_j)` against its chi-squared reference.
pub fn equal_means_chisq(dataset: &Dataset, partition: &Partition) -> Result<ChiSqResult> {
    partition.check_len(dataset.len())?;
    let mut statistic = 0.0;
    for members in partition.clusters() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                statistic += pair_statistic(dataset, i, j)?;
            }
        }
    }
    Ok(finish(
        statistic,
        equal_means_dof(partition, dataset.dimension()),
    ))
}

/// All pairwise test terms of a dataset, for scoring many partitions.
#[derive(Debug, Clone)]
pub struct PairStatistics {
    n: usize,
    dimension: usize,
    // row-major strict upper triangle
    values: Vec<f64>,
}

impl PairStatistics {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let n = dataset.len();
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| pair_statistic(dataset, i, j))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PairStatistics {
            n,
            dimension: dataset.dimension(),
            values: rows.concat(),
        })
    }

    fn offset(&self, i: usize) -> usize {
        i * (2 * self.n - i - 1) / 2
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.values[self.offset(i) + (j - i - 1)]
    }

    pub fn chisq(&self, partition: &Partition) -> Result<ChiSqResult> {
        partition.check_len(self.n)?;
        let mut statistic = 0.0;
        for members in partition.clusters() {
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    statistic += self.get(i, j);
                }
            }
        }
        Ok(finish(
            statistic,
            equal_means_dof(partition, self.dimension),
        ))
    }
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn fdr_adjust(p_values: &[f64]) -> Vec<f64> {
    let n = p_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    let mut running = 1.0f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let scaled = p_values[i] * (n as f64 / (rank0 + 1) as f64);
        running = running.min(scaled);
        out[i] = running.min(1.0);
    }
    out
}

/// One candidate partition with `k` clusters.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    pub k: usize,
    pub flat: LikelihoodBreakdown,
    pub normal: Option<LikelihoodBreakdown>,
    pub chisq: ChiSqResult,
    #[serde(skip)]
    pub partition: Partition,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub alpha: f64,
    /// k maximising the flat-prior log-likelihood.
    pub best_k_flat: usize,
    /// k maximising the normal-prior log-likelihood, when one was evaluated.
    pub best_k_normal: Option<usize>,
    /// Smallest k whose equal-means test has `p > alpha`.
    pub fewest_k_not_rejected: Option<usize>,
}

impl SelectionReport {
    pub fn row(&self, k: usize) -> Option<&SelectionRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

fn argmax_k(rows: &[SelectionRow], score: impl Fn(&SelectionRow) -> f64) -> usize {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if score(r) > score(best) {
            best = r;
        }
    }
    best.k
}

/// Tabulates likelihoods and test results for one partition per k.
pub fn select_k(
    dataset: &Dataset,
    partitions_by_k: &[Partition],
    normal_prior: Option<&PriorSpec>,
    alpha: f64,
) -> Result<SelectionReport> {
    if partitions_by_k.is_empty() {
        return Err(Error::InvalidPartition("no candidate partitions".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig {
            field: "alpha".into(),
            reason: format!("{alpha} is not in [0, 1]"),
        });
    }
    if partitions_by_k
        .windows(2)
        .any(|w| w[0].num_clusters() >= w[1].num_clusters())
    {
        return Err(Error::InvalidPartition(
            "candidate partitions must have strictly increasing k".into(),
        ));
    }
    if let Some(p) = normal_prior {
        p.check_dim(dataset.dimension())?;
    }
    let pairs = PairStatistics::new(dataset)?;
    let rows = partitions_by_k
        .par_iter()
        .map(|part| {
            Ok(SelectionRow {
                k: part.num_clusters(),
                flat: log_likelihood(dataset, part, &PriorSpec::Flat)?,
                normal: normal_prior
                    .map(|p| log_likelihood(dataset, part, p))
                    .transpose()?,
                chisq: pairs.chisq(part)?,
                partition: part.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best_k_flat = argmax_k(&rows, |r| r.flat.total);
    let best_k_normal =
        normal_prior.map(|_| argmax_k(&rows, |r| r.normal.map_or(f64::NEG_INFINITY, |b| b.total)));
    let fewest_k_not_rejected = rows.iter().find(|r| r.chisq.p_value > alpha).map(|r| r.k);
    Ok(SelectionReport {
        rows,
        alpha,
        best_k_flat,
        best_k_normal,
        fewest_k_not_rejected,
    })
}

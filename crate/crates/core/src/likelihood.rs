//! Exact marginal log-likelihood of a partition.
//!
//! Every cluster contributes
//!
//! ```text
//!   −½ Σ_i log|2πΓ_i⁻¹|                  data term
//!   −½ log|2πΓ₀⁻¹|                      prior normalisation (normal prior only)
//!   +½ log|2π(Γ₀ + ΣΓ)⁻¹|               complexity
//!   −¼ Σ_{i,j} (x_i−x_j)ᵀ Γ_i (Γ₀+ΣΓ)⁻¹ Γ_j (x_i−x_j)     fit
//!   −½ Σ_i x_iᵀ Γ_i (Γ₀+ΣΓ)⁻¹ Γ₀ x_i    shrinkage (normal prior only)
//! ```
//!
//! with `Γ₀ = 0` for the flat prior. The partition-independent normalising
//! constant is dropped, so totals are only comparable between partitions of the
//! same dataset.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    factorize, log_det_2pi_inv, quad_form, solve_spd_matrix, CholeskyFactor, SpdMatrix,
};
use crate::model::{ClusterStats, Dataset, GaussianItem, Partition};

mod quadrature;
mod state;

pub use quadrature::quadrature_oracle;
pub use state::{SearchState, Target};

/// Prior on the cluster means.
#[derive(Debug, Clone)]
pub enum PriorSpec {
    /// Improper constant prior.
    Flat,
    /// `μ_g ~ N(0, Γ₀⁻¹)`.
    Normal {
        precision: SpdMatrix,
        /// `log |2π Γ₀⁻¹|`
        log_det_2pi_cov: f64,
    },
}

impl PriorSpec {
    pub fn normal(precision: SpdMatrix) -> Result<Self> {
        let f = factorize(precision.matrix())?;
        Ok(PriorSpec::Normal {
            log_det_2pi_cov: log_det_2pi_inv(&f),
            precision,
        })
    }

    /// `Γ₀ = I / σ₀²`.
    pub fn normal_isotropic(p: usize, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidConfig {
                field: "prior-sigma2".into(),
                reason: format!("must be positive and finite, got {sigma2}"),
            });
        }
        Self::normal(SpdMatrix::scaled_identity(p, 1.0 / sigma2)?)
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, PriorSpec::Flat)
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        match self {
            PriorSpec::Normal { precision, .. } if precision.dim() != p => {
                Err(Error::DimensionMismatch(format!(
                    "prior precision is {0}x{0}, data dimension is {p}",
                    precision.dim()
                )))
            }
            _ => Ok(()),
        }
    }

    fn precision(&self) -> Option<&DMatrix<f64>> {
        match self {
            PriorSpec::Flat => None,
            PriorSpec::Normal { precision, .. } => Some(precision.matrix()),
        }
    }

    /// `Γ₀ + ΣΓ`, factorized.
    fn posterior_factor(&self, sum_precision: &DMatrix<f64>) -> Result<CholeskyFactor> {
        match self.precision() {
            None => factorize(sum_precision),
            Some(g0) => factorize(&(sum_precision + g0)),
        }
        .map_err(|e| match e {
            Error::NotPositiveDefinite(m) => {
                Error::NotPositiveDefinite(format!("cluster precision sum: {m}"))
            }
            other => other,
        })
    }
}

/// Per-term decomposition of a log-likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LikelihoodBreakdown {
    pub data_term: f64,
    pub prior_norm_term: f64,
    pub complexity_term: f64,
    pub fit_term: f64,
    pub shrink_term: f64,
    pub total: f64,
}

impl LikelihoodBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.data_term
            + self.prior_norm_term
            + self.complexity_term
            + self.fit_term
            + self.shrink_term;
        self
    }

    fn accumulate(&mut self, other: &LikelihoodBreakdown) {
        self.data_term += other.data_term;
        self.prior_norm_term += other.prior_norm_term;
        self.complexity_term += other.complexity_term;
        self.fit_term += other.fit_term;
        self.shrink_term += other.shrink_term;
    }
}

/// Contribution of one cluster, computed from its sufficient statistics.
pub fn cluster_contribution(
    stats: &ClusterStats,
    prior: &PriorSpec,
) -> Result<LikelihoodBreakdown> {
    if stats.is_empty() {
        return Ok(LikelihoodBreakdown::default());
    }
    let f = prior.posterior_factor(&stats.sum_precision)?;
    let quad = fit_quadform_factored(stats, &f)?;
    let shrink_sum = match prior.precision() {
        None => 0.0,
        Some(g0) => shrink_sum_factored(stats, &f, g0)?,
    };
    // a singleton has no pairs; its whole quadratic form is shrinkage
    let pairwise = if stats.n == 1 { 0.0 } else { quad - shrink_sum };
    let shrink_sum = if stats.n == 1 { quad } else { shrink_sum };
    let prior_norm_term = match prior {
        PriorSpec::Flat => 0.0,
        PriorSpec::Normal {
            log_det_2pi_cov, ..
        } => -0.5 * log_det_2pi_cov,
    };
    Ok(LikelihoodBreakdown {
        data_term: -0.5 * stats.sum_log_det_2pi_cov,
        prior_norm_term,
        complexity_term: 0.5 * log_det_2pi_inv(&f),
        fit_term: -0.5 * pairwise,
        shrink_term: if prior.is_flat() {
            0.0
        } else {
            -0.5 * shrink_sum
        },
        total: 0.0,
    }
    .finish())
}

fn fit_quadform_factored(stats: &ClusterStats, f: &CholeskyFactor) -> Result<f64> {
    let b = &stats.sum_precision_mean;
    Ok(stats.sum_quad - quad_form(f, b, b)?)
}

// Σ_i x_iᵀ Γ_i A⁻¹ Γ₀ x_i = tr(A⁻¹ Γ₀ Σ_i x_i (Γ_i x_i)ᵀ)
fn shrink_sum_factored(stats: &ClusterStats, f: &CholeskyFactor, g0: &DMatrix<f64>) -> Result<f64> {
    let z = solve_spd_matrix(f, g0)?;
    Ok(z.component_mul(&stats.sum_mean_outer.transpose()).sum())
}

/// `Σ x_iᵀΓ_i x_i − (ΣΓx)ᵀ (Γ₀ + ΣΓ)⁻¹ (ΣΓx)`: the quadratic form left after
/// completing the square in the cluster mean.
pub fn cluster_fit_quadform(stats: &ClusterStats, prior: &PriorSpec) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::EmptyClusterResult);
    }
    let f = prior.posterior_factor(&stats.sum_precision)?;
    fit_quadform_factored(stats, &f)
}

/// The same quadratic form evaluated pair by pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseFit {
    /// `Σ_{i,j} x_iᵀ Γ_i (Γ₀+ΣΓ)⁻¹ Γ_j (x_i−x_j)` over ordered pairs.
    pub pairwise: f64,
    /// `Σ_i x_iᵀ Γ_i (Γ₀+ΣΓ)⁻¹ Γ₀ x_i`, zero for the flat prior.
    pub shrink: f64,
}

impl PairwiseFit {
    pub fn total(&self) -> f64 {
        self.pairwise + self.shrink
    }
}

fn summed_precision_factor(items: &[&GaussianItem], prior: &PriorSpec) -> Result<CholeskyFactor> {
    let first = items.first().ok_or(Error::EmptyClusterResult)?;
    let p = first.dim();
    let mut sum = DMatrix::zeros(p, p);
    for it in items {
        sum += it.precision().matrix();
    }
    prior.posterior_factor(&sum)
}

/// O(n²) evaluation of the fit term over explicit item pairs.
///
/// Exact for any precisions. Each ordered pair contributes
/// `x_iᵀ C_ij (x_i − x_j)` with `C_ij = Γ_i (Γ₀+ΣΓ)⁻¹ Γ_j`.
pub fn cluster_fit_pairwise(items: &[&GaussianItem], prior: &PriorSpec) -> Result<PairwiseFit> {
    let f = summed_precision_factor(items, prior)?;
    let mut pairwise = 0.0;
    for (a, xi) in items.iter().enumerate() {
        for (b, xj) in items.iter().enumerate() {
            if a != b {
                let d: DVector<f64> = xi.mean() - xj.mean();
                pairwise += quad_form(
                    &f,
                    xi.precision_times_mean(),
                    &(xj.precision().matrix() * d),
                )?;
            }
        }
    }
    let shrink = match prior.precision() {
        None => 0.0,
        Some(g0) => items
            .iter()
            .map(|it| quad_form(&f, it.precision_times_mean(), &(g0 * it.mean())))
            .sum::<Result<f64>>()?,
    };
    Ok(PairwiseFit { pairwise, shrink })
}

/// `½ Σ_{i,j} (x_i−x_j)ᵀ C_ij (x_i−x_j)`, the difference-only pairwise form.
///
/// Equals the pairwise part of [`cluster_fit_pairwise`] when the item
/// precisions commute (one dimension, or all diagonal), and differs otherwise
/// because `C_ij` is then not symmetric.
pub fn cluster_fit_pairwise_symmetric(items: &[&GaussianItem], prior: &PriorSpec) -> Result<f64> {
    let f = summed_precision_factor(items, prior)?;
    let mut pairwise = 0.0;
    for (a, xi) in items.iter().enumerate() {
        for xj in &items[a + 1..] {
            let d: DVector<f64> = xi.mean() - xj.mean();
            pairwise += quad_form(
                &f,
                &(xi.precision().matrix() * &d),
                &(xj.precision().matrix() * &d),
            )?;
        }
    }
    Ok(pairwise)
}

/// Per-cluster contributions, indexed by partition label.
pub fn log_likelihood_by_cluster(
    dataset: &Dataset,
    partition: &Partition,
    prior: &PriorSpec,
) -> Result<Vec<LikelihoodBreakdown>> {
    partition.check_len(dataset.len())?;
    prior.check_dim(dataset.dimension())?;
    partition
        .clusters()
        .iter()
        .map(|members| cluster_contribution(&ClusterStats::from_indices(dataset, members), prior))
        .collect()
}

pub fn log_likelihood(
    dataset: &Dataset,
    partition: &Partition,
    prior: &PriorSpec,
) -> Result<LikelihoodBreakdown> {
    let mut out = LikelihoodBreakdown::default();
    for c in log_likelihood_by_cluster(dataset, partition, prior)? {
        out.accumulate(&c);
    }
    Ok(out.finish())
}

/// `Σ_g 1/(2n_g) Σ_{i,j∈g} |x_i − x_j|²`, ignoring covariances.
pub fn within_group_ss(dataset: &Dataset, partition: &Partition) -> f64 {
    partition
        .clusters()
        .iter()
        .map(|members| {
            let mut s = 0.0;
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    s += (dataset.item(i).mean() - dataset.item(j).mean()).norm_squared();
                }
            }
            // both orders of each pair
            2.0 * s / (2.0 * members.len() as f64)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_stream;
    use crate::model::test_support::*;

    const LN_PI: f64 = 1.144_729_885_849_400_2;

    fn refs(ds: &Dataset) -> Vec<&GaussianItem> {
        ds.items().iter().collect()
    }

    #[test]
    fn singleton_flat_quadform_is_zero() {
        let mut rng = random_stream(1, 0);
        let ds = random_dataset(1, 3, &mut rng);
        let s = ClusterStats::from_indices(&ds, &[0]);
        assert!(cluster_fit_quadform(&s, &PriorSpec::Flat).unwrap().abs() < 1e-10);
        assert_eq!(
            cluster_fit_pairwise(&refs(&ds), &PriorSpec::Flat)
                .unwrap()
                .pairwise,
            0.0
        );
    }

    #[test]
    fn two_item_hand_values() {
        let ds = one_d(&[0.0, 2.0], &[1.0, 1.0]);
        let s = ClusterStats::from_indices(&ds, &[0, 1]);
        // 0 + 4 − 2²/2
        assert!((cluster_fit_quadform(&s, &PriorSpec::Flat).unwrap() - 2.0).abs() < 1e-14);
        let pw = cluster_fit_pairwise(&refs(&ds), &PriorSpec::Flat).unwrap();
        assert!((pw.pairwise - 2.0).abs() < 1e-14);
        assert_eq!(pw.shrink, 0.0);
    }

    #[test]
    fn tiny_normal_prior_approaches_flat() {
        let mut rng = random_stream(2, 0);
        let ds = random_dataset(5, 3, &mut rng);
        let s = ClusterStats::from_indices(&ds, &[0, 1, 2, 3, 4]);
        let flat = cluster_fit_quadform(&s, &PriorSpec::Flat).unwrap();
        let prior = PriorSpec::normal(SpdMatrix::scaled_identity(3, 1e-12).unwrap()).unwrap();
        let near = cluster_fit_quadform(&s, &prior).unwrap();
        assert!((flat - near).abs() < 1e-6);
    }

    #[test]
    fn pairwise_matches_quadform_both_priors() {
        let mut rng = random_stream(3, 0);
        let ds = random_dataset(6, 4, &mut rng);
        let s = ClusterStats::from_indices(&ds, &[0, 1, 2, 3, 4, 5]);
        for prior in [
            PriorSpec::Flat,
            PriorSpec::normal_isotropic(4, 2.0).unwrap(),
        ] {
            let q = cluster_fit_quadform(&s, &prior).unwrap();
            let pw = cluster_fit_pairwise(&refs(&ds), &prior).unwrap();
            assert!(
                (q - pw.total()).abs() <= 1e-8 * q.abs().max(1.0),
                "{q} vs {pw:?}"
            );
        }
    }

    #[test]
    fn symmetric_pairwise_form_needs_commuting_precisions() {
        let ds = one_d(&[0.3, -1.0, 2.5, 0.7], &[0.5, 2.0, 1.0, 0.2]);
        let pw = cluster_fit_pairwise(&refs(&ds), &PriorSpec::Flat).unwrap();
        let sym = cluster_fit_pairwise_symmetric(&refs(&ds), &PriorSpec::Flat).unwrap();
        assert!((pw.pairwise - sym).abs() <= 1e-12 * sym);

        let mut rng = random_stream(3, 0);
        let ds = random_dataset(6, 4, &mut rng);
        let pw = cluster_fit_pairwise(&refs(&ds), &PriorSpec::Flat).unwrap();
        let sym = cluster_fit_pairwise_symmetric(&refs(&ds), &PriorSpec::Flat).unwrap();
        assert!((pw.pairwise - sym).abs() > 1e-3 * sym);
    }

    #[test]
    fn all_singletons_flat_is_exactly_zero() {
        let mut rng = random_stream(4, 0);
        let ds = random_dataset(9, 3, &mut rng);
        let b = log_likelihood(&ds, &Partition::singletons(9), &PriorSpec::Flat).unwrap();
        assert_eq!(b.total, 0.0);
        assert_eq!(b.fit_term, 0.0);
    }

    #[test]
    fn two_identical_items_one_cluster() {
        let ds = one_d(&[0.0, 0.0], &[1.0, 1.0]);
        let b = log_likelihood(&ds, &Partition::single_cluster(2), &PriorSpec::Flat).unwrap();
        let expected = -crate::linalg::LN_2PI + 0.5 * LN_PI;
        assert!((b.total - expected).abs() < 1e-12);
        assert!((b.total - -1.265512).abs() < 1e-6);
    }

    #[test]
    fn breakdown_terms_sum_to_total() {
        let mut rng = random_stream(5, 0);
        let ds = random_dataset(8, 2, &mut rng);
        let part = Partition::from_labels(&[0, 1, 0, 2, 1, 0, 2, 2]);
        let prior = PriorSpec::normal_isotropic(2, 3.0).unwrap();
        let b = log_likelihood(&ds, &part, &prior).unwrap();
        let sum = b.data_term + b.prior_norm_term + b.complexity_term + b.fit_term + b.shrink_term;
        assert!((b.total - sum).abs() < 1e-12);
        assert!(b.fit_term <= 0.0 && b.shrink_term <= 0.0);
        assert!(
            (b.prior_norm_term + 1.5 * 2.0 * (2.0 * std::f64::consts::PI * 3.0).ln()).abs() < 1e-12
        );
    }

    #[test]
    fn prior_dimension_is_checked() {
        let ds = one_d(&[0.0], &[1.0]);
        let prior = PriorSpec::normal_isotropic(2, 1.0).unwrap();
        assert!(matches!(
            log_likelihood(&ds, &Partition::singletons(1), &prior),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(PriorSpec::normal_isotropic(2, 0.0).is_err());
    }

    #[test]
    fn within_group_ss_examples() {
        let ds = one_d(&[0.0, 2.0], &[1.0, 1.0]);
        assert!((within_group_ss(&ds, &Partition::single_cluster(2)) - 2.0).abs() < 1e-15);
        let same = one_d(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]);
        assert_eq!(within_group_ss(&same, &Partition::single_cluster(3)), 0.0);
    }
}

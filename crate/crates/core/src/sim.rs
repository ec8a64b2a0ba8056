//! Synthetic benchmark generator.
//!
//! Cluster means are drawn from `N(0, S₀)` together with cluster covariances
//! `S_g`; a candidate pair is kept only if its mean differs significantly from
//! zero (chi-squared test on `μᵀ S_g⁻¹ μ`, Benjamini–Hochberg adjusted across
//! the whole candidate pool). Items are then sampled as `x_i ~ N(μ_g, S_g)` and
//! reported with covariance `S_g + c·mean(S_g)·v vᵀ`, `v ~ U(0,1)ᵖ`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, quad_form, random_stream, sample_mvn_factored, RandomStream, SpdMatrix,
};
use crate::model::{Dataset, GaussianItem, Partition};
use crate::stats::{chisq_sf, fdr_adjust};

/// 50 cluster sizes, 2 to 14 items, 300 items in total.
pub fn benchmark_cluster_sizes() -> Vec<usize> {
    vec![
        14, 14, 12, 12, 11, 11, 11, 11, 9, 9, 9, 9, 8, 8, 8, 8, 7, 7, 7, 7, 6, 6, 6, 6, 5, 5, 5, 5,
        4, 4, 4, 4, 4, 4, 3, 3, 3, 3, 3, 3, 3, 3, 2, 2, 2, 2, 2, 2, 2, 2,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "benchmark_cluster_sizes")]
    pub cluster_sizes: Vec<usize>,
    pub s0: f64,
    pub a0: f64,
    pub b0: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_p() -> usize {
    10
}
fn default_s() -> f64 {
    0.1
}
fn default_a() -> f64 {
    1.0
}
fn default_b() -> f64 {
    6.0
}
fn default_candidates() -> usize {
    10_000
}
fn default_alpha() -> f64 {
    0.05
}

impl SimulationConfig {
    fn base(s0: f64, a0: f64, b0: f64, seed: u64) -> Self {
        SimulationConfig {
            p: default_p(),
            cluster_sizes: benchmark_cluster_sizes(),
            s0,
            a0,
            b0,
            s: default_s(),
            a: default_a(),
            b: default_b(),
            c: 0.0,
            n_candidates: default_candidates(),
            alpha: default_alpha(),
            seed,
        }
    }

    /// Signal-to-noise ratio `E[μ²]/E[x²] ≈ 8` (`S₀ = 2I`).
    pub fn high_snr(seed: u64) -> Self {
        Self::base(2.0, 1.0, 0.0, seed)
    }

    /// Signal-to-noise ratio ≈ 2 with correlated mean components.
    pub fn low_snr(seed: u64) -> Self {
        Self::base(0.31, 0.09, 0.81, seed)
    }

    /// [`low_snr`](Self::low_snr) with covariance noise `c = 0.5`.
    pub fn low_snr_noisy(seed: u64) -> Self {
        SimulationConfig {
            c: 0.5,
            ..Self::low_snr(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "high-snr" => Some(Self::high_snr(seed)),
            "low-snr" => Some(Self::low_snr(seed)),
            "low-snr-noisy" => Some(Self::low_snr_noisy(seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| {
            Err(Error::InvalidConfig {
                field: field.into(),
                reason,
            })
        };
        if self.p == 0 {
            return bad("p", "must be at least 1".into());
        }
        if self.cluster_sizes.is_empty() || self.cluster_sizes.contains(&0) {
            return bad(
                "cluster_sizes",
                "must be a nonempty list of positive sizes".into(),
            );
        }
        for (name, v) in [
            ("s0", self.s0),
            ("a0", self.a0),
            ("b0", self.b0),
            ("s", self.s),
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
        ] {
            if !v.is_finite() {
                return bad(name, format!("{v} is not finite"));
            }
        }
        if self.a0 == 0.0 && self.b0 > 0.0 {
            return bad("a0", "a0 = 0 with b0 > 0 gives a rank-one S0".into());
        }
        if !(self.s0 * self.a0 > 0.0) {
            return bad(
                "s0",
                format!("s0·a0 = {} must be positive", self.s0 * self.a0),
            );
        }
        if !(self.s0 * (self.a0 + self.b0 * self.p as f64) > 0.0) {
            return bad("b0", "s0·(a0 + b0·p) must be positive".into());
        }
        if !(self.s * self.a > 0.0) || self.s * self.b < 0.0 {
            return bad("s", "need s·a > 0 and s·b ≥ 0".into());
        }
        if self.c < 0.0 {
            return bad("c", format!("{} is negative", self.c));
        }
        if self.n_candidates < self.cluster_sizes.len() {
            return bad(
                "n_candidates",
                format!(
                    "{} candidates cannot fill {} clusters",
                    self.n_candidates,
                    self.cluster_sizes.len()
                ),
            );
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("{} is not in (0, 1]", self.alpha));
        }
        Ok(())
    }
}

/// `S₀ = s₀ (a₀ I + b₀ 1 1ᵀ)`.
pub fn build_s0(config: &SimulationConfig) -> Result<SpdMatrix> {
    if config.a0 == 0.0 && config.b0 > 0.0 {
        return Err(Error::NotPositiveDefinite(
            "S0 with a0 = 0 and b0 > 0 is rank one".into(),
        ));
    }
    let p = config.p;
    let m = DMatrix::from_fn(p, p, |i, j| {
        config.s0 * (config.a0 * f64::from(u8::from(i == j)) + config.b0)
    });
    SpdMatrix::new(m)
}

fn uniform_vector(p: usize, rng: &mut RandomStream) -> DVector<f64> {
    DVector::from_fn(p, |_, _| Open01.sample(rng))
}

/// `S = s (a diag(u) + b r rᵀ)` with `u, r ~ U(0,1)ᵖ`.
pub fn sample_cluster_cov(config: &SimulationConfig, rng: &mut RandomStream) -> Result<SpdMatrix> {
    let u = uniform_vector(config.p, rng);
    let r = uniform_vector(config.p, rng);
    cluster_cov_from(config, &u, &r)
}

fn cluster_cov_from(
    config: &SimulationConfig,
    u: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<SpdMatrix> {
    let m = (DMatrix::from_diagonal(u) * config.a + r * r.transpose() * config.b) * config.s;
    SpdMatrix::new(m)
}

#[derive(Debug, Clone)]
pub struct TrueCluster {
    pub mu: DVector<f64>,
    pub covariance: SpdMatrix,
    pub size: usize,
}

/// Sample moments describing how separated the clusters are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    /// Mean `|μ_g|²` over all significant candidates.
    pub mean_signal: f64,
    /// Mean `tr(S_g)` over all significant candidates, i.e. `E|x_i − μ_g|²`.
    pub mean_noise: f64,
    pub ratio: f64,
    /// Mean `|μ_g|²` over the clusters actually used.
    pub realized_signal: f64,
    /// Mean `|x_i − μ_g|²` over the sampled items.
    pub realized_noise: f64,
    pub survivors: usize,
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    /// Item covariances exactly as generated.
    pub covariances: Vec<SpdMatrix>,
    pub truth: Partition,
    pub true_clusters: Vec<TrueCluster>,
    pub snr: SnrSummary,
}

struct Candidate {
    mu: DVector<f64>,
    cov: SpdMatrix,
}

pub fn generate(config: &SimulationConfig) -> Result<SimulatedDataset> {
    config.validate()?;
    let p = config.p;
    let s0 = cholesky(&build_s0(config)?)?;
    let mut pool_rng = random_stream(config.seed, 0);
    let mut item_rng = random_stream(config.seed, 1);

    let zero = DVector::zeros(p);
    let mut candidates = Vec::with_capacity(config.n_candidates);
    let mut p_values = Vec::with_capacity(config.n_candidates);
    for _ in 0..config.n_candidates {
        let cov = sample_cluster_cov(config, &mut pool_rng)?;
        let mu = sample_mvn_factored(&zero, &s0, &mut pool_rng)?;
        let stat = quad_form(&cholesky(&cov)?, &mu, &mu)?;
        p_values.push(chisq_sf(stat, p as u64));
        candidates.push(Candidate { mu, cov });
    }
    let adjusted = fdr_adjust(&p_values);
    let survivors: Vec<&Candidate> = candidates
        .iter()
        .zip(&adjusted)
        .filter(|(_, &q)| q < config.alpha)
        .map(|(c, _)| c)
        .collect();
    let needed = config.cluster_sizes.len();
    if survivors.len() < needed {
        return Err(Error::InsufficientSurvivors {
            found: survivors.len(),
            needed,
        });
    }
    let mean_signal =
        survivors.iter().map(|c| c.mu.norm_squared()).sum::<f64>() / survivors.len() as f64;
    let mean_noise = survivors
        .iter()
        .map(|c| c.cov.matrix().trace())
        .sum::<f64>()
        / survivors.len() as f64;

    let total: usize = config.cluster_sizes.iter().sum();
    let width = total.to_string().len().max(4);
    let mut items = Vec::with_capacity(total);
    let mut covariances = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut true_clusters = Vec::with_capacity(needed);
    let mut noise_sum = 0.0;
    for (g, (cand, &size)) in survivors.iter().zip(&config.cluster_sizes).enumerate() {
        let f = cholesky(&cand.cov)?;
        let cov_mean = cand.cov.matrix().mean();
        for _ in 0..size {
            let x = sample_mvn_factored(&cand.mu, &f, &mut item_rng)?;
            let v = uniform_vector(p, &mut item_rng);
            let s_i = if config.c == 0.0 {
                cand.cov.clone()
            } else {
                SpdMatrix::new(cand.cov.matrix() + &v * v.transpose() * (config.c * cov_mean))?
            };
            noise_sum += (&x - &cand.mu).norm_squared();
            let id = format!("item{:0width$}", items.len() + 1);
            items.push(GaussianItem::from_covariance(id, x, s_i.clone())?);
            covariances.push(s_i);
            labels.push(g);
        }
        true_clusters.push(TrueCluster {
            mu: cand.mu.clone(),
            covariance: cand.cov.clone(),
            size,
        });
    }
    let realized_signal = true_clusters
        .iter()
        .map(|c| c.mu.norm_squared())
        .sum::<f64>()
        / needed as f64;
    let snr = SnrSummary {
        mean_signal,
        mean_noise,
        ratio: mean_signal / mean_noise,
        realized_signal,
        realized_noise: noise_sum / total as f64,
        survivors: survivors.len(),
    };
    Ok(SimulatedDataset {
        dataset: Dataset::new(items)?,
        covariances,
        truth: Partition::new(labels)?,
        true_clusters,
        snr,
    })
}

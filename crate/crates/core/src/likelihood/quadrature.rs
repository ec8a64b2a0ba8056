//! Direct numerical integration over a one-dimensional cluster mean, used to
//! check the closed-form cluster contributions.

use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::model::GaussianItem;

use super::PriorSpec;

const MAX_ITEMS: usize = 8;
const REL_TOL: f64 = 1e-9;
const HALF_WIDTH_SDS: f64 = 12.0;
const MAX_DEPTH: u32 = 40;

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, depth: u32) -> Result<f64> {
    let (val, err) = kronrod(f, a, b);
    if err <= abs_tol || err <= 1e-15 * val.abs() {
        return Ok(val);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureNonConvergence(format!(
            "interval [{a}, {b}] error estimate {err:e} after {depth} bisections"
        )));
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, 0.5 * abs_tol, depth + 1)? + adaptive(f, m, b, 0.5 * abs_tol, depth + 1)?)
}

/// Log of `∫ P(μ) Π_i N(x_i | μ, σ_i²) dμ` for a one-dimensional cluster,
/// evaluated by adaptive Gauss–Kronrod quadrature. `P(μ) = 1` for the flat prior.
pub fn quadrature_oracle(items: &[&GaussianItem], prior: &PriorSpec) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyClusterResult);
    }
    if items.len() > MAX_ITEMS {
        return Err(Error::InvalidPartition(format!(
            "quadrature check supports at most {MAX_ITEMS} items, got {}",
            items.len()
        )));
    }
    if items.iter().any(|it| it.dim() != 1) {
        return Err(Error::DimensionMismatch(
            "quadrature check requires dimension 1".into(),
        ));
    }
    prior.check_dim(1)?;
    let obs: Vec<(f64, f64)> = items
        .iter()
        .map(|it| (it.mean()[0], it.precision().matrix()[(0, 0)]))
        .collect();
    let prior_precision = match prior {
        PriorSpec::Flat => None,
        PriorSpec::Normal { precision, .. } => Some(precision.matrix()[(0, 0)]),
    };

    let log_integrand = |mu: f64| -> f64 {
        let mut s = 0.0;
        for &(x, g) in &obs {
            s += -0.5 * (LN_2PI - g.ln()) - 0.5 * g * (x - mu) * (x - mu);
        }
        if let Some(g0) = prior_precision {
            s += -0.5 * (LN_2PI - g0.ln()) - 0.5 * g0 * mu * mu;
        }
        s
    };

    // centre on the mode and scale the integrand to O(1)
    let precision_sum: f64 = obs.iter().map(|o| o.1).sum::<f64>() + prior_precision.unwrap_or(0.0);
    let mode = obs.iter().map(|&(x, g)| g * x).sum::<f64>() / precision_sum;
    let peak = log_integrand(mode);
    let half = HALF_WIDTH_SDS / precision_sum.sqrt();
    let f = |mu: f64| (log_integrand(mu) - peak).exp();

    // the scaled integral is at least of order the pooled sd
    let abs_tol = REL_TOL * (2.0 * half / HALF_WIDTH_SDS);
    let mut total = 0.0;
    let pieces = 8;
    let width = 2.0 * half / pieces as f64;
    for k in 0..pieces {
        let a = mode - half + k as f64 * width;
        total += adaptive(&f, a, a + width, abs_tol / pieces as f64, 0)?;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::QuadratureNonConvergence(format!(
            "integral evaluated to {total}"
        )));
    }
    Ok(peak + total.ln())
}

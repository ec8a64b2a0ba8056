//! Dense symmetric-positive-definite kernels.
//!
//! Every inverse in the crate is applied through a [`CholeskyFactor`]; explicit
//! inverses are formed only when a covariance has to be recovered from a stored
//! precision.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative tolerance used when accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Seedable, stream-splittable generator used by every stochastic operation.
pub type RandomStream = ChaCha8Rng;

/// Independent stream `stream` derived from `seed`.
pub fn random_stream(seed: u64, stream: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Validates squareness, symmetry (to [`SYMMETRY_TOL`] relative) and positive
    /// definiteness. The stored matrix is the symmetrized `(M + Mᵀ) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let m = symmetrize(m)?;
        factorize(&m)?;
        Ok(SpdMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "expected {p} columns, found a row of length {}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn identity(p: usize) -> Self {
        SpdMatrix(DMatrix::identity(p, p))
    }

    pub fn scaled_identity(p: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(p, p) * scale)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }
}

fn symmetrize(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry".into()));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let t = m.transpose();
    let asym = (&m - &t).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok((m + t) * 0.5)
}

/// Lower-triangular `L` with `M = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// `log |M|`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `M⁻¹`, assembled column by column from triangular solves.
    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let inv = self.solve_matrix_unchecked(&DMatrix::identity(p, p));
        (&inv + inv.transpose()) * 0.5
    }

    fn solve_unchecked(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky diagonal is positive");
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("cholesky diagonal is positive")
    }

    fn solve_matrix_unchecked(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("cholesky diagonal is positive");
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("cholesky diagonal is positive")
    }

    /// `L⁻¹ u`, the whitened vector.
    fn whiten(&self, u: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(u)
            .expect("cholesky diagonal is positive")
    }
}

/// Cholesky factorization of a validated SPD matrix.
pub fn cholesky(m: &SpdMatrix) -> Result<CholeskyFactor> {
    factorize(m.matrix())
}

/// Factorizes a raw matrix, reading only its lower triangle.
pub(crate) fn factorize(m: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let p = m.nrows();
    if p != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square",
            p,
            m.ncols()
        )));
    }
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite(format!("pivot {j} is {diag:e}")));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// `log |2π Γ⁻¹| = p·log 2π − log |Γ|` for a factor of `Γ`.
pub fn log_det_2pi_inv(f: &CholeskyFactor) -> f64 {
    f.dim() as f64 * LN_2PI - f.log_det()
}

pub fn solve_spd(f: &CholeskyFactor, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(f, b.len())?;
    Ok(f.solve_unchecked(b))
}

pub fn solve_spd_matrix(f: &CholeskyFactor, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len(f, b.nrows())?;
    Ok(f.solve_matrix_unchecked(b))
}

/// `uᵀ A⁻¹ v` for a factor of `A`.
pub fn quad_form(f: &CholeskyFactor, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_len(f, u.len())?;
    check_len(f, v.len())?;
    Ok(f.whiten(u).dot(&f.whiten(v)))
}

fn check_len(f: &CholeskyFactor, len: usize) -> Result<()> {
    if f.dim() != len {
        return Err(Error::DimensionMismatch(format!(
            "factor is {0}x{0}, operand has length {len}",
            f.dim()
        )));
    }
    Ok(())
}

/// One draw from `N(mean, cov)` as `mean + L z`.
pub fn sample_mvn(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let f = cholesky(cov)?;
    sample_mvn_factored(mean, &f, rng)
}

/// Same as [`sample_mvn`] with the covariance already factorized.
pub fn sample_mvn_factored(
    mean: &DVector<f64>,
    cov_factor: &CholeskyFactor,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    check_len(cov_factor, mean.len())?;
    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    Ok(mean + cov_factor.lower() * z)
}

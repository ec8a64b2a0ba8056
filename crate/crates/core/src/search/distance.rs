use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{factorize, quad_form};
use crate::model::{Dataset, GaussianItem};

/// `⅛ Δμᵀ Σ̄⁻¹ Δμ + ½ log(|Σ̄| / √(|Σa||Σb|))` with `Σ̄ = (Σa + Σb)/2`.
pub fn bhattacharyya_distance(a: &GaussianItem, b: &GaussianItem) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "items `{}` and `{}` have dimensions {} and {}",
            a.id(),
            b.id(),
            a.dim(),
            b.dim()
        )));
    }
    let avg = (a.covariance() + b.covariance()) * 0.5;
    let f = factorize(&avg)?;
    let d = a.mean() - b.mean();
    let maha = quad_form(&f, &d, &d)?;
    let log_ratio = f.log_det() - 0.5 * (a.log_det_cov() + b.log_det_cov());
    Ok((0.125 * maha + 0.5 * log_ratio).max(0.0))
}

/// Symmetric matrix of pairwise Bhattacharyya distances with a zero diagonal.
pub fn bhattacharyya_matrix(dataset: &Dataset) -> Result<DMatrix<f64>> {
    let n = dataset.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| bhattacharyya_distance(dataset.item(i), dataset.item(j)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_stream, SpdMatrix};
    use crate::model::test_support::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    #[test]
    fn identical_items_are_zero() {
        let mut rng = random_stream(1, 0);
        let a = random_item(0, 4, &mut rng);
        assert!(bhattacharyya_distance(&a, &a.clone()).unwrap() < 1e-12);
    }

    #[test]
    fn hand_values() {
        let ds = one_d(&[0.0, 2.0], &[1.0, 1.0]);
        let d = bhattacharyya_distance(ds.item(0), ds.item(1)).unwrap();
        assert!((d - 0.5).abs() < 1e-14);

        let ds = one_d(&[0.0, 0.0], &[1.0, 3.0]);
        let d = bhattacharyya_distance(ds.item(0), ds.item(1)).unwrap();
        let expected = 0.5 * (2.0 / 3f64.sqrt()).ln();
        assert!((d - expected).abs() < 1e-14);
        assert!((d - 0.07192).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch() {
        let a =
            GaussianItem::from_covariance("a", DVector::zeros(1), SpdMatrix::identity(1)).unwrap();
        let b =
            GaussianItem::from_covariance("b", DVector::zeros(2), SpdMatrix::identity(2)).unwrap();
        assert!(matches!(
            bhattacharyya_distance(&a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn matrix_is_symmetric_with_zero_diagonal() {
        let mut rng = random_stream(2, 0);
        let ds = random_dataset(7, 3, &mut rng);
        let m = bhattacharyya_matrix(&ds).unwrap();
        assert_eq!(m.clone(), m.transpose());
        assert!(m.diagonal().iter().all(|v| *v == 0.0));
        assert_eq!(
            m[(2, 5)],
            bhattacharyya_distance(ds.item(2), ds.item(5)).unwrap()
        );
    }

    proptest! {
        #[test]
        fn nonnegative_and_symmetric(seed in any::<u64>(), p in 1usize..6) {
            let mut rng = random_stream(seed, 0);
            let a = random_item(0, p, &mut rng);
            let b = random_item(1, p, &mut rng);
            let ab = bhattacharyya_distance(&a, &b).unwrap();
            let ba = bhattacharyya_distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        }
    }
}

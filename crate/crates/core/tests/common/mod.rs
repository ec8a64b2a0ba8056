#![allow(dead_code)]

use mvnclust::linalg::{random_stream, RandomStream};
use mvnclust::{Dataset, GaussianItem, Partition, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn rng(seed: u64) -> RandomStream {
    random_stream(seed, 0)
}

pub fn random_spd(p: usize, rng: &mut RandomStream) -> SpdMatrix {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    SpdMatrix::new(&a * a.transpose() + DMatrix::identity(p, p) * 0.3).unwrap()
}

pub fn random_item(id: usize, p: usize, rng: &mut RandomStream) -> GaussianItem {
    let mean = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
    GaussianItem::from_covariance(format!("i{id}"), mean, random_spd(p, rng)).unwrap()
}

pub fn random_dataset(n: usize, p: usize, rng: &mut RandomStream) -> Dataset {
    Dataset::new((0..n).map(|i| random_item(i, p, rng)).collect()).unwrap()
}

pub fn random_partition(n: usize, max_k: usize, rng: &mut RandomStream) -> Partition {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..max_k)).collect();
    Partition::from_labels(&labels)
}

pub fn one_d(means: &[f64], vars: &[f64]) -> Dataset {
    let items = means
        .iter()
        .zip(vars)
        .enumerate()
        .map(|(i, (m, v))| {
            GaussianItem::from_covariance(
                format!("i{i}"),
                DVector::from_vec(vec![*m]),
                SpdMatrix::scaled_identity(1, *v).unwrap(),
            )
            .unwrap()
        })
        .collect();
    Dataset::new(items).unwrap()
}

/// Every set partition of `0..n` in canonical (restricted growth) form.
pub fn all_partitions(n: usize) -> Vec<Partition> {
    fn extend(labels: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Partition>) {
        if labels.len() == n {
            out.push(Partition::new(labels.clone()).unwrap());
            return;
        }
        for l in 0..=max {
            labels.push(l);
            extend(labels, n, if l == max { max + 1 } else { max }, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        extend(&mut vec![0], n, 1, &mut out);
    }
    out
}

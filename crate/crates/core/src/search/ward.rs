use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Partition;

/// One agglomeration step. Leaves are nodes `0..n`; step `t` creates node `n + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

fn validate(d: &DMatrix<f64>) -> Result<()> {
    let n = d.nrows();
    if n == 0 || n != d.ncols() {
        return Err(Error::InvalidDistanceMatrix(format!(
            "shape {}x{}",
            d.nrows(),
            d.ncols()
        )));
    }
    let scale = d.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(Error::InvalidDistanceMatrix(format!(
                "nonzero diagonal at {i}"
            )));
        }
        for j in 0..i {
            let (a, b) = (d[(i, j)], d[(j, i)]);
            if !a.is_finite() || a < 0.0 {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "entry ({i}, {j}) = {a}"
                )));
            }
            if (a - b).abs() > 1e-12 * scale {
                return Err(Error::InvalidDistanceMatrix(format!(
                    "asymmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Ward-D2 agglomeration: the input dissimilarities are squared, merged with
/// the Lance–Williams Ward update, and merge heights reported as square roots.
///
/// Among equal minimal distances the pair with the lexicographically smallest
/// (smallest leaf of one cluster, smallest leaf of the other) is merged.
pub fn ward_d2_dendrogram(distances: &DMatrix<f64>) -> Result<Dendrogram> {
    validate(distances)?;
    let n = distances.nrows();
    let mut sq = distances.map(|v| v * v);
    // slot i holds the cluster whose smallest leaf is i
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<_>>();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if active[b] && sq[(a, b)] < best.0 {
                    best = (sq[(a, b)], a, b);
                }
            }
        }
        let (d_ab, a, b) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let updated =
                ((na + nk) * sq[(k, a)] + (nb + nk) * sq[(k, b)] - nk * d_ab) / (na + nb + nk);
            sq[(k, a)] = updated;
            sq[(a, k)] = updated;
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge {
            left: node[a],
            right: node[b],
            height: d_ab.max(0.0).sqrt(),
            size: size[a],
        });
        node[a] = n + step;
    }
    Ok(Dendrogram { leaves: n, merges })
}

/// Partition with exactly `k` clusters: the first `n − k` merges applied.
pub fn cut_dendrogram(d: &Dendrogram, k: usize) -> Result<Partition> {
    let n = d.leaves;
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &d.merges[..n - k] {
        let (ra, rb) = (
            find(&mut parent, rep[m.left]),
            find(&mut parent, rep[m.right]),
        );
        parent[rb] = ra;
        rep.push(ra);
    }
    let labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Ok(Partition::from_labels(&labels))
}

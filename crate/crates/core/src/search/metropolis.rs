use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::likelihood::{PriorSpec, SearchState, Target};
use crate::linalg::{random_stream, RandomStream};
use crate::model::{Dataset, Partition};

use super::SearchConfig;

/// A partition visited by the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub partition: Partition,
    pub total: f64,
    pub visits: u64,
}

// Moves available to `item`: every other existing cluster, plus a new
// singleton unless the item already is one. Each proposal changes the partition.
fn move_count(state: &SearchState<'_>, item: usize) -> usize {
    let own = state.cluster_of(item);
    state.num_clusters() - 1 + usize::from(state.cluster_size(own) > 1)
}

// Moves available to `item` after it has moved to `target`.
fn reverse_move_count(state: &SearchState<'_>, item: usize, target: Target) -> usize {
    let from = state.cluster_of(item);
    let clusters_after = match target {
        Target::New => state.num_clusters() + 1,
        Target::Existing(_) if state.cluster_size(from) == 1 => state.num_clusters() - 1,
        Target::Existing(_) => state.num_clusters(),
    };
    // after the move the item is a singleton only if it went to a new cluster
    clusters_after - 1 + usize::from(target != Target::New)
}

fn pick_target(state: &SearchState<'_>, item: usize, choice: usize) -> Target {
    let own = state.cluster_of(item);
    let others = state.num_clusters() - 1;
    if choice < others {
        Target::Existing(if choice >= own { choice + 1 } else { choice })
    } else {
        Target::New
    }
}

/// A single Metropolis–Hastings chain that can be advanced one proposal at a time.
pub struct MetropolisChain<'a> {
    state: SearchState<'a>,
    rng: RandomStream,
    temperature: f64,
    current: Partition,
    accepted: u64,
}

impl<'a> MetropolisChain<'a> {
    pub fn new(
        dataset: &'a Dataset,
        start: &Partition,
        prior: &'a PriorSpec,
        temperature: f64,
        rng: RandomStream,
    ) -> Result<Self> {
        let state = SearchState::new(dataset, start, prior)?;
        let current = state.partition();
        Ok(MetropolisChain {
            state,
            rng,
            temperature,
            current,
            accepted: 0,
        })
    }

    /// Proposes one move and returns whether it was accepted.
    pub fn step(&mut self) -> Result<bool> {
        let n = self.state.num_items();
        let item = self.rng.random_range(0..n);
        let forward = move_count(&self.state, item);
        if forward == 0 {
            return Ok(false);
        }
        let target = pick_target(&self.state, item, self.rng.random_range(0..forward));
        let delta = self.state.move_delta(item, target)?;
        // Hastings correction for the state-dependent number of moves
        let reverse = reverse_move_count(&self.state, item, target);
        let log_accept = delta / self.temperature + (forward as f64 / reverse as f64).ln();
        let u: f64 = self.rng.random();
        if u.ln() < log_accept {
            self.state.apply_move(item, target)?;
            self.current = self.state.partition();
            self.accepted += 1;
            return Ok(true);
        }
        Ok(false)
    }

    /// Current partition in canonical form.
    pub fn current(&self) -> &Partition {
        &self.current
    }

    pub fn current_total(&self) -> f64 {
        self.state.total()
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }
}

fn run_chain(
    dataset: &Dataset,
    start: &Partition,
    prior: &PriorSpec,
    config: &SearchConfig,
    chain: u64,
) -> Result<HashMap<Partition, (f64, u64)>> {
    let mut mc = MetropolisChain::new(
        dataset,
        start,
        prior,
        config.temperature,
        random_stream(config.seed, chain),
    )?;
    let steps = config.max_sweeps.saturating_mul(dataset.len());
    let mut seen: HashMap<Partition, (f64, u64)> = HashMap::new();
    for _ in 0..steps {
        mc.step()?;
        seen.entry(mc.current().clone())
            .or_insert_with(|| (mc.current_total(), 0))
            .1 += 1;
    }
    Ok(seen)
}

/// Metropolis–Hastings over partitions with the likelihood as target density
/// (tempered by `config.temperature`). Proposals pick an item uniformly, then a
/// destination uniformly among the other clusters and a new singleton.
/// Chains (`config.restarts + 1` of them) run independently and their visit
/// counts are merged. Results are sorted by visit count, then likelihood.
pub fn metropolis_sample(
    dataset: &Dataset,
    start: &Partition,
    prior: &PriorSpec,
    config: &SearchConfig,
) -> Result<Vec<Visit>> {
    config.validate()?;
    let chains = (0..=config.restarts as u64)
        .into_par_iter()
        .map(|c| run_chain(dataset, start, prior, config, c))
        .collect::<Result<Vec<_>>>()?;
    let mut merged: HashMap<Partition, (f64, u64)> = HashMap::new();
    for chain in chains {
        for (p, (t, v)) in chain {
            merged.entry(p).or_insert((t, 0)).1 += v;
        }
    }
    let mut out: Vec<Visit> = merged
        .into_iter()
        .map(|(partition, (total, visits))| Visit {
            partition,
            total,
            visits,
        })
        .collect();
    out.sort_by(|a, b| {
        b.visits
            .cmp(&a.visits)
            .then(b.total.total_cmp(&a.total))
            .then(a.partition.cmp(&b.partition))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::log_likelihood;
    use crate::model::test_support::one_d;

    #[test]
    fn cold_chain_only_climbs() {
        let ds = one_d(&[0.0, 0.1, 3.0, 3.05, 3.1], &[0.01, 0.02, 0.01, 0.01, 0.03]);
        let start = Partition::from_labels(&[0, 1, 0, 1, 0]);
        let before = log_likelihood(&ds, &start, &PriorSpec::Flat).unwrap().total;
        let cfg = SearchConfig {
            temperature: 1e-9,
            max_sweeps: 200,
            seed: 4,
            ..SearchConfig::default()
        };
        let visits = metropolis_sample(&ds, &start, &PriorSpec::Flat, &cfg).unwrap();
        // downhill moves are never accepted, so nothing visited is worse than the start
        assert!(visits.iter().all(|v| v.total >= before - 1e-9));
        assert!(visits.iter().any(|v| v.total > before));
    }

    #[test]
    fn same_seed_same_chain() {
        let ds = one_d(&[0.0, 0.1, 0.5, 1.0], &[0.2, 0.3, 0.2, 0.1]);
        let cfg = SearchConfig {
            max_sweeps: 500,
            seed: 8,
            restarts: 1,
            ..SearchConfig::default()
        };
        let a = metropolis_sample(&ds, &Partition::singletons(4), &PriorSpec::Flat, &cfg).unwrap();
        let b = metropolis_sample(&ds, &Partition::singletons(4), &PriorSpec::Flat, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|v| v.visits).sum::<u64>(), 2 * 500 * 4);
        assert!(a.iter().all(|v| v.partition.is_canonical()));
    }

    #[test]
    fn proposal_counts_are_symmetric_under_reversal() {
        let ds = one_d(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1.0; 5]);
        let prior = PriorSpec::Flat;
        for labels in [
            [0, 0, 1, 1, 2],
            [0, 1, 2, 3, 4],
            [0, 0, 0, 0, 0],
            [0, 1, 1, 1, 1],
        ] {
            let st =
                SearchState::new(&ds, &Partition::new(labels.to_vec()).unwrap(), &prior).unwrap();
            for item in 0..5 {
                let k = move_count(&st, item);
                for choice in 0..k {
                    let target = pick_target(&st, item, choice);
                    assert!(!st.is_noop(item, target));
                    let mut next = st.clone();
                    next.apply_move(item, target).unwrap();
                    assert_eq!(
                        move_count(&next, item),
                        reverse_move_count(&st, item, target)
                    );
                }
            }
        }
    }
}

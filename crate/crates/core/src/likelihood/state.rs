use crate::error::{Error, Result};
use crate::model::{ClusterStats, Dataset, Partition};

use super::{cluster_contribution, LikelihoodBreakdown, PriorSpec};

/// Destination of a single-item move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Existing(usize),
    New,
}

#[derive(Debug, Clone)]
struct Slot {
    stats: ClusterStats,
    terms: LikelihoodBreakdown,
}

/// Mutable clustering state with cached per-cluster statistics, so a move is
/// scored by recomputing only the two clusters it touches.
///
/// Cluster indices are internal and dense; removing the last member of a
/// cluster swaps the highest index into its place.
#[derive(Debug, Clone)]
pub struct SearchState<'a> {
    dataset: &'a Dataset,
    prior: &'a PriorSpec,
    labels: Vec<usize>,
    slots: Vec<Slot>,
    commits_since_refresh: usize,
}

// incremental updates drift slowly; rebuild from scratch this often
const REFRESH_INTERVAL: usize = 4096;

impl<'a> SearchState<'a> {
    pub fn new(dataset: &'a Dataset, partition: &Partition, prior: &'a PriorSpec) -> Result<Self> {
        partition.check_len(dataset.len())?;
        prior.check_dim(dataset.dimension())?;
        let slots = partition
            .clusters()
            .iter()
            .map(|members| {
                let stats = ClusterStats::from_indices(dataset, members);
                let terms = cluster_contribution(&stats, prior)?;
                Ok(Slot { stats, terms })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SearchState {
            dataset,
            prior,
            labels: partition.labels().to_vec(),
            slots,
            commits_since_refresh: 0,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn num_items(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.slots.len()
    }

    pub fn cluster_of(&self, item: usize) -> usize {
        self.labels[item]
    }

    pub fn cluster_size(&self, cluster: usize) -> usize {
        self.slots[cluster].stats.n
    }

    pub fn total(&self) -> f64 {
        self.slots.iter().map(|s| s.terms.total).sum()
    }

    pub fn breakdown(&self) -> LikelihoodBreakdown {
        let mut out = LikelihoodBreakdown::default();
        for s in &self.slots {
            out.accumulate(&s.terms);
        }
        out.finish()
    }

    /// Current partition in canonical form.
    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.labels)
    }

    /// True when moving `item` to `target` would leave the partition unchanged.
    pub fn is_noop(&self, item: usize, target: Target) -> bool {
        let from = self.labels[item];
        match target {
            Target::Existing(c) => c == from,
            Target::New => self.slots[from].stats.n == 1,
        }
    }

    fn check(&self, item: usize, target: Target) -> Result<()> {
        if item >= self.labels.len() {
            return Err(Error::InvalidPartition(format!(
                "item index {item} out of range"
            )));
        }
        if let Target::Existing(c) = target {
            if c >= self.slots.len() {
                return Err(Error::InvalidPartition(format!(
                    "cluster index {c} out of range"
                )));
            }
        }
        Ok(())
    }

    /// Change in total log-likelihood if `item` moved to `target`.
    pub fn move_delta(&self, item: usize, target: Target) -> Result<f64> {
        self.check(item, target)?;
        if self.is_noop(item, target) {
            return Ok(0.0);
        }
        let it = self.dataset.item(item);
        let from = &self.slots[self.labels[item]];
        let mut shrunk = from.stats.clone();
        shrunk.remove_item(it);
        let mut delta = cluster_contribution(&shrunk, self.prior)?.total - from.terms.total;
        match target {
            Target::Existing(c) => {
                let to = &self.slots[c];
                let mut grown = to.stats.clone();
                grown.add_item(it);
                delta += cluster_contribution(&grown, self.prior)?.total - to.terms.total;
            }
            Target::New => {
                delta += cluster_contribution(&ClusterStats::from_item(it), self.prior)?.total;
            }
        }
        Ok(delta)
    }

    /// Moves `item`, returning the change in total. Emptied clusters are
    /// removed and the last cluster takes their index.
    pub fn apply_move(&mut self, item: usize, target: Target) -> Result<f64> {
        self.check(item, target)?;
        if self.is_noop(item, target) {
            return Ok(0.0);
        }
        let before = self.total();
        let it = self.dataset.item(item);
        let from = self.labels[item];
        let to = match target {
            Target::Existing(c) => c,
            Target::New => {
                self.slots.push(Slot {
                    stats: ClusterStats::empty(self.dataset.dimension()),
                    terms: LikelihoodBreakdown::default(),
                });
                self.slots.len() - 1
            }
        };
        self.slots[from].stats.remove_item(it);
        self.slots[from].terms = cluster_contribution(&self.slots[from].stats, self.prior)?;
        self.slots[to].stats.add_item(it);
        self.slots[to].terms = cluster_contribution(&self.slots[to].stats, self.prior)?;
        self.labels[item] = to;
        if self.slots[from].stats.is_empty() {
            let last = self.slots.len() - 1;
            self.slots.swap_remove(from);
            if from != last {
                for l in &mut self.labels {
                    if *l == last {
                        *l = from;
                    }
                }
            }
        }
        self.commits_since_refresh += 1;
        if self.commits_since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        Ok(self.total() - before)
    }

    /// Rebuilds every cluster's statistics from its members.
    pub fn refresh(&mut self) -> Result<()> {
        let mut members = vec![Vec::new(); self.slots.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        for (slot, m) in self.slots.iter_mut().zip(&members) {
            slot.stats = ClusterStats::from_indices(self.dataset, m);
            slot.terms = cluster_contribution(&slot.stats, self.prior)?;
        }
        self.commits_since_refresh = 0;
        Ok(())
    }
}

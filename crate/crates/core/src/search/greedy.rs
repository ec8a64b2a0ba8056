use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::Result;
use crate::likelihood::{LikelihoodBreakdown, PriorSpec, SearchState, Target};
use crate::linalg::random_stream;
use crate::model::{Dataset, Partition};

use super::{random_partition, SearchConfig};

// improvements smaller than this are treated as roundoff
const MIN_GAIN: f64 = 1e-10;

fn climb(state: &mut SearchState<'_>, config: &SearchConfig, restart: u64) -> Result<()> {
    let n = state.num_items();
    let mut rng = random_stream(config.seed, restart);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.max_sweeps {
        order.shuffle(&mut rng);
        let mut moved = false;
        for &item in &order {
            let own = state.cluster_of(item);
            let mut best: Option<(f64, Target)> = None;
            let candidates = (0..state.num_clusters())
                .filter(|&c| c != own)
                .map(Target::Existing)
                .chain((state.cluster_size(own) > 1).then_some(Target::New));
            for target in candidates {
                let delta = state.move_delta(item, target)?;
                if delta > MIN_GAIN && best.is_none_or(|(b, _)| delta > b) {
                    best = Some((delta, target));
                }
            }
            if let Some((_, target)) = best {
                state.apply_move(item, target)?;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    state.refresh()
}

/// Hill-climbs with best-improvement single-item moves (including moves to a
/// new singleton cluster) until no move improves the total. Restart 0 starts
/// from `start`; further restarts start from random partitions. The best
/// result over all restarts is returned.
pub fn greedy_improve(
    dataset: &Dataset,
    start: &Partition,
    prior: &PriorSpec,
    config: &SearchConfig,
) -> Result<(Partition, LikelihoodBreakdown)> {
    config.validate()?;
    let results = (0..=config.restarts as u64)
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                start.clone()
            } else {
                // separate stream from the sweep-order stream of the same restart
                let mut rng = random_stream(config.seed, u64::MAX - r);
                random_partition(dataset.len(), &mut rng)
            };
            let mut state = SearchState::new(dataset, &init, prior)?;
            climb(&mut state, config, r)?;
            Ok((state.partition(), state.breakdown()))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = results
        .into_iter()
        .reduce(|a, b| {
            if b.1.total > a.1.total || (b.1.total == a.1.total && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("at least one restart");
    Ok(best)
}

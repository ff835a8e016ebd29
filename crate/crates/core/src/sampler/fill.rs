use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::constraints::ItemAttributes;
use super::{SamplerError, SamplerSolution};
use crate::corpus::CompiledNtd;
use crate::ids::ScoredItem;

/// Outcome of [`fill_random`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilledList {
    /// Selected ids followed by the filled ones, in pick order.
    pub ids: Vec<String>,
    pub filled: Vec<String>,
    /// The pool ran dry before the list reached full size.
    pub exhausted: bool,
}

/// Tops a short selection up to `compiled.list_size` with random unselected
/// candidates. Each slot is drawn uniformly from the candidates whose buckets
/// still have the most unmet demand, so the list drifts toward the target
/// distribution where the pool allows it.
pub fn fill_random(
    solution: &SamplerSolution,
    candidates: &[ScoredItem],
    compiled: &CompiledNtd,
    attributes: &impl ItemAttributes,
    seed: u64,
) -> Result<FilledList, SamplerError> {
    let target = compiled.list_size;
    if solution.achieved_size >= target {
        return Err(SamplerError::NoDeficit);
    }
    let dims = compiled.dimensions.len();
    let mut counts: Vec<Vec<usize>> = compiled
        .dimensions
        .iter()
        .map(|d| vec![0; d.counts.len()])
        .collect();
    let bucket_vec = |id: &str| -> Vec<Option<usize>> {
        (0..dims).map(|d| attributes.bucket(id, d)).collect()
    };
    let tally = |counts: &mut Vec<Vec<usize>>, buckets: &[Option<usize>]| {
        for (d, b) in buckets.iter().enumerate() {
            if let Some(b) = *b {
                if let Some(c) = counts[d].get_mut(b) {
                    *c += 1;
                }
            }
        }
    };
    for id in &solution.selected {
        tally(&mut counts, &bucket_vec(id));
    }

    let taken: BTreeSet<&str> = solution.selected.iter().map(String::as_str).collect();
    let mut seen = BTreeSet::new();
    let mut pool: Vec<(&str, Vec<Option<usize>>)> = candidates
        .iter()
        .map(|c| c.id.as_str())
        .filter(|id| !taken.contains(id) && seen.insert(*id))
        .map(|id| (id, bucket_vec(id)))
        .collect();
    pool.sort_by(|a, b| a.0.cmp(b.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = solution.selected.clone();
    let mut filled = Vec::new();
    while ids.len() < target && !pool.is_empty() {
        let priority = |buckets: &[Option<usize>]| -> usize {
            buckets
                .iter()
                .enumerate()
                .filter(|(d, b)| {
                    b.is_some_and(|b| {
                        counts[*d].get(b).copied().unwrap_or(usize::MAX)
                            < compiled.dimensions[*d].counts.get(b).copied().unwrap_or(0)
                    })
                })
                .count()
        };
        let best = pool.iter().map(|(_, b)| priority(b)).max().unwrap_or(0);
        let tier: Vec<usize> = (0..pool.len())
            .filter(|&i| priority(&pool[i].1) == best)
            .collect();
        let pick = tier[rng.random_range(0..tier.len())];
        let (id, buckets) = pool.remove(pick);
        tally(&mut counts, &buckets);
        ids.push(id.into());
        filled.push(id.into());
    }
    Ok(FilledList {
        exhausted: ids.len() < target,
        ids,
        filled,
    })
}

//! Probability that each provider of a value produced it independently.
//!
//! Providers of a value are inserted one at a time; a provider is discounted
//! by every already-inserted provider it may have copied from.

use std::collections::BTreeMap;

use itertools::Itertools;

use crate::dependence::{DependencePosteriors, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::model::{FirstProvider, WorkerId};

/// Largest provider set the exhaustive ordering baseline accepts.
pub const MAX_ENUMERATED_PROVIDERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderOrdering {
    pub ordered: Vec<WorkerId>,
    pub independence: BTreeMap<WorkerId, f64>,
}

impl ProviderOrdering {
    /// Greedy ordering of `providers` together with each provider's
    /// independence probability.
    pub fn build(
        providers: &[WorkerId],
        posteriors: &DependencePosteriors,
        copy_prob: f64,
        rule: FirstProvider,
    ) -> Result<Self> {
        let idx = provider_indices(providers, posteriors)?;
        let order = greedy_order(&idx, posteriors.matrix(), rule);
        let probs = independence_along(&order, posteriors.matrix(), copy_prob);
        let names = posteriors.workers();
        Ok(Self {
            ordered: order.iter().map(|&i| names[i].clone()).collect(),
            independence: order
                .iter()
                .zip(probs)
                .map(|(&i, p)| (names[i].clone(), p))
                .collect(),
        })
    }
}

fn provider_indices(providers: &[WorkerId], posteriors: &DependencePosteriors) -> Result<Vec<usize>> {
    let mut idx = providers
        .iter()
        .map(|w| posteriors.index(w).ok_or_else(|| Error::UnknownWorker(w.clone())))
        .collect::<Result<Vec<_>>>()?;
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Insertion order of a value's providers.
pub fn order_providers(
    providers: &[WorkerId],
    posteriors: &DependencePosteriors,
    rule: FirstProvider,
) -> Result<Vec<WorkerId>> {
    let idx = provider_indices(providers, posteriors)?;
    let names = posteriors.workers();
    Ok(greedy_order(&idx, posteriors.matrix(), rule)
        .into_iter()
        .map(|i| names[i].clone())
        .collect())
}

/// `∏ (1 - r·P(worker → p))` over the predecessors `p`.
pub fn independence_probability(
    worker: &WorkerId,
    predecessors: &[WorkerId],
    posteriors: &DependencePosteriors,
    copy_prob: f64,
) -> Result<f64> {
    predecessors.iter().try_fold(1.0, |acc, p| {
        let d = posteriors
            .directed(worker, p)
            .ok_or_else(|| Error::UnknownWorker(p.clone()))?;
        Ok(acc * (1.0 - copy_prob * d))
    })
}

/// `providers` must be sorted ascending; ties resolve to the smallest index.
pub(crate) fn greedy_order(providers: &[usize], post: &PosteriorMatrix, rule: FirstProvider) -> Vec<usize> {
    if providers.len() <= 1 {
        return providers.to_vec();
    }

    let mut seed: Option<(usize, usize, f64)> = None;
    for (k, &a) in providers.iter().enumerate() {
        for &b in &providers[k + 1..] {
            let score = post.symmetric(a, b);
            let better = match (seed, rule) {
                (None, _) => true,
                (Some((.., s)), FirstProvider::MostDependent) => score > s,
                (Some((.., s)), FirstProvider::LeastDependent) => score < s,
            };
            if better {
                seed = Some((a, b, score));
            }
        }
    }
    let (a, b, _) = seed.expect("at least two providers");
    // The endpoint more likely to be copied from goes first.
    let first = if post.directed(a, b) <= post.directed(b, a) { a } else { b };

    let mut placed = vec![first];
    let mut remaining: Vec<usize> = providers.iter().copied().filter(|&p| p != first).collect();
    while !remaining.is_empty() {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, &cand) in remaining.iter().enumerate() {
            let score = placed
                .iter()
                .map(|&p| post.directed(cand, p))
                .fold(f64::NEG_INFINITY, f64::max);
            if score > best.1 {
                best = (k, score);
            }
        }
        placed.push(remaining.remove(best.0));
    }
    placed
}

/// Independence of each provider in `order` given everyone before it.
pub(crate) fn independence_along(order: &[usize], post: &PosteriorMatrix, copy_prob: f64) -> Vec<f64> {
    order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            order[..k]
                .iter()
                .map(|&p| 1.0 - copy_prob * post.directed(i, p))
                .product()
        })
        .collect()
}

/// Independence of each provider averaged over every insertion order.
/// Returned in the order of `providers`.
pub(crate) fn enumerated_independence(providers: &[usize], post: &PosteriorMatrix, copy_prob: f64) -> Vec<f64> {
    let k = providers.len();
    let mut sums = vec![0.0; k];
    let mut count = 0u64;
    for perm in (0..k).permutations(k) {
        let order: Vec<usize> = perm.iter().map(|&p| providers[p]).collect();
        for (&slot, prob) in perm.iter().zip(independence_along(&order, post, copy_prob)) {
            sums[slot] += prob;
        }
        count += 1;
    }
    let count = count.max(1) as f64;
    sums.into_iter().map(|s| s / count).collect()
}

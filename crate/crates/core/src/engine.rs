//! Iterative truth discovery and its baselines.
//!
//! [`run_date`] repeats three steps until the estimated truth stops changing
//! or the iteration cap is hit:
//!
//! 1. pairwise copy posteriors from the current truth and accuracies,
//! 2. per-value independence of every provider via a greedy insertion order,
//! 3. value truth probabilities, refreshed accuracies, and the support-count
//!    argmax per task.
//!
//! [`run_nc`] runs step 3 alone, [`run_ed`] replaces the greedy order of
//! step 2 with an average over every insertion order, and [`run_mv`] is plain
//! (optionally similarity-weighted) majority voting.

use serde::Serialize;
use tracing::debug;

use crate::dependence::{all_posteriors, DenseAccuracy, DependencePosteriors, PosteriorMatrix};
use crate::error::{Error, Result};
use crate::estimation::{adjust, argmax_support, mean_prob, similarity_matrix, truth_probs, Similarity};
use crate::independence::{enumerated_independence, greedy_order, independence_along, MAX_ENUMERATED_PROVIDERS};
use crate::model::{AccuracyMatrix, AccuracyScope, Instance, Observations, Params, TruthEstimate};

#[derive(Debug, Clone, Serialize)]
pub struct DateResult {
    pub truth: TruthEstimate,
    pub accuracy: AccuracyMatrix,
    /// Posteriors of the final round (all zero for [`run_nc`]).
    pub posteriors: DependencePosteriors,
    pub iterations: usize,
    /// The truth vector stopped changing before the iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IndependenceMode {
    Greedy,
    Enumerate,
    AllIndependent,
}

pub fn run_date(inst: &Instance, params: &Params) -> Result<DateResult> {
    iterate(inst, params, IndependenceMode::Greedy)
}

/// Step 3 only: every worker is treated as independent.
pub fn run_nc(inst: &Instance, params: &Params) -> Result<DateResult> {
    iterate(inst, params, IndependenceMode::AllIndependent)
}

/// Like [`run_date`], but each provider's independence is averaged over all
/// insertion orders of its value's providers. Refuses provider sets larger
/// than [`MAX_ENUMERATED_PROVIDERS`].
pub fn run_ed(inst: &Instance, params: &Params) -> Result<DateResult> {
    iterate(inst, params, IndependenceMode::Enumerate)
}

/// Plain majority vote; ties go to the smallest value token.
pub fn run_mv(inst: &Instance) -> Result<TruthEstimate> {
    run_mv_with(inst, &Similarity::Exact, 0.0)
}

/// Majority vote where every value also receives `rho · sim(v, v')` of the
/// votes cast for each other value `v'`.
pub fn run_mv_with(inst: &Instance, sim: &Similarity, rho: f64) -> Result<TruthEstimate> {
    let obs = Observations::build(inst)?;
    obs.require_observed()?;
    let sims = similarities(&obs, sim, rho);
    let (truth, probs) = majority_vote(&obs, sims.as_deref(), rho);
    Ok(to_estimate(&obs, &truth, &probs))
}

fn similarities(obs: &Observations, sim: &Similarity, rho: f64) -> Option<Vec<Vec<Vec<f64>>>> {
    (rho > 0.0).then(|| {
        obs.per_task
            .iter()
            .map(|t| similarity_matrix(&t.values, sim))
            .collect()
    })
}

fn majority_vote(
    obs: &Observations,
    sims: Option<&[Vec<Vec<f64>>]>,
    rho: f64,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut truth = Vec::with_capacity(obs.n_tasks());
    let mut probs = Vec::with_capacity(obs.n_tasks());
    for (t, task) in obs.per_task.iter().enumerate() {
        let counts: Vec<f64> = task.providers.iter().map(|p| p.len() as f64).collect();
        let total: f64 = counts.iter().sum();
        let support = match sims {
            Some(s) => adjust(&counts, &s[t], rho),
            None => counts.clone(),
        };
        truth.push(argmax_support(&support).expect("task has observations"));
        probs.push(counts.iter().map(|c| c / total).collect());
    }
    (truth, probs)
}

fn to_estimate(obs: &Observations, truth: &[usize], probs: &[Vec<f64>]) -> TruthEstimate {
    let mut out = TruthEstimate::default();
    for (t, task) in obs.per_task.iter().enumerate() {
        let id = obs.tasks[t].clone();
        out.values.insert(id.clone(), task.values[truth[t]].clone());
        out.probs.insert(
            id,
            task.values.iter().cloned().zip(probs[t].iter().copied()).collect(),
        );
    }
    out
}

fn check_enumerable(obs: &Observations) -> Result<()> {
    for (t, task) in obs.per_task.iter().enumerate() {
        for (v, providers) in task.providers.iter().enumerate() {
            if providers.len() > MAX_ENUMERATED_PROVIDERS {
                return Err(Error::EnumerationTooLarge {
                    task: obs.tasks[t].clone(),
                    value: task.values[v].clone(),
                    providers: providers.len(),
                    limit: MAX_ENUMERATED_PROVIDERS,
                });
            }
        }
    }
    Ok(())
}

/// Independence of every provider, aligned with `task.providers[v]`.
fn independence(
    obs: &Observations,
    post: &PosteriorMatrix,
    params: &Params,
    mode: IndependenceMode,
) -> Vec<Vec<Vec<f64>>> {
    obs.per_task
        .iter()
        .map(|task| {
            task.providers
                .iter()
                .map(|providers| match mode {
                    IndependenceMode::AllIndependent => vec![1.0; providers.len()],
                    IndependenceMode::Enumerate => {
                        enumerated_independence(providers, post, params.copy_prob)
                    }
                    IndependenceMode::Greedy => {
                        let order = greedy_order(providers, post, params.first_provider);
                        let probs = independence_along(&order, post, params.copy_prob);
                        providers
                            .iter()
                            .map(|w| probs[order.iter().position(|o| o == w).expect("permutation")])
                            .collect()
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-task: `A_i^j` is the mean truth probability of the worker's values on
/// task `j`. Pooled: the mean over all of the worker's values, shared by every
/// task it answered.
fn update_accuracy(obs: &Observations, probs: &[Vec<f64>], acc: &mut DenseAccuracy, scope: AccuracyScope) {
    for (w, answers) in obs.answers.iter().enumerate() {
        let answered = answers.iter().enumerate().filter_map(|(t, a)| a.as_ref().map(|v| (t, v)));
        match scope {
            AccuracyScope::PerTask => {
                for (t, values) in answered {
                    acc.set(w, t, mean_prob(values, &probs[t]));
                }
            }
            AccuracyScope::Pooled => {
                let (mut sum, mut count) = (0.0, 0usize);
                for (t, values) in answered.clone() {
                    sum += values.iter().map(|&v| probs[t][v]).sum::<f64>();
                    count += values.len();
                }
                let pooled = sum / count.max(1) as f64;
                for (t, _) in answered {
                    acc.set(w, t, pooled);
                }
            }
        }
    }
}

fn iterate(inst: &Instance, params: &Params, mode: IndependenceMode) -> Result<DateResult> {
    params.validate()?;
    let obs = Observations::build(inst)?;
    obs.require_observed()?;
    if mode == IndependenceMode::Enumerate {
        check_enumerable(&obs)?;
    }
    let (n, m) = (obs.n_workers(), obs.n_tasks());
    let sims = similarities(&obs, &params.similarity, params.rho);

    let mut acc = DenseAccuracy::filled(n, m, params.init_accuracy);
    let (mut truth, mut probs) = majority_vote(&obs, sims.as_deref(), params.rho);
    let mut post = PosteriorMatrix::zeros(n);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iters {
        if mode != IndependenceMode::AllIndependent {
            let current: Vec<Option<usize>> = truth.iter().copied().map(Some).collect();
            post = all_posteriors(&obs, &current, &acc, params);
        }
        let indep = independence(&obs, &post, params, mode);

        for (t, task) in obs.per_task.iter().enumerate() {
            probs[t] = truth_probs(task, |w| acc.get(w, t));
        }
        update_accuracy(&obs, &probs, &mut acc, params.accuracy_scope);
        let mut next = Vec::with_capacity(m);
        for (t, task) in obs.per_task.iter().enumerate() {
            let raw: Vec<f64> = task
                .providers
                .iter()
                .zip(&indep[t])
                .map(|(ps, is)| ps.iter().zip(is).map(|(&w, i)| acc.get(w, t) * i).sum())
                .collect();
            let support = match &sims {
                Some(s) => adjust(&raw, &s[t], params.rho),
                None => raw,
            };
            next.push(argmax_support(&support).expect("task has observations"));
        }

        iterations += 1;
        let changed = next.iter().zip(&truth).filter(|(a, b)| a != b).count();
        debug!(iteration = iterations, changed, "truth discovery round");
        truth = next;
        if changed == 0 {
            converged = true;
            break;
        }
    }

    let mut accuracy = AccuracyMatrix::new();
    for (w, answers) in obs.answers.iter().enumerate() {
        for (t, a) in answers.iter().enumerate() {
            if a.is_some() {
                accuracy.set(obs.workers[w].clone(), obs.tasks[t].clone(), acc.get(w, t));
            }
        }
    }
    Ok(DateResult {
        truth: to_estimate(&obs, &truth, &probs),
        accuracy,
        posteriors: DependencePosteriors::from_matrix(obs.workers.clone(), post),
        iterations,
        converged,
    })
}

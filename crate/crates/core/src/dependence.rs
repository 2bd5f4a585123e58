//! Directed copy detection between pairs of workers.
//!
//! For a pair `(i, i')` the tasks both answered are split into "same true",
//! "same false" and "different". Their likelihood is evaluated under
//! independence and under each copying direction, and the three hypotheses
//! are normalized into posteriors. Everything is accumulated in log space.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{
    AccuracyMatrix, FalseValueModel, Instance, Observations, Params, PriorMode, TaskId, WorkerId,
};

/// Accuracies are kept this far away from 0 and 1 before entering any
/// likelihood.
pub const ACCURACY_MARGIN: f64 = 1e-6;

pub fn clamp_accuracy(a: f64) -> f64 {
    a.clamp(ACCURACY_MARGIN, 1.0 - ACCURACY_MARGIN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agreement {
    SameTrue,
    SameFalse,
    Different,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharedTaskPartition {
    pub same_true: BTreeSet<TaskId>,
    pub same_false: BTreeSet<TaskId>,
    pub different: BTreeSet<TaskId>,
}

impl SharedTaskPartition {
    pub fn len(&self) -> usize {
        self.same_true.len() + self.same_false.len() + self.different.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TaskId, Agreement)> {
        self.same_true
            .iter()
            .map(|t| (t, Agreement::SameTrue))
            .chain(self.same_false.iter().map(|t| (t, Agreement::SameFalse)))
            .chain(self.different.iter().map(|t| (t, Agreement::Different)))
    }
}

/// Two answers agree when the submitted value sets are identical; they agree
/// on the truth when that set also contains the current truth.
pub(crate) fn classify(a: &[usize], b: &[usize], truth: Option<usize>) -> Agreement {
    if a != b {
        Agreement::Different
    } else if truth.is_some_and(|t| a.contains(&t)) {
        Agreement::SameTrue
    } else {
        Agreement::SameFalse
    }
}

pub fn partition_shared_tasks(
    inst: &Instance,
    a: &WorkerId,
    b: &WorkerId,
    truth: &BTreeMap<TaskId, String>,
) -> Result<SharedTaskPartition> {
    let obs = Observations::build(inst)?;
    let (ia, ib) = (obs.worker_index(a)?, obs.worker_index(b)?);
    let truth = obs.truth_indices(truth);
    let mut out = SharedTaskPartition::default();
    for t in 0..obs.n_tasks() {
        if let (Some(va), Some(vb)) = (&obs.answers[ia][t], &obs.answers[ib][t]) {
            let task = obs.tasks[t].clone();
            match classify(va, vb, truth[t]) {
                Agreement::SameTrue => out.same_true.insert(task),
                Agreement::SameFalse => out.same_false.insert(task),
                Agreement::Different => out.different.insert(task),
            };
        }
    }
    Ok(out)
}

fn check_open_unit(what: &'static str, a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: a,
            range: "(0, 1)",
        })
    }
}

/// Probability that two independent workers both give the true value.
pub fn prob_same_true(a: f64, b: f64) -> Result<f64> {
    check_open_unit("accuracy", a)?;
    check_open_unit("accuracy", b)?;
    Ok(a * b)
}

/// Probability that two independent workers give the same false value.
pub fn prob_same_false(a: f64, b: f64, false_values: &FalseValueModel) -> Result<f64> {
    check_open_unit("accuracy", a)?;
    check_open_unit("accuracy", b)?;
    Ok((1.0 - a) * (1.0 - b) * false_values.collision())
}

pub fn prob_different(same_true: f64, same_false: f64) -> Result<f64> {
    let d = 1.0 - same_true - same_false;
    if d < -1e-12 {
        return Err(Error::Inconsistent(format!(
            "P_s + P_f = {} exceeds 1",
            same_true + same_false
        )));
    }
    Ok(d.max(0.0))
}

/// Per-task agreement probabilities of an independent pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTaskProbs {
    pub same_true: f64,
    pub same_false: f64,
    pub different: f64,
}

impl PairTaskProbs {
    pub fn new(a: f64, b: f64, false_values: &FalseValueModel) -> Result<Self> {
        let same_true = prob_same_true(a, b)?;
        let same_false = prob_same_false(a, b, false_values)?;
        Ok(Self {
            same_true,
            same_false,
            different: prob_different(same_true, same_false)?,
        })
    }

    fn from_clamped(a: f64, b: f64, collision: f64) -> Self {
        let same_true = a * b;
        let same_false = (1.0 - a) * (1.0 - b) * collision;
        Self {
            same_true,
            same_false,
            different: (1.0 - same_true - same_false).max(0.0),
        }
    }
}

fn lookup<'a, T>(map: &'a BTreeMap<TaskId, T>, task: &TaskId) -> Result<&'a T> {
    map.get(task).ok_or_else(|| Error::UnknownTask(task.clone()))
}

/// `ln P(D | i ⊥ i')` over the shared tasks.
pub fn likelihood_independent(
    partition: &SharedTaskPartition,
    probs: &BTreeMap<TaskId, PairTaskProbs>,
) -> Result<f64> {
    partition.iter().try_fold(0.0, |acc, (task, kind)| {
        let p = lookup(probs, task)?;
        Ok(acc + independent_log_term(kind, p))
    })
}

/// `ln P(D | i → i')`: `source_accuracy` holds the accuracy of the worker
/// being copied from, so the result depends on the direction.
pub fn likelihood_dependent(
    partition: &SharedTaskPartition,
    probs: &BTreeMap<TaskId, PairTaskProbs>,
    source_accuracy: &BTreeMap<TaskId, f64>,
    copy_prob: f64,
) -> Result<f64> {
    partition.iter().try_fold(0.0, |acc, (task, kind)| {
        let p = lookup(probs, task)?;
        let src = *lookup(source_accuracy, task)?;
        Ok(acc + dependent_log_term(kind, p, src, copy_prob))
    })
}

fn independent_log_term(kind: Agreement, p: &PairTaskProbs) -> f64 {
    match kind {
        Agreement::SameTrue => p.same_true.ln(),
        Agreement::SameFalse => p.same_false.ln(),
        Agreement::Different => p.different.ln(),
    }
}

fn dependent_log_term(kind: Agreement, p: &PairTaskProbs, source: f64, r: f64) -> f64 {
    match kind {
        Agreement::SameTrue => (source * r + p.same_true * (1.0 - r)).ln(),
        Agreement::SameFalse => ((1.0 - source) * r + p.same_false * (1.0 - r)).ln(),
        Agreement::Different => (p.different * (1.0 - r)).ln(),
    }
}

/// Log-likelihood of a pair's shared data under the three hypotheses.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct PairLogLikelihood {
    pub independent: f64,
    /// First worker copies from the second.
    pub forward: f64,
    /// Second worker copies from the first.
    pub backward: f64,
}

impl PairLogLikelihood {
    fn add(&mut self, kind: Agreement, a: f64, b: f64, collision: f64, r: f64) {
        let p = PairTaskProbs::from_clamped(a, b, collision);
        self.independent += independent_log_term(kind, &p);
        self.forward += dependent_log_term(kind, &p, b, r);
        self.backward += dependent_log_term(kind, &p, a, r);
    }
}

/// Posterior over the three hypotheses for an ordered pair `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairPosterior {
    /// `P(a → b | D)`.
    pub forward: f64,
    /// `P(b → a | D)`.
    pub backward: f64,
    pub independent: f64,
}

impl PairPosterior {
    #[cfg(test)]
    fn prior(alpha: f64, mode: PriorMode) -> Self {
        match mode {
            PriorMode::ThreeWay => Self {
                forward: alpha / 2.0,
                backward: alpha / 2.0,
                independent: 1.0 - alpha,
            },
            PriorMode::TwoHypothesis => Self {
                forward: alpha,
                backward: alpha,
                independent: 1.0 - alpha,
            },
        }
    }

    pub(crate) fn from_log_likelihood(ll: PairLogLikelihood, alpha: f64, mode: PriorMode) -> Self {
        if alpha == 0.0 {
            return Self {
                forward: 0.0,
                backward: 0.0,
                independent: 1.0,
            };
        }
        match mode {
            PriorMode::ThreeWay => {
                let half = (alpha / 2.0).ln();
                let logs = [
                    half + ll.forward,
                    half + ll.backward,
                    (1.0 - alpha).ln() + ll.independent,
                ];
                let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w = logs.map(|l| (l - max).exp());
                let z: f64 = w.iter().sum();
                Self {
                    forward: w[0] / z,
                    backward: w[1] / z,
                    independent: w[2] / z,
                }
            }
            PriorMode::TwoHypothesis => {
                let odds = |dep: f64| {
                    let x = alpha.ln() + dep - (1.0 - alpha).ln() - ll.independent;
                    if x == f64::NEG_INFINITY {
                        0.0
                    } else {
                        1.0 / (1.0 + (-x).exp())
                    }
                };
                let (forward, backward) = (odds(ll.forward), odds(ll.backward));
                Self {
                    forward,
                    backward,
                    independent: 1.0 - forward.max(backward),
                }
            }
        }
    }
}

/// Dense worker-by-task accuracy table addressed by [`Observations`] indices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseAccuracy {
    pub n_tasks: usize,
    pub data: Vec<f64>,
}

impl DenseAccuracy {
    pub fn filled(n_workers: usize, n_tasks: usize, value: f64) -> Self {
        Self {
            n_tasks,
            data: vec![value; n_workers * n_tasks],
        }
    }

    pub fn from_matrix(obs: &Observations, acc: &AccuracyMatrix) -> Self {
        let mut out = Self::filled(obs.n_workers(), obs.n_tasks(), 0.0);
        for (w, wid) in obs.workers.iter().enumerate() {
            for (t, tid) in obs.tasks.iter().enumerate() {
                out.set(w, t, acc.get(wid, tid));
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, w: usize, t: usize) -> f64 {
        self.data[w * self.n_tasks + t]
    }

    #[inline]
    pub fn set(&mut self, w: usize, t: usize, a: f64) {
        self.data[w * self.n_tasks + t] = a;
    }
}

pub(crate) fn pair_log_likelihood(
    obs: &Observations,
    truth: &[Option<usize>],
    acc: &DenseAccuracy,
    a: usize,
    b: usize,
    copy_prob: f64,
) -> PairLogLikelihood {
    let mut ll = PairLogLikelihood::default();
    for (t, (ans_a, ans_b)) in obs.answers[a].iter().zip(&obs.answers[b]).enumerate() {
        if let (Some(va), Some(vb)) = (ans_a, ans_b) {
            ll.add(
                classify(va, vb, truth[t]),
                clamp_accuracy(acc.get(a, t)),
                clamp_accuracy(acc.get(b, t)),
                obs.per_task[t].collision,
                copy_prob,
            );
        }
    }
    ll
}

/// Posterior of one pair of workers given the current truth and accuracies.
pub fn dependence_posterior(
    inst: &Instance,
    a: &WorkerId,
    b: &WorkerId,
    truth: &BTreeMap<TaskId, String>,
    accuracy: &AccuracyMatrix,
    params: &Params,
) -> Result<PairPosterior> {
    params.validate()?;
    let obs = Observations::build(inst)?;
    let (ia, ib) = (obs.worker_index(a)?, obs.worker_index(b)?);
    let truth = obs.truth_indices(truth);
    let acc = DenseAccuracy::from_matrix(&obs, accuracy);
    let ll = pair_log_likelihood(&obs, &truth, &acc, ia, ib, params.copy_prob);
    Ok(PairPosterior::from_log_likelihood(ll, params.alpha, params.prior_mode))
}

/// All pairwise posteriors, index-addressed. `directed[i * n + j]` is
/// `P(i → j | D)`; the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PosteriorMatrix {
    pub n: usize,
    pub directed: Vec<f64>,
    pub independent: Vec<f64>,
}

impl PosteriorMatrix {
    #[inline]
    pub fn directed(&self, from: usize, to: usize) -> f64 {
        self.directed[from * self.n + to]
    }

    #[inline]
    pub fn symmetric(&self, a: usize, b: usize) -> f64 {
        self.directed(a, b) + self.directed(b, a)
    }

    pub fn zeros(n: usize) -> Self {
        let mut independent = vec![1.0; n * n];
        for i in 0..n {
            independent[i * n + i] = 0.0;
        }
        Self {
            n,
            directed: vec![0.0; n * n],
            independent,
        }
    }
}

pub(crate) fn all_posteriors(
    obs: &Observations,
    truth: &[Option<usize>],
    acc: &DenseAccuracy,
    params: &Params,
) -> PosteriorMatrix {
    let n = obs.n_workers();
    let rows: Vec<Vec<(usize, PairPosterior)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (a + 1..n)
                .map(|b| {
                    let ll = pair_log_likelihood(obs, truth, acc, a, b, params.copy_prob);
                    (
                        b,
                        PairPosterior::from_log_likelihood(ll, params.alpha, params.prior_mode),
                    )
                })
                .collect()
        })
        .collect();
    let mut m = PosteriorMatrix::zeros(n);
    for (a, row) in rows.into_iter().enumerate() {
        for (b, p) in row {
            m.directed[a * n + b] = p.forward;
            m.directed[b * n + a] = p.backward;
            m.independent[a * n + b] = p.independent;
            m.independent[b * n + a] = p.independent;
        }
    }
    m
}

/// Directed copy posteriors for every ordered pair of workers.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencePosteriors {
    workers: Vec<WorkerId>,
    matrix: PosteriorMatrix,
}

impl DependencePosteriors {
    pub(crate) fn from_matrix(workers: Vec<WorkerId>, matrix: PosteriorMatrix) -> Self {
        Self { workers, matrix }
    }

    /// Builds posteriors from an explicit directed function; the independent
    /// share of each pair is whatever probability mass is left over.
    pub fn from_fn(mut workers: Vec<WorkerId>, f: impl Fn(&WorkerId, &WorkerId) -> f64) -> Self {
        workers.sort();
        workers.dedup();
        let n = workers.len();
        let mut m = PosteriorMatrix::zeros(n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    m.directed[a * n + b] = f(&workers[a], &workers[b]);
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    m.independent[a * n + b] = (1.0 - m.symmetric(a, b)).max(0.0);
                }
            }
        }
        Self { workers, matrix: m }
    }

    pub(crate) fn matrix(&self) -> &PosteriorMatrix {
        &self.matrix
    }

    pub fn workers(&self) -> &[WorkerId] {
        &self.workers
    }

    pub(crate) fn index(&self, id: &WorkerId) -> Option<usize> {
        self.workers.binary_search(id).ok()
    }

    /// `P(from → to | D)`.
    pub fn directed(&self, from: &WorkerId, to: &WorkerId) -> Option<f64> {
        Some(self.matrix.directed(self.index(from)?, self.index(to)?))
    }

    pub fn independent(&self, a: &WorkerId, b: &WorkerId) -> Option<f64> {
        let (a, b) = (self.index(a)?, self.index(b)?);
        (a != b).then(|| self.matrix.independent[a * self.matrix.n + b])
    }
}

impl Serialize for DependencePosteriors {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Directed<'a> {
            from: &'a WorkerId,
            to: &'a WorkerId,
            prob: f64,
        }
        #[derive(Serialize)]
        struct Independent<'a> {
            a: &'a WorkerId,
            b: &'a WorkerId,
            prob: f64,
        }
        let n = self.workers.len();
        let mut directed = Vec::new();
        let mut independent = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                directed.push(Directed {
                    from: &self.workers[a],
                    to: &self.workers[b],
                    prob: self.matrix.directed(a, b),
                });
                if a < b {
                    independent.push(Independent {
                        a: &self.workers[a],
                        b: &self.workers[b],
                        prob: self.matrix.independent[a * n + b],
                    });
                }
            }
        }
        let mut s = serializer.serialize_struct("DependencePosteriors", 2)?;
        s.serialize_field("directed", &directed)?;
        s.serialize_field("independent", &independent)?;
        s.end()
    }
}

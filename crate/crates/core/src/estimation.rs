//! Value truth probabilities, worker accuracies, support counts and the
//! per-task truth pick.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dependence::clamp_accuracy;
use crate::error::{Error, Result};
use crate::model::{AccuracyMatrix, Instance, Observations, TaskId, TaskObservations, WorkerId};

pub type SimilarityFn = Arc<dyn Fn(&str, &str) -> f64 + Send + Sync>;

/// Similarity between two value tokens, in `[0, 1]`.
#[derive(Clone, Default)]
pub enum Similarity {
    /// 1 for identical tokens, 0 otherwise.
    #[default]
    Exact,
    /// [`default_similarity`].
    Edit,
    Custom(SimilarityFn),
}

impl Similarity {
    pub fn eval(&self, a: &str, b: &str) -> f64 {
        match self {
            Self::Exact => f64::from(u8::from(a == b)),
            Self::Edit => default_similarity(a, b),
            Self::Custom(f) => f(a, b),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Edit => "edit",
            Self::Custom(_) => "custom",
        }
    }

    /// `"exact"` or `"edit"`; custom functions can only be supplied in code.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "exact" => Ok(Self::Exact),
            "edit" => Ok(Self::Edit),
            other => Err(Error::InvalidParams(format!(
                "unknown similarity `{other}` (expected `exact` or `edit`; `custom` needs a function)"
            ))),
        }
    }
}

impl fmt::Debug for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Similarity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Similarity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Self::from_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Case-insensitive normalized edit similarity:
/// `1 - levenshtein(a, b) / max(|a|, |b|)`.
pub fn default_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&a.to_lowercase(), &b.to_lowercase())
}

/// Log of the unnormalized truth weight of a value: every provider
/// contributes `ln(A / ((1 - A)·h_v))`.
fn log_weight(providers: &[usize], false_weight: f64, accuracy: impl Fn(usize) -> f64) -> f64 {
    providers
        .iter()
        .map(|&w| {
            let a = clamp_accuracy(accuracy(w));
            (a / ((1.0 - a) * false_weight)).ln()
        })
        .sum()
}

/// Normalized truth probability of every observed value of a task.
pub(crate) fn truth_probs(task: &TaskObservations, accuracy: impl Fn(usize) -> f64) -> Vec<f64> {
    let logs: Vec<f64> = task
        .providers
        .iter()
        .zip(&task.false_weight)
        .map(|(p, &h)| log_weight(p, h, &accuracy))
        .collect();
    softmax(&logs)
}

fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Probability that each observed value of `task` is the truth, given the
/// current accuracies.
pub fn value_truth_prob(
    inst: &Instance,
    task: &TaskId,
    accuracy: &AccuracyMatrix,
) -> Result<BTreeMap<String, f64>> {
    let obs = Observations::build(inst)?;
    let t = obs
        .tasks
        .iter()
        .position(|x| x == task)
        .ok_or_else(|| Error::UnknownTask(task.clone()))?;
    let task_obs = &obs.per_task[t];
    if task_obs.values.is_empty() {
        return Err(Error::NoObservations(task.clone()));
    }
    let probs = truth_probs(task_obs, |w| accuracy.get(&obs.workers[w], task));
    Ok(task_obs.values.iter().cloned().zip(probs).collect())
}

/// Mean truth probability of the values `worker` submitted for `task`.
pub fn worker_accuracy(
    inst: &Instance,
    worker: &WorkerId,
    task: &TaskId,
    probs: &BTreeMap<String, f64>,
) -> Result<f64> {
    let submitted = inst
        .worker(worker)
        .ok_or_else(|| Error::UnknownWorker(worker.clone()))?
        .values
        .get(task)
        .filter(|vs| !vs.is_empty())
        .ok_or_else(|| Error::UndefinedAccuracy {
            worker: worker.clone(),
            task: task.clone(),
        })?;
    let total: f64 = submitted
        .iter()
        .map(|v| probs.get(v).copied().unwrap_or(0.0))
        .sum();
    Ok(total / submitted.len() as f64)
}

pub(crate) fn mean_prob(values: &[usize], probs: &[f64]) -> f64 {
    values.iter().map(|&v| probs[v]).sum::<f64>() / values.len() as f64
}

/// Raw and similarity-adjusted support of every value of one task. Values
/// are kept in ascending token order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportTable {
    pub values: Vec<String>,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
}

impl SupportTable {
    pub(crate) fn from_raw(values: Vec<String>, raw: Vec<f64>, sim: Option<&[Vec<f64>]>, rho: f64) -> Self {
        let adjusted = match sim {
            Some(sim) if rho > 0.0 => adjust(&raw, sim, rho),
            _ => raw.clone(),
        };
        Self { values, raw, adjusted }
    }

    pub fn get(&self, value: &str) -> Option<(f64, f64)> {
        let i = self.values.binary_search_by(|v| v.as_str().cmp(value)).ok()?;
        Some((self.raw[i], self.adjusted[i]))
    }
}

pub(crate) fn adjust(raw: &[f64], sim: &[Vec<f64>], rho: f64) -> Vec<f64> {
    (0..raw.len())
        .map(|v| {
            let borrowed: f64 = (0..raw.len())
                .filter(|&u| u != v)
                .map(|u| raw[u] * sim[v][u])
                .sum();
            raw[v] + rho * borrowed
        })
        .collect()
}

pub(crate) fn similarity_matrix(values: &[String], sim: &Similarity) -> Vec<Vec<f64>> {
    values
        .iter()
        .map(|a| values.iter().map(|b| sim.eval(a, b)).collect())
        .collect()
}

/// Support counts from each value's providers, given as
/// `(accuracy, independence)` pairs.
pub fn support_counts(
    providers: &BTreeMap<String, Vec<(f64, f64)>>,
    sim: &Similarity,
    rho: f64,
) -> SupportTable {
    let values: Vec<String> = providers.keys().cloned().collect();
    let raw: Vec<f64> = providers
        .values()
        .map(|ps| ps.iter().map(|(a, i)| a * i).sum())
        .collect();
    let matrix = similarity_matrix(&values, sim);
    SupportTable::from_raw(values, raw, Some(&matrix), rho)
}

/// Index of the value with the largest adjusted support; ties go to the
/// smallest token.
pub(crate) fn argmax_support(adjusted: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in adjusted.iter().enumerate() {
        if best.is_none_or(|b| s > adjusted[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn pick_truth(table: &SupportTable) -> Option<&str> {
    argmax_support(&table.adjusted).map(|i| table.values[i].as_str())
}

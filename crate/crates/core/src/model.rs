//! Domain types shared by every algorithm: tasks, bids, instances, the
//! parameter bundle and the estimated outputs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Similarity;

/// Numeric-aware ordering: identifiers that parse as integers compare by
/// value and sort before non-numeric ones. Used for every worker tie-break.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                natural_cmp(&self.0, &other.0)
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }

        impl From<u64> for $name {
            fn from(id: u64) -> Self {
                Self(id.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Raw {
                    Text(String),
                    Number(u64),
                }
                Ok(match Raw::deserialize(deserializer)? {
                    Raw::Text(s) => Self(s),
                    Raw::Number(n) => Self(n.to_string()),
                })
            }
        }
    };
}

opaque_id!(
    /// Task identifier. Accepts JSON strings or non-negative integers.
    TaskId
);
opaque_id!(
    /// Worker identifier. Accepts JSON strings or non-negative integers;
    /// numeric ids order numerically, which is the order every tie-break uses.
    WorkerId
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: TaskId,
    /// Accuracy requirement: minimum total accuracy mass of the winners.
    pub theta: f64,
    /// Number of distinct false values in the answer domain. When absent it
    /// is taken as `max(1, |observed values| - 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_false: Option<u32>,
    /// Popularity of each false value among false-value providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub false_dist: Option<BTreeMap<String, f64>>,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<TaskId>, theta: f64) -> Self {
        Self {
            task_id: task_id.into(),
            theta,
            num_false: None,
            false_dist: None,
        }
    }

    /// Resolves the false-value model given how many distinct values were
    /// observed for this task.
    pub fn false_model(&self, observed: usize) -> FalseValueModel {
        let fallback = (observed.saturating_sub(1)).max(1) as u32;
        match &self.false_dist {
            Some(dist) => FalseValueModel::Histogram {
                num_false: self.num_false.unwrap_or(dist.len().max(1) as u32),
                dist: dist.clone(),
            },
            None => FalseValueModel::Uniform {
                num_false: self.num_false.unwrap_or(fallback),
            },
        }
    }
}

/// How an independent worker picks among the false values of a task.
#[derive(Debug, Clone, PartialEq)]
pub enum FalseValueModel {
    Uniform {
        num_false: u32,
    },
    Histogram {
        num_false: u32,
        dist: BTreeMap<String, f64>,
    },
}

impl FalseValueModel {
    /// Probability that two independent false-value providers pick the same
    /// false value: `1/num` when uniform, `Σ h_v²` otherwise.
    pub fn collision(&self) -> f64 {
        match self {
            Self::Uniform { num_false } => 1.0 / f64::from(*num_false),
            Self::Histogram { dist, .. } => dist.values().map(|h| h * h).sum(),
        }
    }

    /// Probability `h_v` that a false-value provider emits `value`. Values
    /// missing from a histogram fall back to the uniform share.
    pub fn weight(&self, value: &str) -> f64 {
        match self {
            Self::Uniform { num_false } => 1.0 / f64::from(*num_false),
            Self::Histogram { num_false, dist } => dist
                .get(value)
                .copied()
                .unwrap_or(1.0 / f64::from(*num_false)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerBid {
    pub worker_id: WorkerId,
    pub task_set: BTreeSet<TaskId>,
    pub bid_price: f64,
    /// Private cost. Only the simulator knows it; mechanisms read `bid_price`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_cost: Option<f64>,
    #[serde(default)]
    pub values: BTreeMap<TaskId, Vec<String>>,
}

impl WorkerBid {
    /// Cost used for social-cost accounting: the true cost when known.
    pub fn cost(&self) -> f64 {
        self.true_cost.unwrap_or(self.bid_price)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub tasks: Vec<TaskSpec>,
    pub workers: Vec<WorkerBid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<BTreeMap<TaskId, String>>,
}

impl Instance {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| &t.task_id == id)
    }

    pub fn worker(&self, id: &WorkerId) -> Option<&WorkerBid> {
        self.workers.iter().find(|w| &w.worker_id == id)
    }

    pub fn worker_mut(&mut self, id: &WorkerId) -> Option<&mut WorkerBid> {
        self.workers.iter_mut().find(|w| &w.worker_id == id)
    }

    /// Returns `Err(Error::Validation)` listing every violation.
    pub fn validated(&self) -> Result<()> {
        let violations = validate_instance(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(violations))
        }
    }
}

/// One broken invariant, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    DuplicateTask(TaskId),
    DuplicateWorker(WorkerId),
    Task { task: TaskId, reason: String },
    Worker { worker: WorkerId, reason: String },
    UnknownTaskReference { worker: WorkerId, task: TaskId },
    GroundTruthUnknownTask(TaskId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateTask(t) => write!(f, "task `{t}` is declared more than once"),
            Self::DuplicateWorker(w) => write!(f, "worker `{w}` is declared more than once"),
            Self::Task { task, reason } => write!(f, "task `{task}`: {reason}"),
            Self::Worker { worker, reason } => write!(f, "worker `{worker}`: {reason}"),
            Self::UnknownTaskReference { worker, task } => {
                write!(f, "worker `{worker}` references unknown task `{task}`")
            }
            Self::GroundTruthUnknownTask(t) => {
                write!(f, "ground truth names unknown task `{t}`")
            }
        }
    }
}

/// Checks every structural invariant of an instance. An empty result means
/// the instance is well formed.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut task_ids = HashSet::new();
    for task in &inst.tasks {
        if !task_ids.insert(&task.task_id) {
            out.push(Violation::DuplicateTask(task.task_id.clone()));
        }
        let bad = |reason: String| Violation::Task {
            task: task.task_id.clone(),
            reason,
        };
        if !(task.theta.is_finite() && task.theta >= 0.0) {
            out.push(bad(format!("theta {} must be a nonnegative number", task.theta)));
        }
        if task.num_false == Some(0) {
            out.push(bad("num_false must be at least 1".into()));
        }
        if let Some(dist) = &task.false_dist {
            if let Some((v, h)) = dist.iter().find(|(_, h)| !(**h > 0.0 && **h <= 1.0)) {
                out.push(bad(format!("false_dist[{v}] = {h} is outside (0, 1]")));
            }
            let total: f64 = dist.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                out.push(bad(format!("false_dist sums to {total}, expected 1")));
            }
        }
    }

    let mut worker_ids = HashSet::new();
    for worker in &inst.workers {
        if !worker_ids.insert(&worker.worker_id) {
            out.push(Violation::DuplicateWorker(worker.worker_id.clone()));
        }
        let bad = |reason: String| Violation::Worker {
            worker: worker.worker_id.clone(),
            reason,
        };
        if !(worker.bid_price.is_finite() && worker.bid_price >= 0.0) {
            out.push(bad(format!("bid_price {} must be nonnegative", worker.bid_price)));
        }
        if let Some(c) = worker.true_cost {
            if !(c.is_finite() && c >= 0.0) {
                out.push(bad(format!("true_cost {c} must be nonnegative")));
            }
        }
        for task in &worker.task_set {
            if !task_ids.contains(task) {
                out.push(Violation::UnknownTaskReference {
                    worker: worker.worker_id.clone(),
                    task: task.clone(),
                });
            }
        }
        for (task, values) in &worker.values {
            if !worker.task_set.contains(task) {
                if task_ids.contains(task) {
                    out.push(bad(format!("submitted values for task `{task}` outside its task set")));
                } else {
                    out.push(Violation::UnknownTaskReference {
                        worker: worker.worker_id.clone(),
                        task: task.clone(),
                    });
                }
            }
            if values.is_empty() {
                out.push(bad(format!("empty value list for task `{task}`")));
            }
            if values.iter().any(String::is_empty) {
                out.push(bad(format!("empty value token for task `{task}`")));
            }
        }
    }

    if let Some(gt) = &inst.ground_truth {
        for task in gt.keys() {
            if !task_ids.contains(task) {
                out.push(Violation::GroundTruthUnknownTask(task.clone()));
            }
        }
    }
    out
}

/// Distinct values submitted for one task and who submitted each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObservedValues {
    pub values: BTreeSet<String>,
    pub providers: BTreeMap<String, BTreeSet<WorkerId>>,
}

pub fn observed_values(inst: &Instance, task: &TaskId) -> Result<ObservedValues> {
    if inst.task(task).is_none() {
        return Err(Error::UnknownTask(task.clone()));
    }
    let mut out = ObservedValues::default();
    for worker in &inst.workers {
        for value in worker.values.get(task).into_iter().flatten() {
            out.values.insert(value.clone());
            out.providers
                .entry(value.clone())
                .or_default()
                .insert(worker.worker_id.clone());
        }
    }
    Ok(out)
}

/// Observation matrix as CSV: one row per worker, one column per task,
/// multiple submissions joined with `|`.
pub fn observation_matrix_csv(inst: &Instance) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["worker_id".to_owned()];
    header.extend(inst.tasks.iter().map(|t| t.task_id.to_string()));
    wtr.write_record(&header)?;
    let mut workers: Vec<&WorkerBid> = inst.workers.iter().collect();
    workers.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
    for w in workers {
        let mut row = vec![w.worker_id.to_string()];
        row.extend(inst.tasks.iter().map(|t| {
            w.values
                .get(&t.task_id)
                .map(|vs| vs.join("|"))
                .unwrap_or_default()
        }));
        wtr.write_record(&row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// How the directed copy posteriors are normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// Three mutually exclusive hypotheses with priors `(α/2, α/2, 1-α)`.
    #[default]
    ThreeWay,
    /// Each direction normalized against independence alone with prior `α`.
    TwoHypothesis,
}

/// Which provider seeds the greedy ordering of a value's providers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstProvider {
    /// Endpoint of the most dependent provider pair.
    #[default]
    MostDependent,
    /// Endpoint of the least dependent provider pair.
    LeastDependent,
}

/// What a worker's accuracy averages over in each round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyScope {
    /// `A_i^j` is the mean truth probability of the worker's values on task `j`.
    #[default]
    PerTask,
    /// One accuracy per worker: the mean truth probability of all its values,
    /// used for every task it answered.
    Pooled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    /// Prior probability that a pair of workers is dependent.
    pub alpha: f64,
    /// Accuracy assigned to every worker before the first round.
    pub init_accuracy: f64,
    /// Probability that a copier's value was copied.
    pub copy_prob: f64,
    pub max_iters: usize,
    /// Weight of similar values in the support counts.
    pub rho: f64,
    /// Prior belief that a value is true. It cancels in the normalization and
    /// is kept only so runs record it.
    pub beta: f64,
    pub similarity: Similarity,
    pub prior_mode: PriorMode,
    pub first_provider: FirstProvider,
    pub accuracy_scope: AccuracyScope,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            init_accuracy: 0.5,
            copy_prob: 0.4,
            max_iters: 100,
            rho: 0.0,
            beta: 1.0,
            similarity: Similarity::Exact,
            prior_mode: PriorMode::ThreeWay,
            first_provider: FirstProvider::MostDependent,
            accuracy_scope: AccuracyScope::PerTask,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(0.0..1.0).contains(&self.alpha) {
            return fail(format!("alpha {} must lie in [0, 1)", self.alpha));
        }
        if !(self.init_accuracy > 0.0 && self.init_accuracy < 1.0) {
            return fail(format!("init_accuracy {} must lie in (0, 1)", self.init_accuracy));
        }
        if !(0.0..=1.0).contains(&self.copy_prob) {
            return fail(format!("copy_prob {} must lie in [0, 1]", self.copy_prob));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail(format!("rho {} must lie in [0, 1]", self.rho));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail(format!("beta {} must be positive", self.beta));
        }
        Ok(())
    }
}

/// Per-worker per-task accuracy. Pairs that are not stored read as zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyMatrix {
    entries: BTreeMap<WorkerId, BTreeMap<TaskId, f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every `(worker, task)` with `task ∈ T_i` set to `value`.
    pub fn uniform(inst: &Instance, value: f64) -> Self {
        let mut m = Self::new();
        for w in &inst.workers {
            for t in &w.task_set {
                m.set(w.worker_id.clone(), t.clone(), value);
            }
        }
        m
    }

    pub fn get(&self, worker: &WorkerId, task: &TaskId) -> f64 {
        self.entries
            .get(worker)
            .and_then(|row| row.get(task))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn contains(&self, worker: &WorkerId, task: &TaskId) -> bool {
        self.entries
            .get(worker)
            .is_some_and(|row| row.contains_key(task))
    }

    pub fn set(&mut self, worker: WorkerId, task: TaskId, value: f64) {
        self.entries.entry(worker).or_default().insert(task, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WorkerId, &TaskId, f64)> {
        self.entries
            .iter()
            .flat_map(|(w, row)| row.iter().map(move |(t, a)| (w, t, *a)))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Estimated truth per task plus the probability of every observed value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub values: BTreeMap<TaskId, String>,
    pub probs: BTreeMap<TaskId, BTreeMap<String, f64>>,
}

/// Dense, index-addressed view of an instance used by the algorithms.
///
/// Workers are sorted by id, so "smallest index" and "smallest worker id"
/// coincide. Tasks keep instance order; values of a task are sorted.
#[derive(Debug, Clone)]
pub(crate) struct Observations {
    pub workers: Vec<WorkerId>,
    pub tasks: Vec<TaskId>,
    pub per_task: Vec<TaskObservations>,
    /// `answers[w][t]`: sorted value indices worker `w` submitted for task `t`.
    pub answers: Vec<Vec<Option<Vec<usize>>>>,
}

#[derive(Debug, Clone)]
pub(crate) struct TaskObservations {
    pub values: Vec<String>,
    /// Sorted worker indices per value index.
    pub providers: Vec<Vec<usize>>,
    pub collision: f64,
    /// `h_v` for each observed value.
    pub false_weight: Vec<f64>,
}

impl Observations {
    pub fn build(inst: &Instance) -> Result<Self> {
        inst.validated()?;
        let mut order: Vec<usize> = (0..inst.workers.len()).collect();
        order.sort_by(|&a, &b| inst.workers[a].worker_id.cmp(&inst.workers[b].worker_id));
        let workers: Vec<WorkerId> = order
            .iter()
            .map(|&i| inst.workers[i].worker_id.clone())
            .collect();
        let tasks: Vec<TaskId> = inst.tasks.iter().map(|t| t.task_id.clone()).collect();
        let task_index: HashMap<&TaskId, usize> =
            tasks.iter().enumerate().map(|(i, t)| (t, i)).collect();

        let mut per_task = Vec::with_capacity(tasks.len());
        let mut value_index: Vec<HashMap<String, usize>> = Vec::with_capacity(tasks.len());
        for spec in &inst.tasks {
            let mut values: BTreeSet<&str> = BTreeSet::new();
            for w in &inst.workers {
                for v in w.values.get(&spec.task_id).into_iter().flatten() {
                    values.insert(v.as_str());
                }
            }
            let values: Vec<String> = values.into_iter().map(str::to_owned).collect();
            let model = spec.false_model(values.len());
            per_task.push(TaskObservations {
                false_weight: values.iter().map(|v| model.weight(v)).collect(),
                collision: model.collision(),
                providers: vec![Vec::new(); values.len()],
                values,
            });
            value_index.push(HashMap::new());
        }
        for (t, obs) in per_task.iter().enumerate() {
            value_index[t] = obs
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), i))
                .collect();
        }

        let mut answers = vec![vec![None; tasks.len()]; workers.len()];
        for (w, &src) in order.iter().enumerate() {
            for (task, values) in &inst.workers[src].values {
                let t = task_index[task];
                let mut idx: Vec<usize> = values.iter().map(|v| value_index[t][v.as_str()]).collect();
                idx.sort_unstable();
                idx.dedup();
                for &v in &idx {
                    per_task[t].providers[v].push(w);
                }
                answers[w][t] = Some(idx);
            }
        }
        Ok(Self {
            workers,
            tasks,
            per_task,
            answers,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn worker_index(&self, id: &WorkerId) -> Result<usize> {
        self.workers
            .binary_search(id)
            .map_err(|_| Error::UnknownWorker(id.clone()))
    }

    pub fn require_observed(&self) -> Result<()> {
        match self.per_task.iter().position(|t| t.values.is_empty()) {
            Some(t) => Err(Error::NoObservations(self.tasks[t].clone())),
            None => Ok(()),
        }
    }

    /// Truth vector (value index per task) from a map of value tokens.
    pub fn truth_indices(&self, truth: &BTreeMap<TaskId, String>) -> Vec<Option<usize>> {
        self.tasks
            .iter()
            .zip(&self.per_task)
            .map(|(t, obs)| {
                truth
                    .get(t)
                    .and_then(|v| obs.values.binary_search(v).ok())
            })
            .collect()
    }
}

use thiserror::Error;

use crate::model::{TaskId, Violation, WorkerId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid generator or sweep configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown task `{0}`")]
    UnknownTask(TaskId),

    #[error("unknown worker `{0}`")]
    UnknownWorker(WorkerId),

    #[error("{what} = {value} is outside {range}")]
    Domain {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("task `{0}` has no observations")]
    NoObservations(TaskId),

    #[error("worker `{worker}` submitted no value for task `{task}`")]
    UndefinedAccuracy { worker: WorkerId, task: TaskId },

    #[error("internal consistency violated: {0}")]
    Inconsistent(String),

    #[error("task `{task}` value `{value}` has {providers} providers; enumeration is capped at {limit}")]
    EnumerationTooLarge {
        task: TaskId,
        value: String,
        providers: usize,
        limit: usize,
    },

    #[error("accuracy requirement cannot be covered for tasks: {}", join(.0))]
    InfeasibleCoverage(Vec<TaskId>),

    #[error("removing winner `{0}` leaves the remaining workers unable to cover every task")]
    InsufficientCompetition(WorkerId),

    #[error("exhaustive search over {workers} workers exceeds the limit of {limit}")]
    OracleTooLarge { workers: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

//! Synthetic workloads, metrics and experiment plumbing.

pub mod experiment;
pub mod fixtures;
pub mod generate;
pub mod probe;

pub use experiment::{run_experiment, Algorithm, MetricsRow, SummaryRow, SweepSpec};
pub use generate::{generate_instance, CostSource, GenConfig, Synthetic};
pub use probe::{truthfulness_probe, ProbeCurve, ProbePoint};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{TaskId, TruthEstimate};

/// Fraction of estimated tasks whose value matches the ground truth exactly.
/// An empty estimate has precision 1.
pub fn precision(estimate: &TruthEstimate, ground_truth: &BTreeMap<TaskId, String>) -> Result<f64> {
    if estimate.values.is_empty() {
        return Ok(1.0);
    }
    let mut hits = 0usize;
    for (task, value) in &estimate.values {
        let truth = ground_truth.get(task).ok_or_else(|| {
            Error::InvalidConfig(format!("ground truth does not cover task `{task}`"))
        })?;
        hits += usize::from(truth == value);
    }
    Ok(hits as f64 / estimate.values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_mv_with;
    use crate::estimation::Similarity;

    fn estimate(pairs: &[(&str, &str)]) -> TruthEstimate {
        TruthEstimate {
            values: pairs.iter().map(|(t, v)| ((*t).into(), v.to_string())).collect(),
            probs: BTreeMap::new(),
        }
    }

    #[test]
    fn precision_examples() {
        let gt: BTreeMap<TaskId, String> = [("a", "x"), ("b", "y"), ("c", "z"), ("d", "w")]
            .iter()
            .map(|(t, v)| ((*t).into(), v.to_string()))
            .collect();
        let same = estimate(&[("a", "x"), ("b", "y"), ("c", "z"), ("d", "w")]);
        assert_eq!(precision(&same, &gt).unwrap(), 1.0);
        let half = estimate(&[("a", "x"), ("b", "q"), ("c", "z"), ("d", "q")]);
        assert_eq!(precision(&half, &gt).unwrap(), 0.5);
        assert!(precision(&estimate(&[("e", "x")]), &gt).is_err());
    }

    #[test]
    fn table1_similarity_vote_precision() {
        let inst = fixtures::table1();
        let mv = run_mv_with(&inst, &Similarity::Edit, 0.5).unwrap();
        assert!((precision(&mv, inst.ground_truth.as_ref().unwrap()).unwrap() - 0.4).abs() < 1e-15);
    }
}

//! Small built-in instances.

use std::collections::BTreeMap;

use crate::model::{AccuracyMatrix, Instance, TaskSpec, TaskId, WorkerBid};

const TABLE1_TASKS: [&str; 5] = ["Stonebraker", "Dewitt", "Bernstein", "Carey", "Halevy"];

/// Five workers reporting researchers' affiliations. Worker 1 is always
/// right; workers 4 and 5 copy worker 3 with a few slips.
const TABLE1_ANSWERS: [[&str; 5]; 5] = [
    ["MIT", "MSR", "MSR", "UCI", "Google"],
    ["Berkeley", "MSR", "MSR", "AT&T", "Google"],
    ["MIT", "UWise", "MSR", "BEA", "UW"],
    ["MIT", "UWisc", "MSR", "BEA", "UW"],
    ["MS", "UWisc", "MSR", "BEA", "UW"],
];

/// The affiliation example with worker 1's answers as ground truth. Every
/// task requires accuracy 1; worker `i` bids `i`.
pub fn table1() -> Instance {
    let tasks: Vec<TaskSpec> = TABLE1_TASKS.iter().map(|t| TaskSpec::new(*t, 1.0)).collect();
    let workers = TABLE1_ANSWERS
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let id = (i as u64 + 1).into();
            WorkerBid {
                worker_id: id,
                task_set: TABLE1_TASKS.iter().map(|t| TaskId::from(*t)).collect(),
                bid_price: (i + 1) as f64,
                true_cost: Some((i + 1) as f64),
                values: TABLE1_TASKS
                    .iter()
                    .zip(row)
                    .map(|(t, v)| (TaskId::from(*t), vec![v.to_string()]))
                    .collect(),
            }
        })
        .collect();
    let ground_truth = TABLE1_TASKS
        .iter()
        .zip(TABLE1_ANSWERS[0])
        .map(|(t, v)| (TaskId::from(*t), v.to_string()))
        .collect();
    Instance {
        tasks,
        workers,
        ground_truth: Some(ground_truth),
    }
}

/// One task with requirement 1 and three bidders:
/// worker 1 (accuracy 0.6, bid 3), worker 2 (0.5, 2), worker 3 (0.5, 4).
pub fn auction_fixture() -> (Instance, AccuracyMatrix) {
    let bidders = [("1", 0.6, 3.0), ("2", 0.5, 2.0), ("3", 0.5, 4.0)];
    let mut acc = AccuracyMatrix::new();
    let workers = bidders
        .iter()
        .map(|&(id, a, bid)| {
            acc.set(id.into(), "t".into(), a);
            WorkerBid {
                worker_id: id.into(),
                task_set: ["t".into()].into(),
                bid_price: bid,
                true_cost: Some(bid),
                values: BTreeMap::new(),
            }
        })
        .collect();
    let inst = Instance {
        tasks: vec![TaskSpec::new("t", 1.0)],
        workers,
        ground_truth: None,
    };
    (inst, acc)
}

//! Bid-deviation probe: a worker's utility as its bid moves and everyone
//! else keeps bidding the same.

use serde::{Deserialize, Serialize};

use crate::auction::CoverageProblem;
use crate::error::{Error, Result};
use crate::model::WorkerId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    /// Bid as a multiple of the worker's true cost.
    pub factor: f64,
    pub bid: f64,
    pub won: bool,
    pub payment: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeCurve {
    pub worker: WorkerId,
    pub true_cost: f64,
    pub truthful_utility: f64,
    pub points: Vec<ProbePoint>,
    /// Bid of the first point reaching the highest utility.
    pub best_bid: f64,
}

impl ProbeCurve {
    /// Largest gain over truthful bidding anywhere on the grid; `≤ 0` when
    /// no deviation pays.
    pub fn max_gain(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.utility - self.truthful_utility)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `count` evenly spaced multipliers from `low` to `high` inclusive.
pub fn linear_grid(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..count)
            .map(|i| low + (high - low) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

fn point(problem: &CoverageProblem, w: usize, cost: f64, factor: f64) -> Result<ProbePoint> {
    let bid = factor * cost;
    let deviated = problem.with_bid(w, bid);
    let won = deviated.wins(w)?;
    let payment = if won { deviated.critical_payment(w)? } else { 0.0 };
    Ok(ProbePoint {
        factor,
        bid,
        won,
        payment,
        utility: if won { payment - cost } else { 0.0 },
    })
}

/// Utility of `worker` for every bid `factor · true_cost` in `grid`.
pub fn truthfulness_probe(problem: &CoverageProblem, worker: &WorkerId, grid: &[f64]) -> Result<ProbeCurve> {
    let w = problem.worker_index(worker)?;
    if let Some(f) = grid.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::InvalidConfig(format!("deviation factor {f} is not a nonnegative number")));
    }
    let cost = problem.costs[w];
    let truthful = point(problem, w, cost, 1.0)?;
    let points = grid
        .iter()
        .map(|&f| point(problem, w, cost, f))
        .collect::<Result<Vec<_>>>()?;
    let best_bid = points
        .iter()
        .fold(None::<&ProbePoint>, |best, p| match best {
            Some(b) if b.utility >= p.utility => Some(b),
            _ => Some(p),
        })
        .map_or(cost, |p| p.bid);
    Ok(ProbeCurve {
        worker: worker.clone(),
        true_cost: cost,
        truthful_utility: truthful.utility,
        points,
        best_bid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures::auction_fixture;

    fn problem() -> CoverageProblem {
        let (inst, acc) = auction_fixture();
        CoverageProblem::new(&inst, &acc).unwrap()
    }

    #[test]
    fn grid_spacing() {
        let g = linear_grid(0.5, 1.5, 21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[10], 1.0);
        assert_eq!(g[20], 1.5);
    }

    #[test]
    fn winner_gains_nothing_by_deviating() {
        let curve = truthfulness_probe(&problem(), &"1".into(), &linear_grid(0.5, 1.5, 21)).unwrap();
        assert_eq!(curve.truthful_utility, 1.0);
        assert!(curve.max_gain() <= 1e-9);
    }

    #[test]
    fn loser_has_zero_utility() {
        let curve = truthfulness_probe(&problem(), &"3".into(), &[1.0]).unwrap();
        assert_eq!(curve.truthful_utility, 0.0);
        assert!(!curve.points[0].won);
    }

    #[test]
    fn bidding_above_critical_payment_loses() {
        // Worker 1's critical payment is 4 with true cost 3.
        let curve = truthfulness_probe(&problem(), &"1".into(), &[4.2 / 3.0]).unwrap();
        assert!(!curve.points[0].won);
        assert_eq!(curve.points[0].utility, 0.0);
    }
}

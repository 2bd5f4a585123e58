//! Reverse auction over accuracy coverage.
//!
//! Winners are chosen greedily by effective accuracy unit cost (bid divided
//! by the residual requirement a worker would still cover) until every task's
//! requirement is met. Each winner is paid its critical value: the largest
//! bid at which it would still have been picked instead of one of the
//! workers chosen when it is absent.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AccuracyMatrix, Instance, TaskId, WorkerBid, WorkerId};

/// Residual requirements below this are treated as met.
const RESIDUAL_EPS: f64 = 1e-12;
/// Slack allowed when checking that total accuracy reaches a requirement.
const COVER_TOL: f64 = 1e-9;
/// Largest worker count the exhaustive optimum accepts.
pub const MAX_BRUTE_FORCE_WORKERS: usize = 20;

/// Dense view of the covering program: who covers which task with how much
/// accuracy, at what bid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageProblem {
    pub workers: Vec<WorkerId>,
    pub tasks: Vec<TaskId>,
    pub bids: Vec<f64>,
    pub costs: Vec<f64>,
    pub theta: Vec<f64>,
    /// `(task index, accuracy)` for every task in the worker's task set with
    /// positive accuracy.
    pub coverage: Vec<Vec<(usize, f64)>>,
    /// `|T_i|`, counting tasks with zero accuracy too.
    pub task_set_sizes: Vec<usize>,
}

impl CoverageProblem {
    pub fn new(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<Self> {
        inst.validated()?;
        let mut bids: Vec<&WorkerBid> = inst.workers.iter().collect();
        bids.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
        let tasks: Vec<TaskId> = inst.tasks.iter().map(|t| t.task_id.clone()).collect();
        let index: BTreeMap<&TaskId, usize> = tasks.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let coverage = bids
            .iter()
            .map(|w| {
                w.task_set
                    .iter()
                    .map(|t| (index[t], accuracy.get(&w.worker_id, t).clamp(0.0, 1.0)))
                    .filter(|&(_, a)| a > 0.0)
                    .collect()
            })
            .collect();
        Ok(Self {
            workers: bids.iter().map(|w| w.worker_id.clone()).collect(),
            bids: bids.iter().map(|w| w.bid_price).collect(),
            costs: bids.iter().map(|w| w.cost()).collect(),
            task_set_sizes: bids.iter().map(|w| w.task_set.len()).collect(),
            theta: inst.tasks.iter().map(|t| t.theta).collect(),
            tasks,
            coverage,
        })
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn worker_index(&self, id: &WorkerId) -> Result<usize> {
        self.workers
            .binary_search(id)
            .map_err(|_| Error::UnknownWorker(id.clone()))
    }

    /// Same problem with one worker's bid replaced.
    pub fn with_bid(&self, worker: usize, bid: f64) -> Self {
        let mut out = self.clone();
        out.bids[worker] = bid;
        out
    }

    /// `Σ_{t ∈ T_i} min(residual_t, A_i^t)`.
    pub fn marginal(&self, worker: usize, residual: &[f64]) -> f64 {
        self.coverage[worker]
            .iter()
            .map(|&(t, a)| residual[t].min(a))
            .sum()
    }

    /// Bid per unit of residual accuracy covered; `None` when the worker
    /// covers nothing that is still required.
    pub fn effective_unit_cost(&self, worker: usize, residual: &[f64]) -> Option<f64> {
        let m = self.marginal(worker, residual);
        (m > 0.0).then(|| self.bids[worker] / m)
    }

    fn apply(&self, worker: usize, residual: &mut [f64]) {
        for &(t, a) in &self.coverage[worker] {
            residual[t] -= residual[t].min(a);
            if residual[t] < RESIDUAL_EPS {
                residual[t] = 0.0;
            }
        }
    }

    fn initial_residual(&self) -> Vec<f64> {
        self.theta
            .iter()
            .map(|&t| if t < RESIDUAL_EPS { 0.0 } else { t })
            .collect()
    }

    fn uncovered(&self, residual: &[f64]) -> Vec<TaskId> {
        residual
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(t, _)| self.tasks[t].clone())
            .collect()
    }

    /// Tasks whose requirement exceeds the accuracy of all workers combined,
    /// optionally leaving one worker out.
    fn infeasible_tasks(&self, without: Option<usize>) -> Vec<TaskId> {
        let mut total = vec![0.0; self.theta.len()];
        for (w, cov) in self.coverage.iter().enumerate() {
            if Some(w) == without {
                continue;
            }
            for &(t, a) in cov {
                total[t] += a;
            }
        }
        (0..self.theta.len())
            .filter(|&t| total[t] < self.theta[t] - COVER_TOL)
            .map(|t| self.tasks[t].clone())
            .collect()
    }

    /// Runs greedy selection, calling `on_round(winner, residual_before)` for
    /// every pick. Returns `Err(uncovered)` if the pool runs dry.
    fn greedy(
        &self,
        without: Option<usize>,
        mut on_round: impl FnMut(usize, f64, &[f64]),
    ) -> std::result::Result<Vec<f64>, Vec<TaskId>> {
        let mut residual = self.initial_residual();
        let mut taken = vec![false; self.n_workers()];
        if let Some(w) = without {
            taken[w] = true;
        }
        while residual.iter().any(|&r| r > 0.0) {
            let mut best: Option<(usize, f64)> = None;
            for w in 0..self.n_workers() {
                if taken[w] {
                    continue;
                }
                if let Some(c) = self.effective_unit_cost(w, &residual) {
                    if best.is_none_or(|(_, b)| c < b) {
                        best = Some((w, c));
                    }
                }
            }
            let Some((w, cost)) = best else {
                return Err(self.uncovered(&residual));
            };
            on_round(w, cost, &residual);
            taken[w] = true;
            self.apply(w, &mut residual);
        }
        Ok(residual)
    }

    pub fn select(&self) -> Result<Selection> {
        let infeasible = self.infeasible_tasks(None);
        if !infeasible.is_empty() {
            return Err(Error::InfeasibleCoverage(infeasible));
        }
        let mut winners = Vec::new();
        let mut rounds = Vec::new();
        let residual = self
            .greedy(None, |w, cost, before| {
                winners.push(w);
                let covered = self.marginal(w, before);
                let mut after = before.to_vec();
                self.apply(w, &mut after);
                rounds.push(SelectionRound {
                    worker: self.workers[w].clone(),
                    unit_cost: cost,
                    covered,
                    residual_after: self.tasks.iter().cloned().zip(after).collect(),
                });
            })
            .map_err(Error::InfeasibleCoverage)?;
        Ok(Selection {
            winners,
            rounds,
            residual: self.tasks.iter().cloned().zip(residual).collect(),
        })
    }

    /// Critical payment of one winner.
    pub fn critical_payment(&self, winner: usize) -> Result<f64> {
        if !self.infeasible_tasks(Some(winner)).is_empty() {
            return Err(Error::InsufficientCompetition(self.workers[winner].clone()));
        }
        let mut pay = 0.0f64;
        self.greedy(Some(winner), |k, _, before| {
            let own = self.marginal(winner, before);
            let theirs = self.marginal(k, before);
            pay = pay.max(own / theirs * self.bids[k]);
        })
        .map_err(|_| Error::InsufficientCompetition(self.workers[winner].clone()))?;
        Ok(pay)
    }

    /// Payments for every worker; losers get zero.
    pub fn payments(&self, winners: &[usize]) -> Result<Vec<f64>> {
        let paid: Vec<(usize, f64)> = winners
            .par_iter()
            .map(|&w| self.critical_payment(w).map(|p| (w, p)))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; self.n_workers()];
        for (w, p) in paid {
            out[w] = p;
        }
        Ok(out)
    }

    /// Winner indices of the auction (selection order) and all payments.
    pub fn run(&self) -> Result<(Selection, Vec<f64>)> {
        let selection = self.select()?;
        let payments = self.payments(&selection.winners)?;
        Ok((selection, payments))
    }

    /// `true` if `worker` ends up among the winners.
    pub fn wins(&self, worker: usize) -> Result<bool> {
        Ok(self.select()?.winners.contains(&worker))
    }

    pub fn social_cost(&self, winners: &[usize]) -> f64 {
        winners.iter().map(|&w| self.costs[w]).sum()
    }

    /// `Σ_{i ∈ S} A_i^t ≥ Θ^t` for every task, up to [`COVER_TOL`].
    pub fn covers(&self, winners: &[usize]) -> bool {
        let mut total = vec![0.0; self.theta.len()];
        for &w in winners {
            for &(t, a) in &self.coverage[w] {
                total[t] += a;
            }
        }
        total
            .iter()
            .zip(&self.theta)
            .all(|(got, need)| *got >= need - COVER_TOL)
    }

    /// Greedy by largest marginal coverage.
    pub fn greedy_accuracy(&self) -> Result<Vec<usize>> {
        self.baseline(|w, marginal| (-marginal, w))
    }

    /// Greedy by lowest bid, skipping workers that no longer cover anything.
    pub fn greedy_bid(&self) -> Result<Vec<usize>> {
        self.baseline(|w, _| (self.bids[w], w))
    }

    fn baseline(&self, key: impl Fn(usize, f64) -> (f64, usize)) -> Result<Vec<usize>> {
        let infeasible = self.infeasible_tasks(None);
        if !infeasible.is_empty() {
            return Err(Error::InfeasibleCoverage(infeasible));
        }
        let mut residual = self.initial_residual();
        let mut taken = vec![false; self.n_workers()];
        let mut winners = Vec::new();
        while residual.iter().any(|&r| r > 0.0) {
            let pick = (0..self.n_workers())
                .filter(|&w| !taken[w])
                .filter_map(|w| {
                    let m = self.marginal(w, &residual);
                    (m > 0.0).then(|| key(w, m))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((_, w)) = pick else {
                return Err(Error::InfeasibleCoverage(self.uncovered(&residual)));
            };
            taken[w] = true;
            winners.push(w);
            self.apply(w, &mut residual);
        }
        Ok(winners)
    }

    /// Minimum-cost feasible winner set by exhaustive search.
    pub fn brute_force_opt(&self) -> Result<(f64, Vec<usize>)> {
        let n = self.n_workers();
        if n > MAX_BRUTE_FORCE_WORKERS {
            return Err(Error::OracleTooLarge {
                workers: n,
                limit: MAX_BRUTE_FORCE_WORKERS,
            });
        }
        let mut best: Option<(f64, u32)> = None;
        let mut total = vec![0.0; self.theta.len()];
        for mask in 0u32..(1u32 << n) {
            let cost: f64 = (0..n).filter(|w| mask >> w & 1 == 1).map(|w| self.costs[w]).sum();
            if best.is_some_and(|(b, _)| cost >= b) {
                continue;
            }
            total.iter_mut().for_each(|x| *x = 0.0);
            for w in (0..n).filter(|w| mask >> w & 1 == 1) {
                for &(t, a) in &self.coverage[w] {
                    total[t] += a;
                }
            }
            if total.iter().zip(&self.theta).all(|(g, need)| *g >= need - COVER_TOL) {
                best = Some((cost, mask));
            }
        }
        match best {
            Some((cost, mask)) => Ok((cost, (0..n).filter(|w| mask >> w & 1 == 1).collect())),
            None => Err(Error::InfeasibleCoverage(self.infeasible_tasks(None))),
        }
    }

    pub fn bound_constants(&self) -> Result<BoundConstants> {
        let delta_v = self
            .coverage
            .iter()
            .flatten()
            .map(|&(_, a)| a)
            .fold(f64::INFINITY, f64::min);
        if !delta_v.is_finite() {
            return Err(Error::Domain {
                what: "maximum accuracy",
                value: 0.0,
                range: "(0, 1]; at least one positive accuracy is required",
            });
        }
        let omega = self.theta.iter().sum::<f64>() / delta_v;
        let bound_eps = self
            .coverage
            .iter()
            .enumerate()
            .flat_map(|(w, cov)| {
                cov.iter()
                    .map(move |&(_, a)| a * self.task_set_sizes[w] as f64 * self.bids[w])
            })
            .fold(0.0, f64::max);
        let h_omega = harmonic((omega - 1e-9).ceil().max(0.0) as u64);
        Ok(BoundConstants {
            delta_v,
            omega,
            bound_eps,
            h_omega,
            factor: 2.0 * bound_eps * h_omega,
        })
    }
}

/// `H_k = 1 + 1/2 + … + 1/k`, with the asymptotic expansion for large `k`.
pub fn harmonic(k: u64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    if k <= 1_000_000 {
        (1..=k).map(|i| 1.0 / i as f64).sum()
    } else {
        let x = k as f64;
        x.ln() + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRound {
    pub worker: WorkerId,
    pub unit_cost: f64,
    pub covered: f64,
    pub residual_after: BTreeMap<TaskId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Winner indices in selection order.
    pub winners: Vec<usize>,
    pub rounds: Vec<SelectionRound>,
    pub residual: BTreeMap<TaskId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    /// Smallest positive accuracy over all bid `(worker, task)` pairs.
    pub delta_v: f64,
    /// Total requirement measured in units of `delta_v`.
    pub omega: f64,
    /// `max A_i^j · |T_i| · b_i`.
    pub bound_eps: f64,
    pub h_omega: f64,
    /// `2 · bound_eps · h_omega`.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionOutcome {
    /// Winners in selection order.
    pub winners: Vec<WorkerId>,
    /// Every worker's payment; zero for losers.
    pub payments: BTreeMap<WorkerId, f64>,
    pub social_cost: f64,
    pub total_payment: f64,
    pub residual: BTreeMap<TaskId, f64>,
    pub trace: Vec<SelectionRound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundConstants>,
}

impl AuctionOutcome {
    pub fn is_winner(&self, worker: &WorkerId) -> bool {
        self.winners.contains(worker)
    }
}

pub fn effective_unit_cost(
    inst: &Instance,
    accuracy: &AccuracyMatrix,
    worker: &WorkerId,
    residual: &BTreeMap<TaskId, f64>,
) -> Result<Option<f64>> {
    let p = CoverageProblem::new(inst, accuracy)?;
    let w = p.worker_index(worker)?;
    let res: Vec<f64> = p
        .tasks
        .iter()
        .map(|t| residual.get(t).copied().unwrap_or(0.0))
        .collect();
    Ok(p.effective_unit_cost(w, &res))
}

/// Greedy winner selection with the per-round trace.
pub fn select_winners(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<(Vec<WorkerId>, Vec<SelectionRound>)> {
    let p = CoverageProblem::new(inst, accuracy)?;
    let s = p.select()?;
    Ok((s.winners.iter().map(|&w| p.workers[w].clone()).collect(), s.rounds))
}

pub fn compute_payments(
    inst: &Instance,
    accuracy: &AccuracyMatrix,
    winners: &[WorkerId],
) -> Result<BTreeMap<WorkerId, f64>> {
    let p = CoverageProblem::new(inst, accuracy)?;
    let idx = winners
        .iter()
        .map(|w| p.worker_index(w))
        .collect::<Result<Vec<_>>>()?;
    let pay = p.payments(&idx)?;
    Ok(p.workers.iter().cloned().zip(pay).collect())
}

pub fn run_reverse_auction(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<AuctionOutcome> {
    let p = CoverageProblem::new(inst, accuracy)?;
    outcome(&p)
}

/// Runs the auction on an already built problem.
pub fn outcome(p: &CoverageProblem) -> Result<AuctionOutcome> {
    let (selection, pay) = p.run()?;
    Ok(AuctionOutcome {
        winners: selection.winners.iter().map(|&w| p.workers[w].clone()).collect(),
        social_cost: p.social_cost(&selection.winners),
        total_payment: pay.iter().sum(),
        payments: p.workers.iter().cloned().zip(pay).collect(),
        residual: selection.residual,
        trace: selection.rounds,
        bounds: p.bound_constants().ok(),
    })
}

fn ids(p: &CoverageProblem, idx: Vec<usize>) -> Vec<WorkerId> {
    idx.into_iter().map(|w| p.workers[w].clone()).collect()
}

pub fn run_ga(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<Vec<WorkerId>> {
    let p = CoverageProblem::new(inst, accuracy)?;
    Ok(ids(&p, p.greedy_accuracy()?))
}

pub fn run_gb(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<Vec<WorkerId>> {
    let p = CoverageProblem::new(inst, accuracy)?;
    Ok(ids(&p, p.greedy_bid()?))
}

pub fn brute_force_opt(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<(f64, Vec<WorkerId>)> {
    let p = CoverageProblem::new(inst, accuracy)?;
    let (cost, set) = p.brute_force_opt()?;
    Ok((cost, ids(&p, set)))
}

pub fn bound_constants(inst: &Instance, accuracy: &AccuracyMatrix) -> Result<BoundConstants> {
    CoverageProblem::new(inst, accuracy)?.bound_constants()
}

/// `p_i - c_i` for winners, zero otherwise.
pub fn worker_utility(worker: &WorkerBid, outcome: &AuctionOutcome) -> f64 {
    if outcome.is_winner(&worker.worker_id) {
        outcome.payments.get(&worker.worker_id).copied().unwrap_or(0.0) - worker.cost()
    } else {
        0.0
    }
}

//! Copier-aware truth discovery and a truthful reverse auction for
//! crowdsourcing.
//!
//! The crate has two halves that compose into a single mechanism:
//!
//! * [`engine::run_date`] estimates the true value of every task from
//!   conflicting worker submissions. It alternates between detecting
//!   pairwise copying ([`dependence`]), discounting values a worker most
//!   likely copied ([`independence`]), and re-estimating value truth
//!   probabilities and worker accuracies ([`estimation`]).
//! * [`auction::run_reverse_auction`] takes the resulting accuracy matrix and
//!   the workers' sealed bids, greedily selects a winner set that covers every
//!   task's accuracy requirement, and pays each winner its critical value.
//!
//! [`harness`] holds the synthetic instance generator, metrics, the
//! truthfulness probe and the experiment sweep runner.

pub mod auction;
pub mod dependence;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod independence;
pub mod model;

pub use auction::{AuctionOutcome, BoundConstants, CoverageProblem};
pub use engine::DateResult;
pub use error::{Error, Result};
pub use estimation::Similarity;
pub use model::{
    AccuracyMatrix, AccuracyScope, Instance, Params, TaskId, TaskSpec, TruthEstimate, WorkerBid, WorkerId,
};

//! Parameter sweeps over synthetic instances.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{CoverageProblem, MAX_BRUTE_FORCE_WORKERS};
use crate::engine::{run_date, run_ed, run_mv_with, run_nc, DateResult};
use crate::error::{Error, Result};
use crate::harness::generate::{generate_instance, GenConfig};
use crate::harness::precision;
use crate::model::{AccuracyMatrix, Instance, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Algorithm {
    Date,
    Mv,
    Nc,
    Ed,
    Ra,
    Ga,
    Gb,
    Opt,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Date => "DATE",
            Algorithm::Mv => "MV",
            Algorithm::Nc => "NC",
            Algorithm::Ed => "ED",
            Algorithm::Ra => "RA",
            Algorithm::Ga => "GA",
            Algorithm::Gb => "GB",
            Algorithm::Opt => "OPT",
        }
    }

    pub fn is_auction(self) -> bool {
        matches!(self, Algorithm::Ra | Algorithm::Ga | Algorithm::Gb | Algorithm::Opt)
    }
}

/// Knob varied across sweep cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    M,
    CopierFraction,
    RGen,
    Alpha,
    InitAccuracy,
    CopyProb,
    Rho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vary {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub generator: GenConfig,
    pub params: Params,
    pub algorithms: Vec<Algorithm>,
    pub vary: Option<Vary>,
    /// Replications per cell; replication `k` uses seed `generator.seed + k`.
    pub seeds: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            generator: GenConfig::default(),
            params: Params::default(),
            algorithms: vec![Algorithm::Date, Algorithm::Mv],
            vary: None,
            seeds: 1,
        }
    }
}

impl SweepSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// `(cell label, generator, params)` for every cell.
    pub fn cells(&self) -> Result<Vec<(String, GenConfig, Params)>> {
        let Some(vary) = &self.vary else {
            return Ok(vec![("base".into(), self.generator.clone(), self.params.clone())]);
        };
        vary.values
            .iter()
            .map(|&x| {
                let mut g = self.generator.clone();
                let mut p = self.params.clone();
                let count = |x: f64| {
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(Error::InvalidConfig(format!("{x} is not a count")))
                    }
                };
                match vary.param {
                    SweepParam::N => g.n = count(x)?,
                    SweepParam::M => g.m = count(x)?,
                    SweepParam::CopierFraction => {
                        g.copier_count = None;
                        g.copier_fraction = Some(x);
                    }
                    SweepParam::RGen => g.r_gen = x,
                    SweepParam::Alpha => p.alpha = x,
                    SweepParam::InitAccuracy => p.init_accuracy = x,
                    SweepParam::CopyProb => p.copy_prob = x,
                    SweepParam::Rho => p.rho = x,
                }
                g.validate()?;
                p.validate()?;
                Ok((format!("{:?}={x}", vary.param).to_lowercase(), g, p))
            })
            .collect()
    }
}

/// One algorithm on one replication. Missing metrics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub cell: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub copiers: usize,
    pub r_gen: f64,
    pub precision: Option<f64>,
    pub social_cost: Option<f64>,
    pub total_payment: Option<f64>,
    pub iterations: Option<usize>,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub errors: usize,
    pub precision_mean: Option<f64>,
    pub precision_std: Option<f64>,
    pub social_cost_mean: Option<f64>,
    pub social_cost_std: Option<f64>,
    pub total_payment_mean: Option<f64>,
    pub runtime_ms_mean: f64,
}

#[derive(Default)]
struct Measured {
    precision: Option<f64>,
    social_cost: Option<f64>,
    total_payment: Option<f64>,
    iterations: Option<usize>,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, (start.elapsed().as_secs_f64() * 1e3).max(1e-6))
}

fn truth_metrics(inst: &Instance, r: &DateResult) -> Result<Measured> {
    let gt = inst.ground_truth.as_ref().expect("generated instances carry ground truth");
    Ok(Measured {
        precision: Some(precision(&r.truth, gt)?),
        iterations: Some(r.iterations),
        ..Measured::default()
    })
}

fn run_one(alg: Algorithm, inst: &Instance, params: &Params, date: &mut Option<DateResult>) -> Result<Measured> {
    let gt = inst.ground_truth.as_ref().expect("generated instances carry ground truth");
    match alg {
        Algorithm::Date => {
            let r = run_date(inst, params)?;
            let out = truth_metrics(inst, &r);
            *date = Some(r);
            out
        }
        Algorithm::Nc => truth_metrics(inst, &run_nc(inst, params)?),
        Algorithm::Ed => truth_metrics(inst, &run_ed(inst, params)?),
        Algorithm::Mv => Ok(Measured {
            precision: Some(precision(&run_mv_with(inst, &params.similarity, params.rho)?, gt)?),
            ..Measured::default()
        }),
        Algorithm::Ra | Algorithm::Ga | Algorithm::Gb | Algorithm::Opt => {
            let acc: &AccuracyMatrix = match date {
                Some(r) => &r.accuracy,
                None => &date.insert(run_date(inst, params)?).accuracy,
            };
            let p = CoverageProblem::new(inst, acc)?;
            let (winners, payment) = match alg {
                Algorithm::Ra => {
                    let (s, pay) = p.run()?;
                    (s.winners, Some(pay.iter().sum()))
                }
                Algorithm::Ga => (p.greedy_accuracy()?, None),
                Algorithm::Gb => (p.greedy_bid()?, None),
                _ => (p.brute_force_opt()?.1, None),
            };
            Ok(Measured {
                social_cost: Some(p.social_cost(&winners)),
                total_payment: payment,
                ..Measured::default()
            })
        }
    }
}

fn replicate(cell: &str, gen: &GenConfig, params: &Params, algorithms: &[Algorithm], seed: u64) -> Vec<MetricsRow> {
    let row = |alg: Algorithm, m: Result<Measured>, runtime_ms: f64| {
        let (m, error) = match m {
            Ok(m) => (m, None),
            Err(e) => (Measured::default(), Some(e.to_string())),
        };
        MetricsRow {
            cell: cell.to_string(),
            algorithm: alg,
            seed,
            n: gen.n,
            m: gen.m,
            copiers: gen.copiers(),
            r_gen: gen.r_gen,
            precision: m.precision,
            social_cost: m.social_cost,
            total_payment: m.total_payment,
            iterations: m.iterations,
            runtime_ms,
            error,
        }
    };
    let cfg = GenConfig { seed, ..gen.clone() };
    let inst = match generate_instance(&cfg) {
        Ok(s) => s.instance,
        Err(e) => {
            let msg = e.to_string();
            return algorithms
                .iter()
                .map(|&a| row(a, Err(Error::InvalidConfig(msg.clone())), 1e-6))
                .collect();
        }
    };
    let mut date = None;
    algorithms
        .iter()
        .map(|&alg| {
            if alg == Algorithm::Opt && inst.workers.len() > MAX_BRUTE_FORCE_WORKERS {
                let e = Error::OracleTooLarge {
                    workers: inst.workers.len(),
                    limit: MAX_BRUTE_FORCE_WORKERS,
                };
                return row(alg, Err(e), 1e-6);
            }
            let (m, ms) = timed(|| run_one(alg, &inst, params, &mut date));
            row(alg, m, ms)
        })
        .collect()
}

/// Runs every cell over `spec.seeds` replications in parallel. Rows come
/// back in (cell, seed, algorithm) order; failures become error rows.
pub fn run_experiment(spec: &SweepSpec) -> Result<Vec<MetricsRow>> {
    spec.params.validate()?;
    if spec.algorithms.is_empty() {
        return Err(Error::InvalidConfig("sweep names no algorithms".into()));
    }
    let cells = spec.cells()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..spec.seeds).map(move |k| (c, k)))
        .collect();
    let rows: Vec<Vec<MetricsRow>> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let (label, gen, params) = &cells[c];
            replicate(label, gen, params, &spec.algorithms, gen.seed.wrapping_add(k))
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Mean and population standard deviation per (cell, algorithm), in first
/// appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Algorithm)> = Vec::new();
    for r in rows {
        let k = (r.cell.clone(), r.algorithm);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(cell, algorithm)| {
            let group: Vec<&MetricsRow> = rows
                .iter()
                .filter(|r| r.cell == cell && r.algorithm == algorithm)
                .collect();
            let pick = |f: fn(&MetricsRow) -> Option<f64>| group.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let (precision_mean, precision_std) = mean_std(&pick(|r| r.precision));
            let (social_cost_mean, social_cost_std) = mean_std(&pick(|r| r.social_cost));
            SummaryRow {
                runs: group.len(),
                errors: group.iter().filter(|r| r.error.is_some()).count(),
                precision_mean,
                precision_std,
                social_cost_mean,
                social_cost_std,
                total_payment_mean: mean_std(&pick(|r| r.total_payment)).0,
                runtime_ms_mean: group.iter().map(|r| r.runtime_ms).sum::<f64>() / group.len() as f64,
                cell,
                algorithm,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv(input: impl Read) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

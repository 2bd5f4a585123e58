//! Seeded synthetic crowds with planted copiers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, TaskId, TaskSpec, WorkerBid, WorkerId};

/// Resample budget per task before `theta` is capped at the available mass.
const MAX_THETA_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CostSource {
    Uniform { low: f64, high: f64 },
    /// Draws uniformly from a list of observed prices.
    Empirical { prices: Vec<f64> },
}

impl CostSource {
    /// Reads one price per line; blank lines and a non-numeric header are skipped.
    pub fn from_price_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut prices = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let field = line.split(',').next().unwrap_or("").trim();
            if field.is_empty() {
                continue;
            }
            match field.parse::<f64>() {
                Ok(p) if p.is_finite() && p >= 0.0 => prices.push(p),
                Ok(p) => return Err(Error::InvalidConfig(format!("line {}: bad price {p}", i + 1))),
                Err(_) if i == 0 => continue,
                Err(_) => return Err(Error::InvalidConfig(format!("line {}: `{field}` is not a price", i + 1))),
            }
        }
        let source = CostSource::Empirical { prices };
        source.validate()?;
        Ok(source)
    }

    fn validate(&self) -> Result<()> {
        match self {
            CostSource::Uniform { low, high } if !(0.0 <= *low && low <= high && high.is_finite()) => {
                Err(Error::InvalidConfig(format!("cost range [{low}, {high}] is not a nonnegative interval")))
            }
            CostSource::Empirical { prices } if prices.is_empty() => {
                Err(Error::InvalidConfig("empirical cost source has no prices".into()))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CostSource::Uniform { low, high } => uniform(rng, *low, *high),
            CostSource::Empirical { prices } => *prices.choose(rng).expect("validated nonempty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    /// Takes precedence over `copier_fraction`.
    pub copier_count: Option<usize>,
    pub copier_fraction: Option<f64>,
    pub true_accuracy_range: (f64, f64),
    pub r_gen: f64,
    pub num_false: u32,
    pub theta_range: (f64, f64),
    pub cost_source: CostSource,
    /// Workers answering each task; all of them when absent.
    pub workers_per_task: Option<usize>,
    /// Copiers draw their sources from this many independent workers; all of them when absent.
    pub source_pool: Option<usize>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 120,
            m: 300,
            copier_count: Some(30),
            copier_fraction: None,
            true_accuracy_range: (0.5, 0.9),
            r_gen: 0.8,
            num_false: 2,
            theta_range: (2.0, 4.0),
            cost_source: CostSource::Uniform { low: 1.0, high: 10.0 },
            workers_per_task: None,
            source_pool: None,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn copiers(&self) -> usize {
        match (self.copier_count, self.copier_fraction) {
            (Some(c), _) => c,
            (None, Some(f)) => (f * self.n as f64).round() as usize,
            (None, None) => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!("need at least one worker and task, got n={} m={}", self.n, self.m));
        }
        if let Some(f) = self.copier_fraction {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("copier_fraction {f} outside [0, 1]"));
            }
        }
        if self.copiers() >= self.n {
            return bad(format!("copier count {} must be below n={}", self.copiers(), self.n));
        }
        let (lo, hi) = self.true_accuracy_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!("accuracy range ({lo}, {hi}) is not inside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.r_gen) {
            return bad(format!("r_gen {} outside [0, 1]", self.r_gen));
        }
        if self.num_false == 0 {
            return bad("num_false must be positive".into());
        }
        let (tlo, thi) = self.theta_range;
        if !(0.0 <= tlo && tlo <= thi && thi.is_finite()) {
            return bad(format!("theta range ({tlo}, {thi}) is empty or negative"));
        }
        if self.workers_per_task == Some(0) {
            return bad("workers_per_task must be positive".into());
        }
        if self.source_pool == Some(0) {
            return bad("source_pool must be positive".into());
        }
        self.cost_source.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub instance: Instance,
    pub drawn_accuracy: BTreeMap<WorkerId, f64>,
    /// Copier → source.
    pub sources: BTreeMap<WorkerId, WorkerId>,
    /// Total theta redraws across tasks; capped draws count once each.
    pub resamples: usize,
}

fn uniform(rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
    if high > low {
        rng.random_range(low..high)
    } else {
        low
    }
}

fn token(k: u32) -> String {
    format!("v{k}")
}

/// Answers `truth` with probability `acc`, else a uniform decoy.
fn independent_answer(rng: &mut ChaCha8Rng, acc: f64, truth: u32, num_false: u32) -> u32 {
    if rng.random::<f64>() < acc {
        truth
    } else {
        let k = rng.random_range(0..num_false);
        if k >= truth {
            k + 1
        } else {
            k
        }
    }
}

pub fn generate_instance(cfg: &GenConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let ids: Vec<WorkerId> = (1..=n as u64).map(WorkerId::from).collect();
    let acc: Vec<f64> = (0..n)
        .map(|_| uniform(&mut rng, cfg.true_accuracy_range.0, cfg.true_accuracy_range.1))
        .collect();
    let costs: Vec<f64> = (0..n).map(|_| cfg.cost_source.draw(&mut rng)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (copiers, independents) = order.split_at(cfg.copiers());
    let mut pool = independents.to_vec();
    pool.sort_unstable();
    if let Some(k) = cfg.source_pool {
        pool.shuffle(&mut rng);
        pool.truncate(k.min(pool.len()));
        pool.sort_unstable();
    }
    let mut source: Vec<Option<usize>> = vec![None; n];
    let mut copier_list = copiers.to_vec();
    copier_list.sort_unstable();
    for &c in &copier_list {
        source[c] = Some(*pool.choose(&mut rng).expect("at least one independent worker"));
    }

    let task_ids: Vec<TaskId> = (1..=cfg.m as u64).map(|j| TaskId::new(format!("t{j}"))).collect();
    let mut answers: Vec<BTreeMap<TaskId, Vec<String>>> = vec![BTreeMap::new(); n];
    let mut tasks = Vec::with_capacity(cfg.m);
    let mut ground_truth = BTreeMap::new();
    let mut resamples = 0usize;
    for task in &task_ids {
        let truth = rng.random_range(0..=cfg.num_false);
        let performers: BTreeSet<usize> = match cfg.workers_per_task {
            Some(k) if k < n => {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(&mut rng);
                all.into_iter().take(k).collect()
            }
            _ => (0..n).collect(),
        };
        let mut given: BTreeMap<usize, u32> = BTreeMap::new();
        for &w in performers.iter().filter(|&&w| source[w].is_none()) {
            given.insert(w, independent_answer(&mut rng, acc[w], truth, cfg.num_false));
        }
        for &w in performers.iter().filter(|&&w| source[w].is_some()) {
            let src = source[w].expect("copier");
            let copied = match given.get(&src) {
                Some(&v) if rng.random::<f64>() < cfg.r_gen => v,
                _ => independent_answer(&mut rng, acc[w], truth, cfg.num_false),
            };
            given.insert(w, copied);
        }
        for (&w, &v) in &given {
            answers[w].insert(task.clone(), vec![token(v)]);
        }

        let mass: f64 = performers.iter().map(|&w| acc[w]).sum();
        let mut theta = uniform(&mut rng, cfg.theta_range.0, cfg.theta_range.1);
        let mut tries = 0;
        while theta > mass && tries < MAX_THETA_RESAMPLES {
            theta = uniform(&mut rng, cfg.theta_range.0, cfg.theta_range.1);
            tries += 1;
        }
        if theta > mass {
            theta = mass;
            tries += 1;
        }
        resamples += tries;
        tasks.push(TaskSpec {
            task_id: task.clone(),
            theta,
            num_false: Some(cfg.num_false),
            false_dist: None,
        });
        ground_truth.insert(task.clone(), token(truth));
    }

    let workers = (0..n)
        .map(|w| WorkerBid {
            worker_id: ids[w].clone(),
            task_set: answers[w].keys().cloned().collect(),
            bid_price: costs[w],
            true_cost: Some(costs[w]),
            values: std::mem::take(&mut answers[w]),
        })
        .collect();
    Ok(Synthetic {
        instance: Instance {
            tasks,
            workers,
            ground_truth: Some(ground_truth),
        },
        drawn_accuracy: ids.iter().cloned().zip(acc).collect(),
        sources: (0..n)
            .filter_map(|w| source[w].map(|s| (ids[w].clone(), ids[s].clone())))
            .collect(),
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GenConfig {
        GenConfig {
            n: 20,
            m: 50,
            copier_count: Some(5),
            seed,
            ..GenConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_instance(&small(7)).unwrap();
        let b = generate_instance(&small(7)).unwrap();
        assert_eq!(a.instance, b.instance);
        assert_eq!(a.sources, b.sources);
        let c = generate_instance(&small(8)).unwrap();
        assert_ne!(a.instance, c.instance);
    }

    #[test]
    fn output_is_valid_and_feasible() {
        let s = generate_instance(&small(3)).unwrap();
        s.instance.validated().unwrap();
        assert_eq!(s.sources.len(), 5);
        for t in &s.instance.tasks {
            let mass: f64 = s
                .instance
                .workers
                .iter()
                .filter(|w| w.task_set.contains(&t.task_id))
                .map(|w| s.drawn_accuracy[&w.worker_id])
                .sum();
            assert!(t.theta <= mass + 1e-12);
            assert!((2.0..=4.0).contains(&t.theta));
        }
        for w in &s.instance.workers {
            assert_eq!(w.true_cost, Some(w.bid_price));
        }
    }

    #[test]
    fn certain_copy_matches_source() {
        let cfg = GenConfig { r_gen: 1.0, ..small(11) };
        let s = generate_instance(&cfg).unwrap();
        for (copier, src) in &s.sources {
            let c = s.instance.worker(copier).unwrap();
            let o = s.instance.worker(src).unwrap();
            for (task, v) in &c.values {
                if let Some(ov) = o.values.get(task) {
                    assert_eq!(v, ov, "copier {copier} task {task}");
                }
            }
        }
    }

    #[test]
    fn empirical_accuracy_tracks_drawn_accuracy() {
        let cfg = GenConfig {
            n: 10,
            m: 1000,
            copier_count: Some(0),
            seed: 5,
            ..GenConfig::default()
        };
        let s = generate_instance(&cfg).unwrap();
        let gt = s.instance.ground_truth.as_ref().unwrap();
        for w in &s.instance.workers {
            let hits = w.values.iter().filter(|(t, v)| gt[*t] == v[0]).count();
            let emp = hits as f64 / w.values.len() as f64;
            let a = s.drawn_accuracy[&w.worker_id];
            let sd = (a * (1.0 - a) / 1000.0).sqrt();
            assert!((emp - a).abs() < 4.0 * sd + 1e-3, "worker {}: {emp} vs {a}", w.worker_id);
        }
    }

    #[test]
    fn workers_per_task_limits_providers() {
        let cfg = GenConfig {
            workers_per_task: Some(4),
            theta_range: (1.0, 1.5),
            ..small(2)
        };
        let s = generate_instance(&cfg).unwrap();
        for t in &s.instance.tasks {
            let k = s.instance.workers.iter().filter(|w| w.task_set.contains(&t.task_id)).count();
            assert_eq!(k, 4);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_instance(&GenConfig { copier_count: Some(20), ..small(0) }).is_err());
        assert!(generate_instance(&GenConfig { true_accuracy_range: (0.9, 0.5), ..small(0) }).is_err());
        assert!(generate_instance(&GenConfig { num_false: 0, ..small(0) }).is_err());
        assert!(generate_instance(&GenConfig {
            cost_source: CostSource::Empirical { prices: vec![] },
            ..small(0)
        })
        .is_err());
    }

    #[test]
    fn price_file_loader() {
        let dir = std::env::temp_dir().join(format!("crowdtruth-prices-{}", std::process::id()));
        std::fs::write(&dir, "price\n12.5\n\n3\n").unwrap();
        let src = CostSource::from_price_file(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(src, CostSource::Empirical { prices: vec![12.5, 3.0] });
    }
}

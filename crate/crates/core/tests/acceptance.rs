//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the report is always printed; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crowdtruth::auction::{brute_force_opt, CoverageProblem};
use crowdtruth::dependence::{prob_different, prob_same_false, prob_same_true};
use crowdtruth::engine::{run_date, run_ed, run_mv_with, run_nc};
use crowdtruth::estimation::value_truth_prob;
use crowdtruth::harness::experiment::{summarize, SummaryRow};
use crowdtruth::harness::fixtures::{auction_fixture, table1};
use crowdtruth::harness::probe::linear_grid;
use crowdtruth::harness::{
    generate_instance, precision, run_experiment, truthfulness_probe, Algorithm, GenConfig, SweepSpec,
};
use crowdtruth::model::FalseValueModel;
use crowdtruth::{AccuracyMatrix, Instance, Params, Similarity, TaskSpec, WorkerBid, WorkerId};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn cell_mean(summary: &[SummaryRow], alg: Algorithm, f: fn(&SummaryRow) -> Option<f64>) -> f64 {
    summary
        .iter()
        .find(|s| s.algorithm == alg)
        .and_then(f)
        .unwrap_or(f64::NAN)
}

/// Random small instance with values and a matching accuracy matrix.
fn random_instance(rng: &mut ChaCha8Rng) -> (Instance, AccuracyMatrix) {
    let n = rng.random_range(2..=8);
    let m = rng.random_range(1..=6);
    let cfg = GenConfig {
        n,
        m,
        copier_count: Some(rng.random_range(0..n)),
        num_false: rng.random_range(1..=4),
        r_gen: rng.random::<f64>(),
        workers_per_task: Some(rng.random_range(1..=n)),
        theta_range: (0.0, 0.5),
        seed: rng.random(),
        ..GenConfig::default()
    };
    let inst = generate_instance(&cfg).expect("valid config").instance;
    let mut acc = AccuracyMatrix::new();
    for w in &inst.workers {
        for t in &w.task_set {
            acc.set(w.worker_id.clone(), t.clone(), rng.random_range(0.01..0.99));
        }
    }
    (inst, acc)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let inst = table1();
    let gt = inst.ground_truth.clone().expect("fixture has ground truth");
    let params = Params {
        similarity: Similarity::Edit,
        rho: 0.2,
        copy_prob: 0.8,
        ..Params::default()
    };
    let mv = precision(&run_mv_with(&inst, &params.similarity, params.rho).unwrap(), &gt).unwrap();
    let date = precision(&run_date(&inst, &params).unwrap().truth, &gt).unwrap();
    let elapsed = start.elapsed();
    outcome(
        (mv - 0.4).abs() < 1e-12 && date >= 0.6 && date > mv && elapsed < Duration::from_secs(1),
        format!("MV {mv:.2}, DATE {date:.2} (edit, rho 0.2, r 0.8), {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_pair = 0.0f64;
    for _ in 0..10_000 {
        let a = rng.random_range(1e-6..1.0 - 1e-6);
        let b = rng.random_range(1e-6..1.0 - 1e-6);
        let num = rng.random_range(1..=50);
        let ps = prob_same_true(a, b).unwrap();
        let pf = prob_same_false(a, b, &FalseValueModel::Uniform { num_false: num }).unwrap();
        let pd = prob_different(ps, pf).unwrap();
        worst_pair = worst_pair.max((ps + pf + pd - 1.0).abs());
    }
    let mut worst_truth = 0.0f64;
    let mut worst_post = 0.0f64;
    for _ in 0..1_000 {
        let (inst, acc) = random_instance(&mut rng);
        for t in &inst.tasks {
            if let Ok(p) = value_truth_prob(&inst, &t.task_id, &acc) {
                worst_truth = worst_truth.max((p.values().sum::<f64>() - 1.0).abs());
            }
        }
        let params = Params {
            alpha: rng.random_range(0.01..0.99),
            copy_prob: rng.random::<f64>(),
            ..Params::default()
        };
        if let Ok(r) = run_date(&inst, &params) {
            let ws = r.posteriors.workers().to_vec();
            for a in &ws {
                for b in ws.iter().filter(|b| a < *b) {
                    let s = r.posteriors.directed(a, b).unwrap()
                        + r.posteriors.directed(b, a).unwrap()
                        + r.posteriors.independent(a, b).unwrap();
                    worst_post = worst_post.max((s - 1.0).abs());
                }
            }
        }
    }
    outcome(
        worst_pair <= 1e-12 && worst_truth <= 1e-9 && worst_post <= 1e-9,
        format!("max |Ps+Pf+Pd-1| {worst_pair:.1e}, max |sum P(v)-1| {worst_truth:.1e}, max posterior error {worst_post:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut prior_err = 0.0f64;
    let mut nc_mismatch = 0;
    let mut hist_err = 0.0f64;
    let runs = 300;
    for _ in 0..runs {
        let (inst, acc) = random_instance(&mut rng);
        let alpha = rng.random_range(0.01..0.99);
        let r0 = Params {
            alpha,
            copy_prob: 0.0,
            ..Params::default()
        };
        let res = run_date(&inst, &r0).unwrap();
        let ws = res.posteriors.workers().to_vec();
        for a in &ws {
            for b in ws.iter().filter(|b| a != *b) {
                prior_err = prior_err.max((res.posteriors.directed(a, b).unwrap() - alpha / 2.0).abs());
                prior_err = prior_err.max((res.posteriors.independent(a, b).unwrap() - (1.0 - alpha)).abs());
            }
        }

        let a0 = Params {
            alpha: 0.0,
            copy_prob: rng.random::<f64>(),
            ..Params::default()
        };
        if run_date(&inst, &a0).unwrap().truth.values != run_nc(&inst, &a0).unwrap().truth.values {
            nc_mismatch += 1;
        }

        let mut uniform = inst.clone();
        for t in &mut uniform.tasks {
            let k = t.num_false.expect("generator sets num_false");
            let values: Vec<String> = (0..=k).map(|v| format!("v{v}")).collect();
            // Uniform histogram over the num_false + 1 tokens minus one truth slot.
            t.false_dist = Some(values.iter().take(k as usize).map(|v| (v.clone(), 1.0 / k as f64)).collect());
        }
        for t in &inst.tasks {
            let plain = value_truth_prob(&inst, &t.task_id, &acc);
            let hist = value_truth_prob(&uniform, &t.task_id, &acc);
            if let (Ok(p), Ok(h)) = (plain, hist) {
                for (v, x) in &p {
                    hist_err = hist_err.max((x - h[v]).abs());
                }
            }
        }
    }
    outcome(
        prior_err <= 1e-12 && nc_mismatch == 0 && hist_err <= 1e-12,
        format!(
            "{runs} instances: r=0 max |post-prior| {prior_err:.1e}, alpha=0 truth mismatches {nc_mismatch}, uniform histogram max diff {hist_err:.1e}"
        ),
    )
}

/// Mean precision of DATE, MV and NC over `seeds` replications.
fn copier_sweep(workers_per_task: Option<usize>, seeds: u64) -> (f64, f64, f64, usize) {
    let spec = SweepSpec {
        generator: GenConfig {
            n: 40,
            m: 60,
            copier_count: None,
            copier_fraction: Some(0.25),
            r_gen: 0.8,
            workers_per_task,
            theta_range: (0.5, 1.0),
            seed: 4_000,
            ..GenConfig::default()
        },
        params: Params::default(),
        algorithms: vec![Algorithm::Date, Algorithm::Mv, Algorithm::Nc],
        vary: None,
        seeds,
    };
    let rows = run_experiment(&spec).unwrap();
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = summarize(&rows);
    let p = |a| cell_mean(&summary, a, |s| s.precision_mean);
    (p(Algorithm::Date), p(Algorithm::Mv), p(Algorithm::Nc), errors)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, wpt) in [("all 40 answer each task", None), ("5 answer each task", Some(5))] {
        let (date, mv, nc, errors) = copier_sweep(wpt, 60);
        pass &= errors == 0 && date > mv && date > nc;
        parts.push(format!(
            "{label}: DATE {date:.4}, MV {mv:.4}, NC {nc:.4}, margins +{:.4}/+{:.4}",
            date - mv,
            date - nc
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    outcome(pass, format!("60 seeds; {}; {:.1} s", parts.join("; "), elapsed.as_secs_f64()))
}

fn criterion_5() -> Outcome {
    let params = Params::default();
    let (mut t_date, mut t_ed) = (Duration::ZERO, Duration::ZERO);
    let (mut p_date, mut p_ed) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let cfg = GenConfig {
            n: 8,
            m: 20,
            copier_count: Some(2),
            workers_per_task: Some(5),
            theta_range: (1.0, 2.0),
            seed: 5_000 + seed,
            ..GenConfig::default()
        };
        let inst = generate_instance(&cfg).unwrap().instance;
        let gt = inst.ground_truth.as_ref().unwrap();
        let s = Instant::now();
        let d = run_date(&inst, &params).unwrap();
        t_date += s.elapsed();
        let s = Instant::now();
        let e = run_ed(&inst, &params).unwrap();
        t_ed += s.elapsed();
        p_date.push(precision(&d.truth, gt).unwrap());
        p_ed.push(precision(&e.truth, gt).unwrap());
    }
    let (md, me) = (mean(p_date), mean(p_ed));
    outcome(
        (md - me).abs() <= 0.05 && t_date < t_ed,
        format!(
            "20 seeds: DATE {md:.4}, ED {me:.4} (|diff| {:.4}); wall DATE {:.1} ms vs ED {:.1} ms ({:.1}%)",
            (md - me).abs(),
            t_date.as_secs_f64() * 1e3,
            t_ed.as_secs_f64() * 1e3,
            100.0 * t_date.as_secs_f64() / t_ed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let (inst, acc) = auction_fixture();
    let p = CoverageProblem::new(&inst, &acc).unwrap();
    let (sel, pay) = p.run().unwrap();
    let mut winners: Vec<&WorkerId> = sel.winners.iter().map(|&w| &p.workers[w]).collect();
    winners.sort();
    let (opt, _) = brute_force_opt(&inst, &acc).unwrap();
    let cost = p.social_cost(&sel.winners);
    let w1 = p.worker_index(&"1".into()).unwrap();
    let w2 = p.worker_index(&"2".into()).unwrap();
    outcome(
        winners == [&WorkerId::from("1"), &WorkerId::from("2")] && pay[w1] == 4.0 && pay[w2] == 4.0 && cost == 5.0 && opt == 5.0,
        format!("winners {winners:?}, p1 {}, p2 {}, social cost {cost}, OPT {opt}", pay[w1], pay[w2]),
    )
}

/// Random coverage instance where every task stays coverable without any
/// single worker, so critical payments exist.
fn random_mechanism_instance(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> (Instance, AccuracyMatrix) {
    let n = rng.random_range(3..=max_n);
    let m = rng.random_range(1..=max_m);
    let tasks: Vec<String> = (1..=m).map(|j| format!("t{j}")).collect();
    let mut acc = AccuracyMatrix::new();
    let mut workers = Vec::with_capacity(n);
    for i in 1..=n {
        let id = WorkerId::from(i as u64);
        let mut set = std::collections::BTreeSet::new();
        for t in &tasks {
            if rng.random_bool(0.6) {
                set.insert(t.as_str().into());
            }
        }
        if set.is_empty() {
            set.insert(tasks[rng.random_range(0..m)].as_str().into());
        }
        for t in &set {
            acc.set(id.clone(), Clone::clone(t), rng.random_range(0.05..1.0));
        }
        let bid = rng.random_range(1.0..10.0);
        workers.push(WorkerBid {
            worker_id: id,
            task_set: set,
            bid_price: bid,
            true_cost: Some(bid),
            values: BTreeMap::new(),
        });
    }
    let tasks = tasks
        .iter()
        .map(|t| {
            let a: Vec<f64> = workers
                .iter()
                .filter(|w| w.task_set.contains(&t.as_str().into()))
                .map(|w| acc.get(&w.worker_id, &t.as_str().into()))
                .collect();
            let spare = a.iter().sum::<f64>() - a.iter().copied().fold(0.0, f64::max);
            TaskSpec::new(t.as_str(), spare * rng.random_range(0.05..0.9))
        })
        .collect();
    (
        Instance {
            tasks,
            workers,
            ground_truth: None,
        },
        acc,
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grid = linear_grid(0.5, 1.5, 21);
    let (mut ir, mut cover, mut mono, mut critical, mut probe) = (0, 0, 0, 0, 0);
    let mut checked = 0;
    let mut probes = 0;
    while checked < 1_000 {
        let (inst, acc) = random_mechanism_instance(&mut rng, 15, 8);
        let p = CoverageProblem::new(&inst, &acc).unwrap();
        let Ok((sel, pay)) = p.run() else { continue };
        checked += 1;
        if !p.covers(&sel.winners) {
            cover += 1;
        }
        for &w in &sel.winners {
            if pay[w] < p.bids[w] - 1e-9 {
                ir += 1;
            }
            for f in [0.1, 0.5, 0.9, 0.999] {
                if !p.with_bid(w, p.bids[w] * f).wins(w).unwrap() {
                    mono += 1;
                }
            }
            let below = p.with_bid(w, pay[w] * (1.0 - 1e-6)).wins(w).unwrap();
            let above = p.with_bid(w, pay[w] * (1.0 + 1e-6)).wins(w).unwrap();
            if !below || above {
                critical += 1;
            }
        }
        for w in &p.workers {
            let curve = truthfulness_probe(&p, w, &grid).unwrap();
            probes += 1;
            if curve.max_gain() > 1e-9 {
                probe += 1;
            }
        }
    }
    let total = ir + cover + mono + critical + probe;
    outcome(
        total == 0,
        format!(
            "{checked} instances, {probes} probes: IR {ir}, coverage {cover}, monotonicity {mono}, critical payment {critical}, profitable deviations {probe}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut lower, mut upper, mut checked) = (0, 0, 0);
    let mut max_ratio = 1.0f64;
    let mut min_factor = f64::INFINITY;
    while checked < 200 {
        let (inst, acc) = random_mechanism_instance(&mut rng, 12, 6);
        let p = CoverageProblem::new(&inst, &acc).unwrap();
        let Ok(sel) = p.select() else { continue };
        checked += 1;
        let ra = p.social_cost(&sel.winners);
        let (opt, _) = p.brute_force_opt().unwrap();
        let bound = p.bound_constants().unwrap();
        if opt > ra + 1e-9 {
            lower += 1;
        }
        if ra > bound.factor * opt + 1e-9 {
            upper += 1;
        }
        max_ratio = max_ratio.max(ra / opt);
        min_factor = min_factor.min(bound.factor);
    }
    outcome(
        lower == 0 && upper == 0,
        format!(
            "{checked} instances: OPT > RA {lower}, RA > factor*OPT {upper}; max RA/OPT {max_ratio:.4}, smallest factor {min_factor:.2}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let spec = SweepSpec {
        generator: GenConfig {
            n: 40,
            m: 60,
            copier_count: Some(10),
            seed: 9_000,
            ..GenConfig::default()
        },
        params: Params::default(),
        algorithms: vec![Algorithm::Ra, Algorithm::Ga, Algorithm::Gb],
        vary: None,
        seeds: 100,
    };
    let rows = run_experiment(&spec).unwrap();
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = summarize(&rows);
    let c = |a| cell_mean(&summary, a, |s| s.social_cost_mean);
    let (ra, ga, gb) = (c(Algorithm::Ra), c(Algorithm::Ga), c(Algorithm::Gb));
    outcome(
        errors == 0 && ra <= ga && ra <= gb,
        format!(
            "100 seeds: RA {ra:.2}, GA {ga:.2}, GB {gb:.2}; decrease {:.1}% vs GA, {:.1}% vs GB",
            100.0 * (1.0 - ra / ga),
            100.0 * (1.0 - ra / gb)
        ),
    )
}

fn criterion_10() -> Outcome {
    let inst = generate_instance(&GenConfig::default()).unwrap().instance;
    let params = Params::default();
    let start = Instant::now();
    let date = run_date(&inst, &params).unwrap();
    let after_date = start.elapsed();
    let p = CoverageProblem::new(&inst, &date.accuracy).unwrap();
    let auction = p.run();
    let elapsed = start.elapsed();
    let ok = auction.is_ok() && date.converged && date.iterations <= params.max_iters && elapsed < Duration::from_secs(60);
    let winners = auction.as_ref().map_or(0, |(s, _)| s.winners.len());
    outcome(
        ok,
        format!(
            "120x300: {} iterations (converged {}), DATE {:.2} s, total {:.2} s, {winners} winners",
            date.iterations,
            date.converged,
            after_date.as_secs_f64(),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("1", "Table 1 fixture precision", criterion_1),
        ("2", "probability sanity", criterion_2),
        ("3", "degeneracy identities", criterion_3),
        ("4", "copier robustness", criterion_4),
        ("5", "enumeration cross-check", criterion_5),
        ("6", "auction hand trace", criterion_6),
        ("7", "mechanism properties", criterion_7),
        ("8", "approximation sandwich", criterion_8),
        ("9", "social cost dominance", criterion_9),
        ("10", "scale smoke test", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.pass);
        println!("[{}] criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

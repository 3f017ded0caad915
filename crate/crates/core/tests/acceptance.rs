//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.
//!
//! `cargo test -p annotator-trust --test acceptance`

use std::time::{Duration, Instant};

use annotator_trust::dataset::{Dataset, LabelMatrix};
use annotator_trust::evaluation::{auc, conditional_prob};
use annotator_trust::model::{sigmoid, ModelParams};
use annotator_trust::sweep::{run_sweep, summarize, CellSummary, SweepGrid, SweepResult, SweepSource};
use annotator_trust::synth::{gen_dataset, inject_annotators, AdversarySpec, SynthConfig, LARGE_PRESET_POINTS};
use annotator_trust::training::{expected_penalized_objective, fit, FitConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: "AC-1", title: "leave-one-out conditional matches linear enumeration", budget: Some(Duration::from_secs(5)), run: ac1_conditional_oracle },
        Criterion { id: "AC-2", title: "conditionals normalize over the held-out label", budget: Some(Duration::from_secs(5)), run: ac2_normalization },
        Criterion { id: "AC-3", title: "EM objective gradient matches central differences", budget: Some(Duration::from_secs(30)), run: ac3_gradient_check },
        Criterion { id: "AC-4", title: "EM traces are monotone on the default sweep grid", budget: None, run: ac4_monotone_traces },
        Criterion { id: "AC-5", title: "single p_a = 0.4 adversary ranked first", budget: Some(Duration::from_secs(300)), run: ac5_adversary_detection },
        Criterion { id: "AC-6", title: "base-annotator scores stable across p_a", budget: None, run: ac6_base_stability },
        Criterion { id: "AC-7", title: "adversary score symmetric about p_a = 0.5", budget: None, run: ac7_symmetry },
        Criterion { id: "AC-8", title: "AUC degrades only under many consistent flippers", budget: None, run: ac8_auc_shape },
        Criterion { id: "AC-9", title: "sweep output identical for 1 and 4 threads", budget: None, run: ac9_determinism },
        Criterion { id: "AC-10", title: "AUC equals brute-force pair counting", budget: None, run: ac10_auc_oracle },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(budget)) = (&outcome, c.budget) {
            if elapsed > budget {
                outcome = Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("[PASS] {} {} ({detail}; {elapsed:.1?})", c.id, c.title),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {} {} ({detail}; {elapsed:.1?})", c.id, c.title);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random dataset with `n` points, `t` annotators, `d` features and about
/// 20% missing labels (every row and column keeps one label).
fn random_dataset(rng: &mut ChaCha8Rng, n: usize, t: usize, d: usize) -> Dataset<f64> {
    loop {
        let cells: Vec<Option<bool>> = (0..n * t)
            .map(|_| rng.random_bool(0.8).then(|| rng.random_bool(0.5)))
            .collect();
        let Ok(labels) = LabelMatrix::new(n, t, cells) else { continue };
        let raw: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ds = Dataset::from_raw(
            (0..n).map(|i| i.to_string()).collect(),
            (0..d).map(|j| format!("x{j}")).collect(),
            raw,
            labels,
            (0..t).map(|k| format!("a{k}")).collect(),
            None,
        );
        if let Ok(ds) = ds {
            return ds;
        }
    }
}

fn random_params(rng: &mut ChaCha8Rng, d: usize, t: usize, scale: f64) -> ModelParams<f64> {
    let flat: Vec<f64> = (0..(d + 1) * (t + 1)).map(|_| rng.random_range(-scale..scale)).collect();
    ModelParams::from_flat(&flat, d, t).unwrap()
}

/// `p(labels except `skip` | x)` by direct summation over z.
fn linear_marginal(row: &[Option<bool>], x: &[f64], p: &ModelParams<f64>, skip: Option<usize>) -> f64 {
    let prior = sigmoid(p.ground_truth.logit(x).unwrap());
    [true, false]
        .iter()
        .map(|&z| {
            let mut prod = if z { prior } else { 1.0 - prior };
            for (k, (y, a)) in row.iter().zip(&p.annotators).enumerate() {
                if Some(k) == skip {
                    continue;
                }
                if let Some(y) = y {
                    let eta = sigmoid(a.logit(x).unwrap());
                    prod *= if *y == z { eta } else { 1.0 - eta };
                }
            }
            prod
        })
        .sum()
}

fn ac1_conditional_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=20);
        let t = rng.random_range(2..=4);
        let d = rng.random_range(1..=3);
        let ds = random_dataset(&mut rng, n, t, d);
        let p = random_params(&mut rng, d, t, 2.0);
        for i in 0..n {
            let row = ds.labels().row(i);
            for k in 0..t {
                if row[k].is_none() {
                    continue;
                }
                let oracle = linear_marginal(row, ds.x(i), &p, None) / linear_marginal(row, ds.x(i), &p, Some(k));
                let got = conditional_prob(k, row, ds.x(i), &p).unwrap();
                worst = worst.max((got - oracle).abs() / oracle);
                checked += 1;
            }
        }
    }
    check(worst <= 1e-10, format!("{checked} conditionals, max rel err {worst:.2e}, tol 1e-10"))
}

fn ac2_normalization() -> Outcome {
    let base = gen_dataset::<f64>(&SynthConfig { seed: 21, ..SynthConfig::default() }).unwrap();
    let ds = inject_annotators(&base, AdversarySpec { p_a: 0.4, count: 1 }, 22).unwrap();
    let (params, _) = fit(&ds, &FitConfig::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..ds.n_points() {
        for k in 0..ds.n_annotators() {
            let mut row = ds.labels().row(i).to_vec();
            let mut total = 0.0;
            for y in [true, false] {
                row[k] = Some(y);
                total += conditional_prob(k, &row, ds.x(i), &params).unwrap();
            }
            worst = worst.max((total - 1.0).abs());
        }
    }
    check(worst <= 1e-10, format!("{} points x {} annotators, max |sum - 1| {worst:.2e}", ds.n_points(), ds.n_annotators()))
}

fn ac3_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let instances = 25;
    for _ in 0..instances {
        let ds = random_dataset(&mut rng, 5, 2, 2);
        let p = random_params(&mut rng, 2, 2, 1.5);
        let q: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let l2 = rng.random_range(0.0..0.5);
        let (_, grad) = expected_penalized_objective(&ds, &q, &p, l2).unwrap();
        let analytic = grad.to_flat();
        let flat = p.to_flat();
        for j in 0..flat.len() {
            let f = |delta: f64| {
                let mut v = flat.clone();
                v[j] += delta;
                let pp = ModelParams::from_flat(&v, 2, 2).unwrap();
                expected_penalized_objective(&ds, &q, &pp, l2).unwrap().0
            };
            let numeric = (f(h) - f(-h)) / (2.0 * h);
            let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    check(worst < 1e-5, format!("{instances} instances, max rel err {worst:.2e}, tol 1e-5"))
}

fn default_sweep_grid(seed: u64) -> SweepGrid {
    SweepGrid::new(SweepSource::Synthetic(SynthConfig::default()), seed)
}

fn ac4_monotone_traces() -> Outcome {
    let result = run_sweep(&default_sweep_grid(4), None).map_err(|e| e.to_string())?;
    let mut fits = 0;
    let mut bad = 0;
    let mut failed_cells = 0;
    for cell in &result.cells {
        match &cell.outcome {
            Ok(o) => {
                for t in &o.traces {
                    fits += 1;
                    if !t.is_monotone(1e-9) {
                        bad += 1;
                    }
                }
            }
            Err(_) => failed_cells += 1,
        }
    }
    check(
        bad == 0 && failed_cells == 0,
        format!("{} cells, {fits} fits, {bad} non-monotone, {failed_cells} failed cells", result.cells.len()),
    )
}

fn ac5_adversary_detection() -> Outcome {
    let grid = SweepGrid {
        pa_values: vec![0.4],
        adversary_counts: vec![1],
        replicates: 100,
        source: SweepSource::Synthetic(SynthConfig { n_points: 500, ..SynthConfig::default() }),
        seed: 5,
        fit: FitConfig::default(),
        test_split: 0.0,
    };
    let result = run_sweep(&grid, None).map_err(|e| e.to_string())?;
    let top = result
        .cells
        .iter()
        .filter(|c| {
            c.outcome.as_ref().is_ok_and(|o| {
                let best = o.annotators.iter().max_by(|a, b| a.score.total_cmp(&b.score)).unwrap();
                best.is_adversary
            })
        })
        .count();
    check(top >= 95, format!("adversary top-scored in {top}/100 replicates, need >= 95"))
}

fn large_grid(pa_values: Vec<f64>, counts: Vec<usize>, seed: u64) -> SweepGrid {
    SweepGrid {
        pa_values,
        adversary_counts: counts,
        replicates: 10,
        source: SweepSource::Synthetic(SynthConfig { n_points: LARGE_PRESET_POINTS, ..SynthConfig::default() }),
        seed,
        fit: FitConfig::default(),
        test_split: 0.0,
    }
}

fn pa_curve() -> &'static (SweepResult, Vec<CellSummary>) {
    static CURVE: std::sync::OnceLock<(SweepResult, Vec<CellSummary>)> = std::sync::OnceLock::new();
    CURVE.get_or_init(|| {
        let grid = large_grid((1..=9).map(|i| i as f64 / 10.0).collect(), vec![3], 6);
        let result = run_sweep(&grid, None).expect("valid grid");
        let summary = summarize(&result);
        (result, summary)
    })
}

fn ac6_base_stability() -> Outcome {
    let (result, summary) = pa_curve();
    let failed = result.cells.iter().filter(|c| c.outcome.is_err()).count();
    let base: Vec<f64> = summary.iter().map(|s| s.mean_base_score).collect();
    let lo = base.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = base.iter().sum::<f64>() / base.len() as f64;
    let spread = (hi - lo) / mean;
    let curve: Vec<String> = base.iter().map(|b| format!("{b:.1}")).collect();
    check(
        spread < 0.15 && failed == 0,
        format!("base means [{}], (max - min) / mean = {spread:.3}, need < 0.15", curve.join(", ")),
    )
}

fn ac7_symmetry() -> Outcome {
    let (_, summary) = pa_curve();
    let adv = |p: f64| {
        summary
            .iter()
            .find(|s| (s.p_a - p).abs() < 1e-12)
            .and_then(|s| s.mean_adversary_score)
            .unwrap_or(f64::NAN)
    };
    let mut details = Vec::new();
    let mut ok = true;
    for p in [0.1, 0.3] {
        let (a, b) = (adv(p), adv(1.0 - p));
        let rel = (a - b).abs() / a.max(b);
        ok &= rel < 0.10;
        details.push(format!("{p}: {a:.1} vs {:.1}: {b:.1} (rel {rel:.3})", 1.0 - p));
    }
    let peak = adv(0.5);
    let max_other = summary
        .iter()
        .filter(|s| (s.p_a - 0.5).abs() > 1e-12)
        .filter_map(|s| s.mean_adversary_score)
        .fold(f64::NEG_INFINITY, f64::max);
    ok &= peak >= max_other;
    details.push(format!("peak at 0.5: {peak:.1} vs max elsewhere {max_other:.1}"));
    check(ok, details.join("; "))
}

fn ac8_auc_shape() -> Outcome {
    let grid = large_grid(vec![1.0], vec![0, 1, 9], 8);
    let result = run_sweep(&grid, None).map_err(|e| e.to_string())?;
    let summary = summarize(&result);
    let auc_at = |m: usize| summary.iter().find(|s| s.n_adversaries == m).map_or(f64::NAN, |s| s.mean_train_auc);
    let (clean, one, nine) = (auc_at(0), auc_at(1), auc_at(9));
    let ok = (one - clean).abs() <= 0.05 && clean - nine >= 0.15;
    check(
        ok,
        format!("AUC clean {clean:.4}, M=1 {one:.4} (|diff| {:.4} <= 0.05), M=9 {nine:.4} (drop {:.4} >= 0.15)", (one - clean).abs(), clean - nine),
    )
}

fn ac9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let code = annotator_trust::cli::main_with_args([
            "annotator-trust",
            "sweep",
            "--seed",
            "9",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        (code, std::fs::read(&out).unwrap_or_default())
    };
    let (c1, a) = run("1", "one.csv");
    let (c4, b) = run("4", "four.csv");
    check(
        c1 == 0 && c4 == 0 && !a.is_empty() && a == b,
        format!("exit codes {c1}/{c4}, {} bytes, identical: {}", a.len(), a == b),
    )
}

fn ac10_auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    let mut with_ties = 0;
    for _ in 0..100 {
        let (scores, truth) = loop {
            let n = rng.random_range(2..=200);
            let levels = rng.random_range(2..=50);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            if truth.iter().any(|&t| t) && truth.iter().any(|&t| !t) {
                break (scores, truth);
            }
        };
        let mut twice_wins = 0u64;
        let mut pairs = 0u64;
        let mut tie = false;
        for (i, &ti) in truth.iter().enumerate() {
            for (j, &tj) in truth.iter().enumerate() {
                if ti && !tj {
                    pairs += 1;
                    if scores[i] > scores[j] {
                        twice_wins += 2;
                    } else if scores[i] == scores[j] {
                        twice_wins += 1;
                        tie = true;
                    }
                }
            }
        }
        with_ties += tie as usize;
        let brute = twice_wins as f64 / 2.0 / pairs as f64;
        if auc(&scores, &truth).unwrap() != brute {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("100 instances ({with_ties} with ties), {mismatches} mismatches"))
}


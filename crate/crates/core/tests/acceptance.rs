//! Acceptance suite: one PASS/FAIL line per criterion. MNIST criteria read
//! the IDX files from `MNIST_DIR` or `<workspace>/data/mnist`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use ternary_onn::baselines::ridge_fit;
use ternary_onn::harness::{
    median, run_alpha_scan, run_comparison, run_stability, Arm, ArmRun, Experiment,
    ExperimentConfig, TaskData,
};
use ternary_onn::optimizer::{n_mirrors, nmse, train, TrainConfig};
use ternary_onn::readout::{
    compose, decompose, random_mask, readout, BatchReadout, DetectorModel, WeightMode,
};
use ternary_onn::tasks::mnist::{load_mnist, MnistDataset};
use ternary_onn::ReservoirState;

use common::{n_mirrors_oracle, nmse_oracle, relative_diff, ridge_numeric};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

fn decomposition_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = common::rng(1);
    let mut failures = 0;
    for i in 0..10_000u64 {
        let k = rng.random_range(1..500);
        let mask = random_mask(k, WeightMode::Ternary, i);
        let state =
            ReservoirState::new((0..k).map(|_| rng.random_range(0.0..10.0)).collect()).unwrap();
        let (plus, minus) = decompose(&mask);
        let disjoint = plus.bits().iter().zip(minus.bits()).all(|(p, m)| !(p & m));
        let identity = compose(&plus, &minus).ok().as_ref() == Some(&mask);
        let mut det = DetectorModel::new(0.0, 0).unwrap();
        let y = readout(&state, &mask, 1.0, &mut det).unwrap();
        let expected: f64 = mask
            .weights()
            .iter()
            .zip(state.intensities())
            .map(|(&w, &x)| f64::from(w) * x)
            .sum();
        let sum_ok = (y - expected).abs() <= 1e-12 * state.total().max(1.0);
        if !(disjoint && identity && sum_ok) {
            failures += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        failures == 0 && within(Duration::from_secs(5), t),
        format!(
            "{failures} failures over 10000 masks in {:.2}s (limit 5s)",
            t.as_secs_f64()
        ),
    )
}

fn oracle_suite() -> Verdict {
    let mut rng = common::rng(2);
    let mut worst_rel: f64 = 0.0;
    let mut nmse_fail = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(2..64);
        let scale = 10f64.powi(rng.random_range(-3..=3));
        let y: Vec<f64> = (0..n)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect();
        let t: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..2u8)))
            .collect();
        let got = nmse(&y, &t).unwrap();
        match nmse_oracle(&y, &t) {
            Some(e) => {
                let r = relative_diff(got, e);
                worst_rel = worst_rel.max(r);
                if r > 1e-12 {
                    nmse_fail += 1;
                }
            }
            None => nmse_fail += usize::from(got != f64::INFINITY),
        }
    }
    let mut nm_fail = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..1000);
        let alpha = match rng.random_range(0..3) {
            0 => 0.0,
            1 => f64::from(rng.random_range(1..50u32)),
            _ => rng.random_range(0.0..50.0),
        };
        let e = match rng.random_range(0..4) {
            0 if alpha > 0.0 => {
                let q = f64::from(rng.random_range(1..100u32)) / alpha;
                [q.next_down(), q, q.next_up()][rng.random_range(0..3)]
            }
            1 => f64::INFINITY,
            _ => rng.random_range(0.0..3.0),
        };
        if n_mirrors(alpha, e, len) != n_mirrors_oracle(alpha, e, len) {
            nm_fail += 1;
        }
    }
    let named = n_mirrors(0.0, 0.8, 448) == 1 && n_mirrors(10.0, 0.25, 448) == 3;
    verdict(
        nmse_fail == 0 && nm_fail == 0 && named,
        format!(
            "nmse: {nmse_fail} mismatches, worst relative error {worst_rel:.1e}; n_mirrors: {nm_fail} mismatches; named cases {}",
            if named { "ok" } else { "wrong" }
        ),
    )
}

fn algorithm_fidelity() -> Verdict {
    let (mut monotone, mut single, mut boolean_clean, mut reproducible) = (0, 0, 0, 0);
    for seed in 0..100u64 {
        let mut rng = common::rng(300 + seed);
        let states = common::random_states(&mut rng, 40, 30);
        let targets = common::balanced_targets(&mut rng, 40);
        let run = |alpha: f64, mode: WeightMode| {
            let cfg = TrainConfig {
                alpha,
                max_epochs: 300,
                mode,
                seed,
                ..TrainConfig::default()
            };
            let mut br =
                BatchReadout::new(&states, DetectorModel::new(0.01, seed).unwrap(), 1.0).unwrap();
            let mut saw_minus = false;
            let result = train(
                |m| {
                    saw_minus |= m.count(-1) > 0;
                    br.measure(m)
                },
                &targets,
                30,
                &cfg,
            )
            .unwrap();
            (result, saw_minus)
        };
        let (a, _) = run(10.0, WeightMode::Ternary);
        if a.history
            .windows(2)
            .all(|w| w[1].nmse_best <= w[0].nmse_best)
            && a.final_nmse <= a.initial_nmse
        {
            monotone += 1;
        }
        if run(10.0, WeightMode::Ternary).0 == a {
            reproducible += 1;
        }
        let (zero, _) = run(0.0, WeightMode::Ternary);
        if zero.history.iter().all(|h| h.n_mirrors == 1) {
            single += 1;
        }
        let (b, saw_minus) = run(10.0, WeightMode::Boolean);
        if !saw_minus && b.best_mask.count(-1) == 0 {
            boolean_clean += 1;
        }
    }
    verdict(
        monotone == 100 && single == 100 && boolean_clean == 100 && reproducible == 100,
        format!(
            "monotone {monotone}/100, alpha=0 single flips {single}/100, boolean without -1 {boolean_clean}/100, bit-identical {reproducible}/100"
        ),
    )
}

fn small_instance_optimality() -> Verdict {
    let start = Instant::now();
    let hits = (0..100).filter(|&s| common::toy_reaches_optimum(s)).count();
    let t = start.elapsed();
    verdict(
        hits >= 95 && within(Duration::from_secs(30), t),
        format!(
            "{hits}/100 toys at the brute-force optimum in {:.2}s (need 95, limit 30s)",
            t.as_secs_f64()
        ),
    )
}

fn mnist_config(experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig::preset(experiment, &common::mnist_dir())
}

struct Comparison {
    runs: Vec<ArmRun>,
    elapsed: Duration,
}

static COMPARISON: OnceLock<Result<Comparison, String>> = OnceLock::new();

fn comparison() -> Result<&'static Comparison, String> {
    COMPARISON
        .get_or_init(|| {
            let start = Instant::now();
            let cfg = mnist_config(Experiment::Compare);
            let data = TaskData::load(&cfg.task).map_err(|e| e.to_string())?;
            let runs = run_comparison(&cfg, &data).map_err(|e| e.to_string())?;
            Ok(Comparison {
                runs,
                elapsed: start.elapsed(),
            })
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn test_accuracies(runs: &[ArmRun], task: &str, arm: Arm) -> Vec<f64> {
    runs.iter()
        .filter(|r| r.task == task && r.arm == arm)
        .map(|r| r.test.accuracy)
        .collect()
}

fn ternary_boolean_gap() -> Verdict {
    let cmp = match comparison() {
        Ok(c) => c,
        Err(e) => return verdict(false, e),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for task in ["digit0", "digit8"] {
        let t = median(&test_accuracies(&cmp.runs, task, Arm::Ternary));
        let b = median(&test_accuracies(&cmp.runs, task, Arm::Boolean));
        let gap = 100.0 * (t - b);
        ok &= gap >= 2.0;
        parts.push(format!(
            "{task} ternary {t:.3} boolean {b:.3} gap {gap:+.1}pp"
        ));
    }
    let t = cmp.elapsed;
    verdict(
        ok && within(Duration::from_secs(15 * 60), t),
        format!(
            "{}; all 10 digits x 5 seeds x 4 arms in {:.0}s",
            parts.join(", "),
            t.as_secs_f64()
        ),
    )
}

fn four_arm_ordering() -> Verdict {
    let cmp = match comparison() {
        Ok(c) => c,
        Err(e) => return verdict(false, e),
    };
    let mut ordered = 0;
    let mut broken = Vec::new();
    for d in 0..10 {
        let task = format!("digit{d}");
        let m: Vec<f64> = Arm::ALL
            .iter()
            .map(|&a| median(&test_accuracies(&cmp.runs, &task, a)))
            .collect();
        if m.windows(2).all(|w| w[0] <= w[1]) {
            ordered += 1;
        } else {
            broken.push(format!(
                "{d} ({:.3}/{:.3}/{:.3}/{:.3})",
                m[0], m[1], m[2], m[3]
            ));
        }
    }
    let mean = |a: Arm| {
        let v: Vec<f64> = cmp
            .runs
            .iter()
            .filter(|r| r.arm == a)
            .map(|r| r.test.accuracy)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    verdict(
        ordered >= 8,
        format!(
            "{ordered}/10 digits ordered (need 8); unordered: [{}]; mean boolean {:.3} ternary-off {:.3} ternary {:.3} ridge {:.3}",
            broken.join(", "),
            mean(Arm::Boolean),
            mean(Arm::TernaryOff),
            mean(Arm::Ternary),
            mean(Arm::Ridge)
        ),
    )
}

fn alpha_scan_behavior() -> Verdict {
    let cfg = ExperimentConfig::preset(Experiment::AlphaScan, &common::mnist_dir());
    let runs = match run_alpha_scan(&cfg, &TaskData::Header) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let stats = |alpha: f64| {
        let sel: Vec<&ArmRun> = runs.iter().filter(|r| r.alpha == Some(alpha)).collect();
        let fin: Vec<f64> = sel
            .iter()
            .map(|r| r.result.as_ref().unwrap().final_nmse)
            .collect();
        let conv: Vec<f64> = sel
            .iter()
            .map(|r| r.result.as_ref().unwrap().epochs_to_convergence() as f64)
            .collect();
        (median(&fin), median(&conv), sel.len())
    };
    let (f0, c0, n0) = stats(0.0);
    let mut parts = vec![format!("alpha 0: nmse {f0:.4}, {c0:.0} epochs")];
    let mut winner = false;
    for a in [5.0, 10.0, 20.0] {
        let (f, c, _) = stats(a);
        winner |= f < f0 && c < c0;
        parts.push(format!("alpha {a}: nmse {f:.4}, {c:.0} epochs"));
    }
    verdict(
        winner,
        format!(
            "medians over {n0} seeds, 4-bit header: {}",
            parts.join("; ")
        ),
    )
}

fn stability_protocol() -> Verdict {
    let start = Instant::now();
    let base = mnist_config(Experiment::Stability);
    let data = match TaskData::load(&base.task) {
        Ok(d) => d,
        Err(e) => return verdict(false, e.to_string()),
    };
    let mut frozen = base.clone();
    frozen.substrate.drift_amplitude = 0.0;
    frozen.substrate.noise_sigma = 0.0;
    let frozen_rep = run_stability(&frozen, &data).unwrap().remove(0);
    let exact = frozen_rep.consistencies.iter().all(|&c| c == 1.0);
    let constant = frozen_rep
        .nmse_series
        .iter()
        .all(|&e| e == frozen_rep.nmse_series[0]);
    let rep = run_stability(&base, &data).unwrap().remove(0);
    let med = rep.median_consistency();
    let t = start.elapsed();
    verdict(
        exact && constant && med >= 0.99 && rep.consistencies.len() == 3600 && within(Duration::from_secs(600), t),
        format!(
            "frozen: consistency exactly 1 {exact}, nmse constant {constant}; drift: median consistency {med:.4} over {} checks (need 0.99); {:.1}s",
            rep.consistencies.len(),
            t.as_secs_f64()
        ),
    )
}

fn ridge_baseline() -> Verdict {
    let mut matched = 0;
    for seed in 0..100 {
        let mut rng = common::rng(900 + seed);
        let k = rng.random_range(1..=5);
        let n = rng.random_range(k + 2..=20);
        let states = common::random_states(&mut rng, n, k);
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let lambda = 10f64.powi(rng.random_range(-3..=0));
        let model = ridge_fit(&states, &targets, lambda).unwrap();
        let x: Vec<Vec<f64>> = states.iter().map(|s| s.intensities().to_vec()).collect();
        let (w, b) = ridge_numeric(&x, &targets, lambda);
        let scale = w.iter().fold(b.abs(), |m, v| m.max(v.abs())).max(1.0);
        let ok = model
            .weights
            .iter()
            .zip(&w)
            .all(|(a, e)| (a - e).abs() <= 1e-6 * scale)
            && (model.bias - b).abs() <= 1e-6 * scale;
        matched += usize::from(ok);
    }
    let (dominant, pairs) = match comparison() {
        Ok(cmp) => {
            let ridge: Vec<&ArmRun> = cmp.runs.iter().filter(|r| r.arm == Arm::Ridge).collect();
            let wins = ridge
                .iter()
                .filter(|r| {
                    cmp.runs
                        .iter()
                        .find(|t| t.arm == Arm::Ternary && t.task == r.task && t.seed == r.seed)
                        .is_some_and(|t| r.test.accuracy >= t.test.accuracy)
                })
                .count();
            (wins, ridge.len())
        }
        Err(e) => return verdict(false, format!("{matched}/100 minimizer matches; {e}")),
    };
    verdict(
        matched == 100 && pairs > 0 && dominant * 10 >= pairs * 9,
        format!("{matched}/100 closed-form fits match the minimizer to 1e-6; ridge >= ternary in {dominant}/{pairs} digit-seed pairs (need 90%)"),
    )
}

fn idx_ingestion() -> Verdict {
    let dir = common::mnist_dir();
    let mut parts = Vec::new();
    let mut ok = true;
    for (stem, expected) in [("train", 60_000), ("t10k", 10_000)] {
        let images = dir.join(format!("{stem}-images-idx3-ubyte"));
        let labels = dir.join(format!("{stem}-labels-idx1-ubyte"));
        let ds = match load_mnist(&images, &labels) {
            Ok(ds) => ds,
            Err(e) => return verdict(false, e.to_string()),
        };
        let raw_images = std::fs::read(&images).unwrap();
        let raw_labels = std::fs::read(&labels).unwrap();
        let round_trip = ds.images_idx_bytes() == raw_images
            && ds.labels_idx_bytes() == raw_labels
            && MnistDataset::from_idx_bytes(&raw_images, &raw_labels).is_ok_and(|d| d == ds);
        ok &= ds.len() == expected && ds.rows == 28 && ds.cols == 28 && round_trip;
        parts.push(format!(
            "{stem}: {} images, byte round trip {round_trip}",
            ds.len()
        ));
    }
    verdict(ok, parts.join("; "))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    type Criterion = (u32, &'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        (1, "decomposition suite", decomposition_suite),
        (2, "nmse and n_mirrors oracles", oracle_suite),
        (3, "search loop fidelity", algorithm_fidelity),
        (4, "small-instance optimality", small_instance_optimality),
        (5, "ternary vs boolean gap", ternary_boolean_gap),
        (6, "four-arm ordering", four_arm_ordering),
        (7, "alpha-scan behavior", alpha_scan_behavior),
        (8, "stability protocol", stability_protocol),
        (9, "ridge baseline", ridge_baseline),
        (10, "IDX ingestion", idx_ingestion),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| verdict(false, "panicked"));
        failed += usize::from(!v.pass);
        println!(
            "criterion {n:>2} {} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/10 criteria pass", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

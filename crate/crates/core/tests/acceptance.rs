//! Acceptance checks. Every criterion prints one PASS/FAIL line; the test
//! fails at the end if any line failed. Run with `--nocapture` to see them.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{
    bb_minimize, fd_gradient, least_squares_loo_influence, multiclass_ce, normal_matrix, normal_vector, rel_err, rng,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use trak_core::datagen::{synthetic_sample, CovarianceRule, DesignConfig};
use trak_core::harness::{accuracy, run_batch, select_removed, Batch, BatchSpec};
use trak_core::influence::{
    influence_true, AloEstimator, EstimatorKind, InfluenceTable, Projection, TestPoint, TrakEstimator,
};
use trak_core::ingest::{binary_subset, pool_and_standardize, read_cifar_binary, ImageRecord};
use trak_core::metrics::{
    median, ols, paired_values, rank_alignment, scaling_fit, table_pearson, ScalingAxis, ScalingFit, Side,
};
use trak_core::{
    build_linearized, fit_erm, fit_linearized, model_gradient, predict, Activation, Dataset, ModelSpec, SolverOptions,
};

/// Fixed before any acceptance run was looked at.
const SEED: u64 = 7;
const REMOVED: usize = 100;
const TESTS: usize = 10;

#[derive(Default)]
struct Ledger {
    lines: Vec<(bool, String)>,
}

impl Ledger {
    fn check(&mut self, id: &str, what: &str, pass: bool, detail: String) {
        let line = format!("{} criterion {id}: {what}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((pass, line));
    }

    fn note(&self, text: String) {
        println!("INFO {text}");
    }
}

fn batch(spec: &ModelSpec, cfg: &DesignConfig, estimators: Vec<EstimatorKind>, dependent: bool) -> Batch {
    let sample = synthetic_sample(spec, cfg, TESTS).unwrap();
    let bs = BatchSpec {
        removed: select_removed(cfg.n, REMOVED, cfg.seed, cfg.trial).unwrap(),
        estimators,
        dependent,
        seed: cfg.seed,
        trial: cfg.trial,
        solver: SolverOptions::default(),
    };
    let b = run_batch(spec, &sample.train, &sample.test, &bs).unwrap();
    assert!(b.failures.is_empty(), "row failures: {:?}", b.failures);
    b
}

fn values(t: &InfluenceTable) -> Vec<f64> {
    t.entries.values().filter_map(|v| v.value()).collect()
}

fn abs_values(t: &InfluenceTable) -> Vec<f64> {
    values(t).iter().map(|v| v.abs()).collect()
}

fn abs_diffs(a: &InfluenceTable, b: &InfluenceTable) -> Vec<f64> {
    let (x, y) = paired_values(a, b);
    x.iter().zip(&y).map(|(u, v)| (u - v).abs()).collect()
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn linear_glm_criteria(ledger: &mut Ledger) {
    for spec in [ModelSpec::logistic(100), ModelSpec::poisson(100)] {
        let name = spec.name();
        let cfg = DesignConfig::glm(1024, 100, SEED);
        let start = Instant::now();
        let b = batch(&spec, &cfg, vec![EstimatorKind::True, EstimatorKind::Linear, EstimatorKind::Alo], false);
        let elapsed = start.elapsed();
        let (t, l, a) = (
            b.table(EstimatorKind::True).unwrap(),
            b.table(EstimatorKind::Linear).unwrap(),
            b.table(EstimatorKind::Alo).unwrap(),
        );
        assert_eq!(t.len(), REMOVED * TESTS);
        let max_true = abs_values(t).into_iter().fold(0.0, f64::max);
        let max_gap = abs_diffs(l, t).into_iter().fold(0.0, f64::max);
        ledger.check(
            "1",
            &format!("{name} linearization exactness"),
            max_gap <= 1e-6 * max_true && elapsed <= Duration::from_secs(120),
            format!(
                "max|L-T| = {max_gap:.3e}, max|T| = {max_true:.3e}, ratio {:.3e} (<= 1e-6), {:.1}s (<= 120s)",
                max_gap / max_true,
                elapsed.as_secs_f64()
            ),
        );

        let rho = table_pearson(t, a).unwrap();
        let (x, y) = paired_values(t, a);
        let (slope, _) = ols(&x, &y).unwrap();
        ledger.check(
            "2",
            &format!("{name} ALO fidelity"),
            rho >= 0.99 && within(slope, 1.0, 0.05),
            format!("pearson(T, ALO) = {rho:.5} (>= 0.99), slope {slope:.4} (1 +- 0.05)"),
        );
    }
}

fn multiclass_criteria(ledger: &mut Ledger) {
    let spec = ModelSpec::multiclass(3, 100).unwrap();
    let b = batch(
        &spec,
        &DesignConfig::multiclass(1024, 100, 3, SEED),
        vec![EstimatorKind::True, EstimatorKind::Linear, EstimatorKind::Alo],
        false,
    );
    let (t, l, a) = (
        b.table(EstimatorKind::True).unwrap(),
        b.table(EstimatorKind::Linear).unwrap(),
        b.table(EstimatorKind::Alo).unwrap(),
    );
    let rho = table_pearson(t, l).unwrap();
    let gap = median(&abs_diffs(t, l)).unwrap();
    let size = median(&abs_values(t)).unwrap();
    ledger.check(
        "3",
        "multiclass linearization correlation",
        rho >= 0.95 && gap >= 0.2 * size,
        format!("pearson(T, L) = {rho:.4} (>= 0.95), median|T-L| / median|T| = {:.3} (>= 0.2)", gap / size),
    );
    let rho = table_pearson(l, a).unwrap();
    ledger.check("4", "ALO vs linearized", rho >= 0.999, format!("pearson(L, ALO) = {rho:.6} (>= 0.999)"));

    let mut band = Vec::new();
    for seed in 1..=5 {
        let b = batch(
            &spec,
            &DesignConfig::multiclass(1024, 100, 3, SEED + seed),
            vec![EstimatorKind::True, EstimatorKind::Linear, EstimatorKind::Alo],
            false,
        );
        let (t, l, a) = (
            b.table(EstimatorKind::True).unwrap(),
            b.table(EstimatorKind::Linear).unwrap(),
            b.table(EstimatorKind::Alo).unwrap(),
        );
        band.push((table_pearson(t, l).unwrap(), table_pearson(l, a).unwrap()));
    }
    let fmt = |f: fn(&(f64, f64)) -> f64| {
        let v: Vec<f64> = band.iter().map(f).collect();
        format!(
            "{:.4}..{:.4}",
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        )
    };
    ledger.note(format!("five-seed band: pearson(T, L) {}, pearson(L, ALO) {}", fmt(|x| x.0), fmt(|x| x.1)));
}

fn medians(label: &str, fit: &ScalingFit) -> String {
    let pts: Vec<String> = fit.summary.iter().map(|s| format!("{}: {:.3e}", s.value, s.median)).collect();
    format!("{label}: {}", pts.join(", "))
}

fn scaling_criteria(ledger: &mut Ledger) {
    let ns = [512usize, 1024, 2048, 4096];
    let chain = vec![EstimatorKind::True, EstimatorKind::Linear, EstimatorKind::Alo];

    let logistic = ModelSpec::logistic(100);
    let mut true_mag = Vec::new();
    let mut lin_alo = Vec::new();
    for &n in &ns {
        let b = batch(&logistic, &DesignConfig::glm(n, 100, SEED), chain.clone(), false);
        true_mag.push((n as f64, abs_values(b.table(EstimatorKind::True).unwrap())));
        lin_alo
            .push((n as f64, abs_diffs(b.table(EstimatorKind::Linear).unwrap(), b.table(EstimatorKind::Alo).unwrap())));
    }
    let fit = scaling_fit(&true_mag, ScalingAxis::N).unwrap();
    ledger.check(
        "5",
        "logistic |I_True| vs n",
        within(fit.slope, -1.0, 0.15),
        format!("slope {:.3} (-1 +- 0.15)", fit.slope),
    );
    let logistic_lin_alo = scaling_fit(&lin_alo, ScalingAxis::N).unwrap();

    let spec = ModelSpec::multiclass(3, 100).unwrap();
    let unit = |n: usize, p: usize| DesignConfig {
        covariance_rule: CovarianceRule::UnitSignal,
        ..DesignConfig::multiclass(n, p, 3, SEED)
    };
    let mut true_lin = Vec::new();
    let mut lin_alo = Vec::new();
    for &n in &ns {
        let b = batch(&spec, &unit(n, 100), chain.clone(), false);
        let (t, l, a) = (
            b.table(EstimatorKind::True).unwrap(),
            b.table(EstimatorKind::Linear).unwrap(),
            b.table(EstimatorKind::Alo).unwrap(),
        );
        true_lin.push((n as f64, abs_diffs(t, l)));
        lin_alo.push((n as f64, abs_diffs(l, a)));
    }
    let fit = scaling_fit(&true_lin, ScalingAxis::N).unwrap();
    ledger.note(medians("K=3 |I_True - I_Linear| by n", &fit));
    ledger.check(
        "5",
        "K=3 |I_True - I_Linear| vs n",
        within(fit.slope, -1.0, 0.2),
        format!("slope {:.3} (-1 +- 0.2)", fit.slope),
    );
    let fit = scaling_fit(&lin_alo, ScalingAxis::N).unwrap();
    ledger.check(
        "5",
        "|I_Linear - I_ALO| vs n",
        fit.slope <= -1.5 && logistic_lin_alo.slope <= -1.5,
        format!("K=3 slope {:.3}, logistic slope {:.3} (both <= -1.5)", fit.slope, logistic_lin_alo.slope),
    );

    let mut by_p = Vec::new();
    for p in [50usize, 100, 200] {
        let spec = ModelSpec::multiclass(3, p).unwrap();
        let b = batch(&spec, &unit(2048, p), vec![EstimatorKind::True, EstimatorKind::Linear], false);
        by_p.push((
            p as f64,
            abs_diffs(b.table(EstimatorKind::True).unwrap(), b.table(EstimatorKind::Linear).unwrap()),
        ));
    }
    let fit = scaling_fit(&by_p, ScalingAxis::P).unwrap();
    ledger.note(medians("K=3 |I_True - I_Linear| by p", &fit));
    ledger.check(
        "5",
        "K=3 |I_True - I_Linear| vs p at n=2048",
        within(fit.slope, 0.5, 0.2),
        format!("slope {:.3} (0.5 +- 0.2)", fit.slope),
    );
}

fn projection_criteria(ledger: &mut Ledger) {
    let ks = [50usize, 100, 150];
    let spec = ModelSpec::multiclass(3, 100).unwrap();
    let mut estimators = vec![EstimatorKind::True, EstimatorKind::Alo];
    estimators.extend(ks.iter().map(|&k| EstimatorKind::Trak(k)));
    let b = batch(&spec, &DesignConfig::multiclass(1024, 100, 3, SEED), estimators, true);

    let alo_dep = b.dependent_table(EstimatorKind::Alo).unwrap();
    let mut ratios = Vec::new();
    let mut magnitudes = Vec::new();
    let mut correlations = Vec::new();
    for &k in &ks {
        let dep = b.dependent_table(EstimatorKind::Trak(k)).unwrap();
        let (num, den) = paired_values(dep, alo_dep);
        ratios.push((k as f64, num.iter().zip(&den).map(|(a, b)| a / b).collect::<Vec<f64>>()));
        let ind = b.table(EstimatorKind::Trak(k)).unwrap();
        magnitudes.push((k as f64, abs_values(ind)));
        correlations.push(table_pearson(ind, b.table(EstimatorKind::True).unwrap()).unwrap());
    }
    let fit = scaling_fit(&ratios, ScalingAxis::K).unwrap();
    ledger.check(
        "6",
        "dependent TRAK/ALO ratio vs k",
        within(fit.slope, 1.0, 0.2),
        format!("slope {:.3} (1 +- 0.2)", fit.slope),
    );
    let fit = scaling_fit(&magnitudes, ScalingAxis::K).unwrap();
    ledger.check(
        "6",
        "independent |I_TRAK| vs k",
        within(fit.slope, 0.5, 0.2),
        format!("slope {:.3} (0.5 +- 0.2)", fit.slope),
    );
    let monotone = correlations.windows(2).all(|w| w[0] <= w[1]);
    ledger.check(
        "6",
        "pearson(TRAK, True) nonincreasing as k decreases",
        monotone,
        format!("k = {ks:?}: {}", correlations.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join(", ")),
    );
}

fn identity_criteria(ledger: &mut Ledger) {
    let mut r = rng(SEED);
    let (n, d) = (300, 60);
    let x = normal_matrix(n, d, &mut r) / (d as f64).sqrt();
    let beta = normal_vector(d, &mut r);
    let z = &x * &beta;
    let y = DVector::from_iterator(n, z.iter().map(|&v| f64::from(r.random::<f64>() < 1.0 / (1.0 + (-v).exp()))));
    let spec = ModelSpec::logistic(d);
    let data = Dataset::new(&spec, x, y).unwrap();
    let opts = SolverOptions::default();
    let fit = fit_erm(&spec, &data, &DVector::zeros(d), &opts).unwrap();
    let problem = build_linearized(&spec, &data, &fit).unwrap();
    let brb = fit_linearized(&problem, None, &opts).unwrap();
    let alo = AloEstimator::new(&problem, &brb).unwrap();
    let g_new = normal_vector(d, &mut r);

    let s = problem.predictor(&brb.beta);
    let prob: Vec<f64> = s.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
    let full = (0..n).fold(DMatrix::<f64>::zeros(d, d), |acc, j| {
        let gj = problem.rows.row(j).transpose();
        acc + &gj * gj.transpose() * (prob[j] * (1.0 - prob[j]))
    });
    let mut worst: f64 = 0.0;
    for (i, &pi) in prob.iter().enumerate() {
        let gi = problem.rows.row(i).transpose();
        let without = &full - &gi * gi.transpose() * (pi * (1.0 - pi));
        let expect = (pi - data.y(i)) * g_new.dot(&without.lu().solve(&gi).unwrap());
        worst = worst.max((alo.influence(i, &g_new).unwrap() - expect).abs() / expect.abs());
    }
    ledger.check(
        "7",
        "Woodbury form equals explicit leave-one-out Gram",
        worst <= 1e-8,
        format!("max relative error {worst:.2e} (<= 1e-8)"),
    );

    let square = Projection::from_matrix(normal_matrix(d, d, &mut r)).unwrap();
    let trak = TrakEstimator::new(&problem, &brb, &square).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let a = alo.influence(i, &g_new).unwrap();
        worst = worst.max((trak.influence(i, &g_new, false).unwrap() - a).abs() / a.abs());
    }
    ledger.check(
        "7",
        "k = d projection collapses to ALO",
        worst <= 1e-8,
        format!("max relative error {worst:.2e} (<= 1e-8)"),
    );

    let proj = Projection::from_matrix(normal_matrix(d, 20, &mut r)).unwrap();
    let scaled = Projection::from_matrix(&proj.matrix * 7.3).unwrap();
    let (a, b) =
        (TrakEstimator::new(&problem, &brb, &proj).unwrap(), TrakEstimator::new(&problem, &brb, &scaled).unwrap());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for simplified in [false, true] {
            let u = a.influence(i, &g_new, simplified).unwrap();
            let v = b.influence(i, &g_new, simplified).unwrap();
            worst = worst.max((u - v).abs() / u.abs());
        }
    }
    ledger.check(
        "7",
        "projection scale invariance, both forms",
        worst <= 1e-10,
        format!("max relative error {worst:.2e} (<= 1e-10)"),
    );

    let kinds = [
        ModelSpec::linear_squared(4),
        ModelSpec::logistic(4),
        ModelSpec::poisson(4),
        ModelSpec::multiclass(3, 4).unwrap(),
        ModelSpec::multiclass(5, 4).unwrap(),
        ModelSpec::one_hidden_layer(3, 4, Activation::Tanh).unwrap(),
        ModelSpec::one_hidden_layer(3, 4, Activation::Sigmoid).unwrap(),
        ModelSpec::one_hidden_layer(3, 4, Activation::Identity).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for spec in &kinds {
        for _ in 0..10 {
            let x: Vec<f64> = normal_vector(4, &mut r).iter().copied().collect();
            let b: Vec<f64> = normal_vector(spec.d, &mut r).iter().map(|v| 0.7 * v).collect();
            let y = spec.classes().map_or(1.0, |k| r.random_range(1..=k) as f64);
            let g = model_gradient(spec, &x, y, &b).unwrap();
            let fd = fd_gradient(|bb| predict(spec, &x, y, bb).unwrap(), &b, 1e-6);
            worst = worst.max(rel_err(g.as_slice(), &fd));
        }
    }
    ledger.check(
        "7",
        "finite-difference gradients, all model kinds",
        worst <= 1e-5,
        format!("max relative error {worst:.2e} (<= 1e-5)"),
    );
}

/// Margin `ln p_y − ln(1 − p_y)` of class-major weights with the last class pinned at 0.
fn margin(x: &[f64], label: usize, beta: &[f64], classes: usize) -> f64 {
    let p = x.len();
    let mut z: Vec<f64> = (0..classes - 1).map(|k| (0..p).map(|j| beta[k * p + j] * x[j]).sum()).collect();
    z.push(0.0);
    let zy = z[label - 1];
    let others = z.iter().enumerate().filter(|(k, _)| *k != label - 1).map(|(_, v)| (v - zy).exp()).sum::<f64>();
    -others.ln()
}

fn oracle_criteria(ledger: &mut Ledger) {
    let mut r = rng(SEED + 100);
    let (n, p) = (40, 5);
    let x = normal_matrix(n, p, &mut r);
    let y = normal_vector(n, &mut r);
    let spec = ModelSpec::linear_squared(p);
    let data = Dataset::new(&spec, x.clone(), y.clone()).unwrap();
    let opts = SolverOptions::default();
    let fit = fit_erm(&spec, &data, &DVector::zeros(p), &opts).unwrap();
    let tests: Vec<DVector<f64>> = (0..10).map(|_| normal_vector(p, &mut r)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for x_new in &tests {
            let got =
                influence_true(&spec, &data, &fit, i, &TestPoint { x: x_new.iter().copied().collect(), y: 0.0 }, &opts)
                    .unwrap();
            let expect = least_squares_loo_influence(&x, &y, i, x_new);
            worst = worst.max((got - expect).abs() / expect.abs().max(1e-12));
        }
    }
    ledger.check(
        "9",
        "least squares vs rank-one closed form",
        worst <= 1e-8,
        format!("max relative error {worst:.2e} over {} pairs (<= 1e-8)", n * tests.len()),
    );

    let (n, p, classes) = (60, 4, 3);
    let x = normal_matrix(n, p, &mut r);
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(1..=classes)).collect();
    let spec = ModelSpec::multiclass(classes, p).unwrap();
    let data = Dataset::new(&spec, x.clone(), DVector::from_iterator(n, labels.iter().map(|&l| l as f64))).unwrap();
    let fit = fit_erm(&spec, &data, &DVector::zeros(spec.d), &opts).unwrap();
    let tol = 0.5 * opts.tolerance(n);
    let zero = vec![0.0; spec.d];
    let full = bb_minimize(|b| multiclass_ce(&x, &labels, b, classes, None), &zero, tol, 1_000_000);
    let tests: Vec<(Vec<f64>, usize)> =
        (0..5).map(|_| (normal_vector(p, &mut r).iter().copied().collect(), r.random_range(1..=classes))).collect();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let loo = bb_minimize(|b| multiclass_ce(&x, &labels, b, classes, Some(i)), &full, tol, 1_000_000);
        for (x_new, label) in &tests {
            let expect = margin(x_new, *label, &loo, classes) - margin(x_new, *label, &full, classes);
            let got = influence_true(&spec, &data, &fit, i, &TestPoint { x: x_new.clone(), y: *label as f64 }, &opts)
                .unwrap();
            worst = worst.max((got - expect).abs());
        }
    }
    ledger.check(
        "9",
        "multiclass vs independent re-optimization",
        worst <= 1e-6,
        format!("max absolute error {worst:.2e} over {} pairs (<= 1e-6)", n * tests.len()),
    );
}

fn cifar_dataset(
    spec: &ModelSpec,
    records: &[ImageRecord],
    stats: Option<trak_core::ingest::ChannelStats>,
    shift: f64,
) -> (Dataset, trak_core::ingest::ChannelStats) {
    let (features, labels, stats) = pool_and_standardize(records, stats).unwrap();
    let y = DVector::from_iterator(labels.len(), labels.iter().map(|&l| l as f64 + shift));
    (Dataset::new(spec, features, y).unwrap(), stats)
}

fn cifar_run(spec: &ModelSpec, train: &Dataset, test: &Dataset, estimators: Vec<EstimatorKind>) -> Batch {
    let tests = select_removed(test.n(), 100, SEED, 1).unwrap();
    let bs = BatchSpec {
        removed: select_removed(train.n(), 100, SEED, 0).unwrap(),
        estimators,
        dependent: false,
        seed: SEED,
        trial: 0,
        solver: SolverOptions::default(),
    };
    run_batch(spec, train, &test.select(&tests), &bs).unwrap()
}

fn min_overlap(reference: &InfluenceTable, candidate: &InfluenceTable, ks: &[usize]) -> f64 {
    let mut lowest: f64 = 1.0;
    for &k in ks {
        for side in [Side::TopK, Side::BottomK] {
            lowest = lowest.min(rank_alignment(reference, candidate, k, side).unwrap().overlap_ratio);
        }
    }
    lowest
}

fn cifar_criteria(ledger: &mut Ledger) {
    let Some(dir) = std::env::var_os("CIFAR10_DIR").map(PathBuf::from) else {
        println!("SKIP criterion 8: set CIFAR10_DIR to a directory holding the CIFAR-10 binary batches to run it");
        return;
    };
    let mut train_records = Vec::new();
    for b in 1..=5 {
        train_records.extend(read_cifar_binary(&dir.join(format!("data_batch_{b}.bin"))).unwrap());
    }
    let test_records = read_cifar_binary(&dir.join("test_batch.bin")).unwrap();

    let spec = ModelSpec::multiclass(10, 192).unwrap();
    let (train, stats) = cifar_dataset(&spec, &train_records, None, 1.0);
    let (test, _) = cifar_dataset(&spec, &test_records, Some(stats), 1.0);
    let b = cifar_run(&spec, &train, &test, vec![EstimatorKind::True, EstimatorKind::Linear, EstimatorKind::Alo]);
    let train_acc = accuracy(&spec, &train, &b.fit.beta).unwrap();
    let test_acc = accuracy(&spec, &test, &b.fit.beta).unwrap();
    ledger.check(
        "8",
        "CIFAR-10 accuracy",
        within(train_acc, 0.42, 0.03) && within(test_acc, 0.41, 0.03),
        format!("train {train_acc:.4} (0.42 +- 0.03), test {test_acc:.4} (0.41 +- 0.03)"),
    );
    let (t, l, a) = (
        b.table(EstimatorKind::True).unwrap(),
        b.table(EstimatorKind::Linear).unwrap(),
        b.table(EstimatorKind::Alo).unwrap(),
    );
    let rho_tl = table_pearson(t, l).unwrap();
    let rho_la = table_pearson(l, a).unwrap();
    let overlap = min_overlap(t, l, &(1..=50).collect::<Vec<_>>());
    ledger.check(
        "8",
        "CIFAR-10 influence agreement",
        within(rho_tl, 0.916, 0.05) && rho_la >= 0.995 && overlap >= 0.6,
        format!("pearson(T, L) {rho_tl:.4} (0.916 +- 0.05), pearson(L, ALO) {rho_la:.5} (>= 0.995), min overlap k=1..50 {overlap:.3} (>= 0.6)"),
    );

    let spec = ModelSpec::logistic(192);
    let (train, stats) = cifar_dataset(&spec, &binary_subset(&train_records, 0, 1).unwrap(), None, 0.0);
    let (test, _) = cifar_dataset(&spec, &binary_subset(&test_records, 0, 1).unwrap(), Some(stats), 0.0);
    let b = cifar_run(&spec, &train, &test, vec![EstimatorKind::True, EstimatorKind::Alo]);
    let train_acc = accuracy(&spec, &train, &b.fit.beta).unwrap();
    let overlap = min_overlap(
        b.table(EstimatorKind::True).unwrap(),
        b.table(EstimatorKind::Alo).unwrap(),
        &[1, 3, 5, 10, 20, 50],
    );
    ledger.check(
        "8",
        "CIFAR-2 accuracy and ranking",
        within(train_acc, 0.818, 0.02) && overlap >= 0.97,
        format!("train {train_acc:.4} (0.818 +- 0.02), min overlap {overlap:.3} (>= 0.97)"),
    );
}

#[test]
fn acceptance() {
    let mut ledger = Ledger::default();
    type Section = (&'static str, fn(&mut Ledger));
    let sections: [Section; 7] = [
        ("1-2", linear_glm_criteria),
        ("3-4", multiclass_criteria),
        ("5", scaling_criteria),
        ("6", projection_criteria),
        ("7", identity_criteria),
        ("8", cifar_criteria),
        ("9", oracle_criteria),
    ];
    for (name, run) in sections {
        let start = Instant::now();
        run(&mut ledger);
        ledger.note(format!("criteria {name} took {:.1}s", start.elapsed().as_secs_f64()));
    }
    let failed: Vec<&String> = ledger.lines.iter().filter(|(pass, _)| !pass).map(|(_, line)| line).collect();
    println!("{} of {} checks passed", ledger.lines.len() - failed.len(), ledger.lines.len());
    assert!(failed.is_empty(), "failed checks:\n{}", failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n"));
}

//! End-to-end runs: fit, linearize, evaluate every requested estimator over
//! the removed-point × test-point grid and write tables and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::datagen::{synthetic_sample, DesignConfig};
use crate::error::{Error, Result};
use crate::influence::{
    format_real, influence_true_from, loo_refit, make_projection_for_trial, AloEstimator, EstimatorKind,
    InfluenceTable, InfluenceValue, TableMetadata, TestPoint, TrakEstimator,
};
use crate::metrics::{rank_alignment, scaling_fit, table_pearson, RankAlignment, ScalingAxis, ScalingFit, Side};
use crate::model::{model_gradient, predict_all, Dataset, ModelKind, ModelSpec};
use crate::rng::{self, Purpose};
use crate::solver::{build_linearized, fit_erm, fit_linearized, fit_linearized_from, FitResult, SolverOptions};

/// What to evaluate on one dataset.
#[derive(Clone, Debug)]
pub struct BatchSpec {
    /// Training rows whose removal is measured.
    pub removed: Vec<usize>,
    pub estimators: Vec<EstimatorKind>,
    /// Also evaluate each removed row on itself; the table's test id is the train index.
    pub dependent: bool,
    pub seed: u64,
    pub trial: u64,
    pub solver: SolverOptions,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub fit: FitResult,
    pub linearized_fit: Option<FitResult>,
    /// Independent case, in the order of `BatchSpec::estimators`.
    pub tables: Vec<InfluenceTable>,
    pub dependent: Vec<InfluenceTable>,
    pub failures: Vec<String>,
}

impl Batch {
    pub fn table(&self, kind: EstimatorKind) -> Option<&InfluenceTable> {
        self.tables.iter().find(|t| t.estimator == kind)
    }

    pub fn dependent_table(&self, kind: EstimatorKind) -> Option<&InfluenceTable> {
        self.dependent.iter().find(|t| t.estimator == kind)
    }
}

/// Starting point for the full-data fit. Linear and multiclass kinds start at
/// zero; the network starts from small Gaussian weights (zero is a saddle).
pub fn initial_beta(spec: &ModelSpec, seed: u64, trial: u64) -> DVector<f64> {
    match spec.kind {
        ModelKind::OneHiddenLayer { .. } => {
            let mut rng = rng::stream(seed, trial, Purpose::Init);
            let scale = 1.0 / (spec.p as f64).sqrt();
            DVector::from_fn(spec.d, |_, _| {
                scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
        }
        _ => DVector::zeros(spec.d),
    }
}

/// `count` distinct training indices, ascending.
pub fn select_removed(n: usize, count: usize, seed: u64, trial: u64) -> Result<Vec<usize>> {
    if count > n {
        return Err(Error::Config(format!("cannot remove {count} of {n} training points")));
    }
    let mut rng = rng::stream(seed, trial, Purpose::Selection);
    let mut idx = sample(&mut rng, n, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Fraction of rows whose predicted class matches the label. Multiclass uses
/// the arg-max logit with the reference class K at logit 0; logistic uses
/// the sign of the linear predictor.
pub fn accuracy(spec: &ModelSpec, data: &Dataset, beta: &DVector<f64>) -> Result<f64> {
    let n = data.n();
    let correct = match spec.kind {
        ModelKind::MulticlassMargin { classes } => {
            let logits = data.features() * nalgebra::DMatrix::from_column_slice(spec.p, classes - 1, beta.as_slice());
            (0..n)
                .filter(|&i| {
                    let mut best = (classes, 0.0);
                    for k in 0..classes - 1 {
                        if logits[(i, k)] > best.1 {
                            best = (k + 1, logits[(i, k)]);
                        }
                    }
                    best.0 as f64 == data.y(i)
                })
                .count()
        }
        ModelKind::LinearLogistic => {
            let z = data.features() * beta;
            (0..n).filter(|&i| (z[i] > 0.0) == (data.y(i) > 0.5)).count()
        }
        _ => return Err(Error::Config(format!("accuracy is undefined for {}", spec.name()))),
    };
    Ok(correct as f64 / n as f64)
}

fn check_value(r: Result<f64>) -> Result<InfluenceValue> {
    match r {
        Ok(v) => Ok(InfluenceValue::Value(v)),
        Err(Error::AloBreakdown(_)) => Ok(InfluenceValue::Breakdown),
        Err(e) => Err(e),
    }
}

/// Runs every estimator of `bs` on `train`, measuring influence on each row
/// of `test` (test id = row index).
pub fn run_batch(spec: &ModelSpec, train: &Dataset, test: &Dataset, bs: &BatchSpec) -> Result<Batch> {
    let n = train.n();
    if let Some(&bad) = bs.removed.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let init = initial_beta(spec, bs.seed, bs.trial);
    let fit = fit_erm(spec, train, &init, &bs.solver)?;
    if !fit.converged {
        return Err(Error::AnchorNotConverged);
    }
    let meta = TableMetadata { n, p: spec.p, d: spec.d, seed: bs.seed, model: spec.name() };
    let m = test.n();
    let g_test: Vec<DVector<f64>> =
        (0..m).map(|t| model_gradient(spec, &test.x(t), test.y(t), fit.beta.as_slice())).collect::<Result<_>>()?;
    let f_test_before = predict_all(spec, test, &fit.beta)?;

    let needs_linearized = bs.estimators.iter().any(|e| *e != EstimatorKind::True);
    let (problem, brb) = if needs_linearized {
        let problem = build_linearized(spec, train, &fit)?;
        let brb = fit_linearized(&problem, None, &bs.solver)?;
        if !brb.converged {
            return Err(Error::AnchorNotConverged);
        }
        (Some(problem), Some(brb))
    } else {
        (None, None)
    };

    let mut failures = Vec::new();
    let mut tables = Vec::new();
    let mut dependent = Vec::new();
    for &kind in &bs.estimators {
        let mut table = InfluenceTable::new(kind, meta.clone());
        let mut dep = InfluenceTable::new(kind, meta.clone());
        // Per removed row: values on the test rows, then the dependent value.
        let rows: Vec<Result<(Vec<InfluenceValue>, InfluenceValue)>> = match kind {
            EstimatorKind::True => bs
                .removed
                .par_iter()
                .map(|&i| {
                    let loo = loo_refit(spec, train, &fit, i, &bs.solver)?;
                    let after = predict_all(spec, test, &loo.beta)?;
                    let vals = (0..m).map(|t| InfluenceValue::Value(after[t] - f_test_before[t])).collect();
                    let own = influence_true_from(spec, &fit, &loo, &TestPoint::from_dataset(train, i))?;
                    Ok((vals, InfluenceValue::Value(own)))
                })
                .collect(),
            EstimatorKind::Linear => {
                let (problem, brb) = (problem.as_ref().unwrap(), brb.as_ref().unwrap());
                bs.removed
                    .par_iter()
                    .map(|&i| {
                        let loo = fit_linearized_from(problem, Some(i), &brb.beta, &bs.solver)?;
                        if !loo.converged {
                            return Err(Error::LooRefitFailed(i));
                        }
                        let delta = &loo.beta - &brb.beta;
                        let vals = g_test.iter().map(|g| InfluenceValue::Value(g.dot(&delta))).collect();
                        let own = problem.rows.row(i).transpose().dot(&delta);
                        Ok((vals, InfluenceValue::Value(own)))
                    })
                    .collect()
            }
            EstimatorKind::Alo => {
                let est = AloEstimator::new(problem.as_ref().unwrap(), brb.as_ref().unwrap())?;
                let rows = &problem.as_ref().unwrap().rows;
                bs.removed
                    .par_iter()
                    .map(|&i| {
                        let mut g = g_test.clone();
                        g.push(rows.row(i).transpose());
                        let mut vals = match est.influence_many(i, &g) {
                            Ok(v) => v.into_iter().map(InfluenceValue::Value).collect(),
                            Err(Error::AloBreakdown(_)) => vec![InfluenceValue::Breakdown; m + 1],
                            Err(e) => return Err(e),
                        };
                        let own = vals.pop().unwrap();
                        Ok((vals, own))
                    })
                    .collect()
            }
            EstimatorKind::Trak(k) | EstimatorKind::TrakSimplified(k) => {
                let simplified = matches!(kind, EstimatorKind::TrakSimplified(_));
                let problem = problem.as_ref().unwrap();
                let proj = make_projection_for_trial(problem.d(), k, bs.seed, bs.trial)?;
                let est = TrakEstimator::new(problem, brb.as_ref().unwrap(), &proj)?;
                bs.removed
                    .par_iter()
                    .map(|&i| {
                        let gi = problem.rows.row(i).transpose();
                        let vals = g_test
                            .iter()
                            .map(|g| check_value(est.influence(i, g, simplified)))
                            .collect::<Result<Vec<_>>>()?;
                        let own = check_value(est.influence(i, &gi, simplified))?;
                        Ok((vals, own))
                    })
                    .collect()
            }
        };
        for (&i, row) in bs.removed.iter().zip(rows) {
            match row {
                Ok((vals, own)) => {
                    for (t, v) in vals.into_iter().enumerate() {
                        table.insert(i, t as u64, v)?;
                    }
                    dep.insert(i, i as u64, own)?;
                }
                Err(e) => failures.push(format!("{kind}: train index {i}: {e}")),
            }
        }
        tables.push(table);
        if bs.dependent {
            dependent.push(dep);
        }
    }
    Ok(Batch { fit, linearized_fit: brb, tables, dependent, failures })
}

/// Every estimator pair's Pearson correlation on the shared cells.
pub fn correlation_matrix(tables: &[InfluenceTable]) -> Vec<Vec<Option<f64>>> {
    tables.iter().map(|a| tables.iter().map(|b| table_pearson(a, b).ok()).collect()).collect()
}

/// Alignment of every other estimator against the exact influence (or the
/// first table when the exact influence was not computed).
pub fn alignments(tables: &[InfluenceTable], ks: &[usize]) -> (Vec<(EstimatorKind, RankAlignment)>, Vec<String>) {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    let Some(reference) = tables.iter().find(|t| t.estimator == EstimatorKind::True).or(tables.first()) else {
        return (out, errors);
    };
    for cand in tables.iter().filter(|t| t.estimator != reference.estimator) {
        for side in [Side::TopK, Side::BottomK] {
            for &k in ks {
                match rank_alignment(reference, cand, k, side) {
                    Ok(a) => out.push((cand.estimator, a)),
                    Err(e) => errors.push(format!("alignment {} {side} k={k}: {e}", cand.estimator)),
                }
            }
        }
    }
    (out, errors)
}

fn table_file(kind: EstimatorKind) -> String {
    match kind.projection_dim() {
        Some(k) => format!("{}_k{k}.csv", kind.label()),
        None => format!("{}.csv", kind.label()),
    }
}

fn write_table(table: &InfluenceTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    table.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_alignment_csv(rows: &[(EstimatorKind, RankAlignment)], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "estimator,side,k,exact_matches,overlap")?;
    for (kind, a) in rows {
        writeln!(out, "{kind},{},{},{},{}", a.side, a.k, a.exact_match_count, format_real(a.overlap_ratio))?;
    }
    out.flush()?;
    Ok(())
}

/// Table files, correlations and alignments for one finished batch.
pub fn write_batch(batch: &Batch, topk: &[usize], dir: &Path, report: &mut String) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in &batch.tables {
        write_table(t, &dir.join(table_file(t.estimator)))?;
    }
    for t in &batch.dependent {
        write_table(t, &dir.join(format!("dependent_{}", table_file(t.estimator))))?;
    }
    let _ = writeln!(
        report,
        "  fit: converged={} iterations={} grad_norm={:.3e}",
        batch.fit.converged, batch.fit.iterations, batch.fit.grad_norm
    );
    write_correlations(report, "independent", &batch.tables);
    if !batch.dependent.is_empty() {
        write_correlations(report, "dependent", &batch.dependent);
    }
    let (rows, errors) = alignments(&batch.tables, topk);
    write_alignment_csv(&rows, &dir.join("alignment.csv"))?;
    for (kind, a) in &rows {
        let _ = writeln!(
            report,
            "  alignment {kind} {} k={}: exact {}/{} overlap {:.4}",
            a.side, a.k, a.exact_match_count, a.test_points, a.overlap_ratio
        );
    }
    for f in batch.failures.iter().chain(&errors) {
        let _ = writeln!(report, "  failure: {f}");
    }
    Ok(())
}

fn write_correlations(report: &mut String, case: &str, tables: &[InfluenceTable]) {
    let _ = writeln!(report, "  pearson ({case}):");
    let matrix = correlation_matrix(tables);
    for (t, row) in tables.iter().zip(matrix) {
        let cells: Vec<String> =
            row.iter().map(|c| c.map(|v| format!("{v:.6}")).unwrap_or_else(|| "NA".into())).collect();
        let _ = writeln!(report, "    {:<18} {}", t.estimator.to_string(), cells.join(" "));
    }
}

/// Magnitude samples gathered across runs, keyed by quantity then by
/// the held-fixed context.
#[derive(Default)]
struct Magnitudes {
    /// (quantity, fixed p) → n → samples
    by_n: BTreeMap<(String, usize), BTreeMap<usize, Vec<f64>>>,
    /// (quantity, fixed n) → p → samples
    by_p: BTreeMap<(String, usize), BTreeMap<usize, Vec<f64>>>,
    /// (quantity, n, p) → k → samples
    by_k: BTreeMap<(String, usize, usize), BTreeMap<usize, Vec<f64>>>,
}

fn differences(a: Option<&InfluenceTable>, b: Option<&InfluenceTable>) -> Vec<f64> {
    match (a, b) {
        (Some(a), Some(b)) => {
            a.entries.iter().filter_map(|(&(t, i), v)| Some((v.value()? - b.get(i, t)?).abs())).collect()
        }
        _ => Vec::new(),
    }
}

fn magnitudes(t: Option<&InfluenceTable>) -> Vec<f64> {
    t.map(|t| t.entries.values().filter_map(|v| v.value().map(f64::abs)).collect()).unwrap_or_default()
}

impl Magnitudes {
    fn add(&mut self, n: usize, p: usize, batch: &Batch) {
        let mut push_np = |q: &str, v: Vec<f64>| {
            if v.is_empty() {
                return;
            }
            self.by_n.entry((q.into(), p)).or_default().entry(n).or_default().extend(&v);
            self.by_p.entry((q.into(), n)).or_default().entry(p).or_default().extend(v);
        };
        let tr = batch.table(EstimatorKind::True);
        let li = batch.table(EstimatorKind::Linear);
        let alo = batch.table(EstimatorKind::Alo);
        push_np("true", magnitudes(tr));
        push_np("true_minus_linear", differences(tr, li));
        push_np("linear_minus_alo", differences(li, alo));
        for t in &batch.tables {
            if let EstimatorKind::Trak(k) = t.estimator {
                self.by_k.entry(("trak".into(), n, p)).or_default().entry(k).or_default().extend(magnitudes(Some(t)));
            }
        }
        if let Some(dep_alo) = batch.dependent_table(EstimatorKind::Alo) {
            for t in &batch.dependent {
                if let EstimatorKind::Trak(k) = t.estimator {
                    let ratios: Vec<f64> =
                        t.entries.iter().filter_map(|(&(tid, i), v)| Some(v.value()? / dep_alo.get(i, tid)?)).collect();
                    self.by_k
                        .entry(("dependent_trak_over_alo".into(), n, p))
                        .or_default()
                        .entry(k)
                        .or_default()
                        .extend(ratios);
                }
            }
        }
    }

    fn fits(&self) -> Vec<(String, std::result::Result<ScalingFit, Error>)> {
        let run = |groups: &BTreeMap<usize, Vec<f64>>, axis| {
            let g: Vec<(f64, Vec<f64>)> = groups.iter().map(|(&v, s)| (v as f64, s.clone())).collect();
            scaling_fit(&g, axis)
        };
        let mut out = Vec::new();
        for ((q, p), groups) in &self.by_n {
            if groups.len() >= 3 {
                out.push((format!("{q}@p={p}"), run(groups, ScalingAxis::N)));
            }
        }
        for ((q, n), groups) in &self.by_p {
            if groups.len() >= 3 {
                out.push((format!("{q}@n={n}"), run(groups, ScalingAxis::P)));
            }
        }
        for ((q, n, p), groups) in &self.by_k {
            if groups.len() >= 3 {
                out.push((format!("{q}@n={n},p={p}"), run(groups, ScalingAxis::K)));
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub summary: String,
    pub scaling: Vec<(String, ScalingFit)>,
    pub failures: Vec<String>,
    pub runs: usize,
}

fn design_config(cfg: &ExperimentConfig, spec: &ModelSpec, n: usize, trial: u64) -> DesignConfig {
    let base = match spec.classes() {
        Some(k) => DesignConfig::multiclass(n, spec.p, k, cfg.seed),
        None => DesignConfig::glm(n, spec.p, cfg.seed),
    };
    let covariance_rule = cfg.covariance.unwrap_or(base.covariance_rule);
    DesignConfig { decay: cfg.decay, trial, covariance_rule, ..base }
}

/// Synthetic protocol over the `n × p × trial` grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let probe = cfg.spec(cfg.ps[0])?;
    if matches!(probe.kind, ModelKind::OneHiddenLayer { .. }) {
        return Err(Error::Config(
            "the synthetic protocol covers the linear and multiclass kinds; use `influence` with a dataset for the network".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out)?;
    let mut report = ExperimentReport::default();
    let mut summary = String::new();
    let _ = writeln!(summary, "model: {}", probe.name());
    let _ = writeln!(summary, "seed: {}", cfg.seed);
    let _ = writeln!(
        summary,
        "estimators: {}",
        cfg.estimator_kinds().iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
    );
    let mut mags = Magnitudes::default();
    for &n in &cfg.ns {
        for &p in &cfg.ps {
            let spec = cfg.spec(p)?;
            for trial in 0..cfg.trials as u64 {
                let name = format!("n{n}_p{p}_trial{trial}");
                let _ = writeln!(summary, "\nrun {name}");
                report.runs += 1;
                let outcome = (|| -> Result<Batch> {
                    let design = design_config(cfg, &spec, n, trial);
                    let sample = synthetic_sample(&spec, &design, cfg.tests)?;
                    let removed = select_removed(n, cfg.removed, cfg.seed, trial)?;
                    let bs = BatchSpec {
                        removed,
                        estimators: cfg.estimator_kinds(),
                        dependent: cfg.dependent,
                        seed: cfg.seed,
                        trial,
                        solver: cfg.solver,
                    };
                    run_batch(&spec, &sample.train, &sample.test, &bs)
                })();
                match outcome {
                    Ok(batch) => {
                        write_batch(&batch, &cfg.topk, &cfg.out.join(&name), &mut summary)?;
                        report.failures.extend(batch.failures.iter().map(|f| format!("{name}: {f}")));
                        mags.add(n, p, &batch);
                    }
                    Err(e) => {
                        let _ = writeln!(summary, "  failure: {e}");
                        report.failures.push(format!("{name}: {e}"));
                    }
                }
            }
        }
    }
    let mut scaling_csv = String::from("quantity,axis,value,median,q1,q3\n");
    let fits = mags.fits();
    if !fits.is_empty() {
        let _ = writeln!(summary, "\nscaling");
    }
    for (quantity, fit) in fits {
        match fit {
            Ok(fit) => {
                let _ = writeln!(
                    summary,
                    "  {quantity} vs {}: slope {:.4} intercept {:.4}",
                    fit.axis, fit.slope, fit.intercept
                );
                for pt in &fit.summary {
                    let _ = writeln!(
                        scaling_csv,
                        "{quantity},{},{},{},{},{}",
                        fit.axis,
                        format_real(pt.value),
                        format_real(pt.median),
                        format_real(pt.q1),
                        format_real(pt.q3)
                    );
                }
                report.scaling.push((quantity, fit));
            }
            Err(e) => {
                let _ = writeln!(summary, "  {quantity}: {e}");
            }
        }
    }
    let _ = writeln!(summary, "\nfailures: {}", report.failures.len());
    for f in &report.failures {
        let _ = writeln!(summary, "  {f}");
    }
    std::fs::write(cfg.out.join("scaling.csv"), scaling_csv)?;
    std::fs::write(cfg.out.join("summary.txt"), &summary)?;
    report.summary = summary;
    Ok(report)
}

/// Estimators on a dataset supplied as CSV files, for any model kind.
pub fn run_on_dataset(
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    train: &Dataset,
    test: &Dataset,
) -> Result<ExperimentReport> {
    std::fs::create_dir_all(&cfg.out)?;
    let mut report = ExperimentReport { runs: 1, ..Default::default() };
    let mut summary = format!("model: {}\nseed: {}\nn: {}\n", spec.name(), cfg.seed, train.n());
    let tests = test.select(&(0..cfg.tests.min(test.n())).collect::<Vec<_>>());
    let removed = select_removed(train.n(), cfg.removed.min(train.n()), cfg.seed, 0)?;
    let bs = BatchSpec {
        removed,
        estimators: cfg.estimator_kinds(),
        dependent: cfg.dependent,
        seed: cfg.seed,
        trial: 0,
        solver: cfg.solver,
    };
    let batch = run_batch(spec, train, &tests, &bs)?;
    if let Ok(acc) = accuracy(spec, train, &batch.fit.beta) {
        let _ = writeln!(summary, "train accuracy: {acc:.4}");
        if let Ok(acc) = accuracy(spec, test, &batch.fit.beta) {
            let _ = writeln!(summary, "test accuracy: {acc:.4}");
        }
    }
    write_batch(&batch, &cfg.topk, &cfg.out, &mut summary)?;
    report.failures = batch.failures.clone();
    std::fs::write(cfg.out.join("summary.txt"), &summary)?;
    report.summary = summary;
    Ok(report)
}

/// Correlations and alignments from tables already on disk.
pub fn report_from_dir(dir: &Path, topk: &[usize]) -> Result<String> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut independent = Vec::new();
    let mut dependent = Vec::new();
    for path in paths {
        let file = std::io::BufReader::new(File::open(&path)?);
        let Ok(table) = InfluenceTable::read_csv(file) else { continue };
        let dep = path.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.starts_with("dependent_"));
        if dep {
            dependent.push(table)
        } else {
            independent.push(table)
        }
    }
    if independent.is_empty() && dependent.is_empty() {
        return Err(Error::Config(format!("no influence tables in {}", dir.display())));
    }
    let mut summary = String::new();
    if !independent.is_empty() {
        write_correlations(&mut summary, "independent", &independent);
    }
    if !dependent.is_empty() {
        write_correlations(&mut summary, "dependent", &dependent);
    }
    let (rows, errors) = alignments(&independent, topk);
    write_alignment_csv(&rows, &dir.join("alignment.csv"))?;
    for (kind, a) in &rows {
        let _ = writeln!(
            summary,
            "  alignment {kind} {} k={}: exact {}/{} overlap {:.4}",
            a.side, a.k, a.exact_match_count, a.test_points, a.overlap_ratio
        );
    }
    for e in errors {
        let _ = writeln!(summary, "  failure: {e}");
    }
    std::fs::write(dir.join("summary.txt"), &summary)?;
    Ok(summary)
}

//! Influence estimators: exact leave-one-out, linearized, ALO and projected
//! TRAK (full and simplified), plus the Gaussian projection.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{predict, Dataset, LossDerivatives, ModelSpec};
use crate::rng::{self, Purpose};
use crate::solver::{fit_loo, weighted_gram, FitResult, LinearizedProblem, SolverOptions};

/// ALO/TRAK denominators at or below this are reported as breakdowns.
pub const DENOM_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    True,
    Linear,
    Alo,
    Trak(usize),
    TrakSimplified(usize),
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::True => "True",
            EstimatorKind::Linear => "Linear",
            EstimatorKind::Alo => "ALO",
            EstimatorKind::Trak(_) => "TRAK",
            EstimatorKind::TrakSimplified(_) => "TRAKSimplified",
        }
    }

    pub fn projection_dim(&self) -> Option<usize> {
        match *self {
            EstimatorKind::Trak(k) | EstimatorKind::TrakSimplified(k) => Some(k),
            _ => None,
        }
    }

    pub fn from_parts(label: &str, k: Option<usize>) -> Result<Self> {
        let need_k = || k.ok_or_else(|| Error::Parse(format!("estimator {label} needs k")));
        Ok(match label.to_ascii_lowercase().as_str() {
            "true" => EstimatorKind::True,
            "linear" => EstimatorKind::Linear,
            "alo" => EstimatorKind::Alo,
            "trak" => EstimatorKind::Trak(need_k()?),
            "traksimplified" | "trak-simplified" | "trak_simplified" => EstimatorKind::TrakSimplified(need_k()?),
            other => return Err(Error::Parse(format!("unknown estimator {other}"))),
        })
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.projection_dim() {
            Some(k) => write!(f, "{}({k})", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

/// A test point `z_new = (x, y)`. The label matters only for the multiclass
/// margin predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct TestPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl TestPoint {
    pub fn from_dataset(data: &Dataset, i: usize) -> Self {
        Self { x: data.x(i), y: data.y(i) }
    }
}

/// `f(x_new; β̂_{/i}) - f(x_new; β̂)` from an already computed refit.
pub fn influence_true_from(spec: &ModelSpec, fit: &FitResult, loo: &FitResult, z_new: &TestPoint) -> Result<f64> {
    let after = predict(spec, &z_new.x, z_new.y, loo.beta.as_slice())?;
    let before = predict(spec, &z_new.x, z_new.y, fit.beta.as_slice())?;
    Ok(after - before)
}

/// Exact influence of training row `i` on `z_new`, refitting without row `i`
/// from a warm start at `β̂`.
pub fn influence_true(
    spec: &ModelSpec,
    data: &Dataset,
    fit: &FitResult,
    i: usize,
    z_new: &TestPoint,
    opts: &SolverOptions,
) -> Result<f64> {
    if !fit.converged {
        return Err(Error::AnchorNotConverged);
    }
    let loo = loo_refit(spec, data, fit, i, opts)?;
    influence_true_from(spec, fit, &loo, z_new)
}

/// Converged refit `β̂_{/i}` or `LooRefitFailed(i)`.
pub fn loo_refit(
    spec: &ModelSpec,
    data: &Dataset,
    fit: &FitResult,
    i: usize,
    opts: &SolverOptions,
) -> Result<FitResult> {
    match fit_loo(spec, data, i, &fit.beta, opts) {
        Ok(loo) if loo.converged => Ok(loo),
        Ok(_) | Err(Error::SingularHessian) | Err(Error::NonFiniteObjective) => Err(Error::LooRefitFailed(i)),
        Err(e) => Err(e),
    }
}

/// `g_newᵀ(β̆_{/i} - β̆)`.
pub fn influence_linear(
    problem: &LinearizedProblem,
    brb: &FitResult,
    brb_loo: &FitResult,
    g_new: &DVector<f64>,
) -> Result<f64> {
    if !brb.converged || !brb_loo.converged {
        return Err(Error::AnchorNotConverged);
    }
    if g_new.len() != problem.d() || brb.beta.len() != problem.d() || brb_loo.beta.len() != problem.d() {
        return Err(Error::Dimension("gradient and parameter lengths must equal d".into()));
    }
    Ok(g_new.dot(&(&brb_loo.beta - &brb.beta)))
}

/// Loss derivatives `ℓ̇_j, ℓ̈_j` of the linearized problem at `β̆`.
fn derivatives_at(problem: &LinearizedProblem, brb: &FitResult) -> Result<(DVector<f64>, DVector<f64>)> {
    if !brb.converged {
        return Err(Error::AnchorNotConverged);
    }
    if brb.beta.len() != problem.d() {
        return Err(Error::Dimension("β̆ length must equal d".into()));
    }
    let s = problem.predictor(&brb.beta);
    let n = problem.n();
    let mut first = DVector::zeros(n);
    let mut second = DVector::zeros(n);
    for j in 0..n {
        let LossDerivatives { first: a, second: b, .. } = problem.loss.derivatives(problem.responses[j], s[j])?;
        first[j] = a;
        second[j] = b;
    }
    Ok((first, second))
}

/// ALO influence with one Cholesky factorization of
/// `H = Gᵀ diag[ℓ̈(β̆)] G` shared by all `(i, z_new)` pairs.
#[derive(Clone, Debug)]
pub struct AloEstimator {
    rows: DMatrix<f64>,
    first: DVector<f64>,
    second: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl AloEstimator {
    pub fn new(problem: &LinearizedProblem, brb: &FitResult) -> Result<Self> {
        let (first, second) = derivatives_at(problem, brb)?;
        let h = weighted_gram(&problem.rows, &second);
        let chol = h.cholesky().ok_or(Error::SingularAloHessian)?;
        Ok(Self { rows: problem.rows.clone(), first, second, chol })
    }

    pub fn first_derivative(&self, i: usize) -> f64 {
        self.first[i]
    }

    pub fn second_derivative(&self, i: usize) -> f64 {
        self.second[i]
    }

    /// `H⁻¹ g_i`.
    pub fn solve_row(&self, i: usize) -> DVector<f64> {
        self.chol.solve(&self.rows.row(i).transpose())
    }

    /// Leverage `ℓ̈_i g_iᵀ H⁻¹ g_i`.
    pub fn leverage(&self, i: usize) -> f64 {
        self.second[i] * self.rows.row(i).transpose().dot(&self.solve_row(i))
    }

    /// Denominator `1 - ℓ̈_i g_iᵀ H⁻¹ g_i`.
    pub fn denominator(&self, i: usize) -> f64 {
        1.0 - self.leverage(i)
    }

    pub fn influence(&self, i: usize, g_new: &DVector<f64>) -> Result<f64> {
        Ok(self.influence_many(i, std::slice::from_ref(g_new))?[0])
    }

    /// Influence of row `i` on several test gradients, sharing one solve.
    pub fn influence_many(&self, i: usize, g_new: &[DVector<f64>]) -> Result<Vec<f64>> {
        let n = self.rows.nrows();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let hinv_g = self.solve_row(i);
        let gi = self.rows.row(i).transpose();
        let denom = 1.0 - self.second[i] * gi.dot(&hinv_g);
        if denom <= DENOM_FLOOR {
            return Err(Error::AloBreakdown(i));
        }
        g_new
            .iter()
            .map(|g| {
                if g.len() != gi.len() {
                    return Err(Error::Dimension("g_new length must equal d".into()));
                }
                Ok(self.first[i] * g.dot(&hinv_g) / denom)
            })
            .collect()
    }
}

/// One-shot ALO influence; builds (and discards) the factorization.
pub fn influence_alo(problem: &LinearizedProblem, brb: &FitResult, i: usize, g_new: &DVector<f64>) -> Result<f64> {
    AloEstimator::new(problem, brb)?.influence(i, g_new)
}

/// Dense `d × k` Gaussian sketch; features are `φ = Sᵀ g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub matrix: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl Projection {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.ncols() > matrix.nrows() {
            return Err(Error::ProjectionDimension { k: matrix.ncols(), d: matrix.nrows() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection"));
        }
        Ok(Self { matrix, seed: None })
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn project(&self, g: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(g)
    }
}

/// i.i.d. `N(0, 1)` entries, no `1/√k` scaling.
pub fn make_projection(d: usize, k: usize, seed: u64) -> Result<Projection> {
    make_projection_for_trial(d, k, seed, 0)
}

pub fn make_projection_for_trial(d: usize, k: usize, seed: u64, trial: u64) -> Result<Projection> {
    if k == 0 || k > d {
        return Err(Error::ProjectionDimension { k, d });
    }
    let mut rng = rng::stream(seed, trial, Purpose::Projection);
    let matrix = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    Ok(Projection { matrix, seed: Some(seed) })
}

/// Projected TRAK influence. Factorizes `Φᵀ diag[ℓ̈] Φ` (full form) and `ΦᵀΦ`
/// (simplified form) once per projection.
#[derive(Clone, Debug)]
pub struct TrakEstimator {
    projection: Projection,
    features: DMatrix<f64>,
    first: DVector<f64>,
    second: DVector<f64>,
    weighted: Cholesky<f64, Dyn>,
    plain: Cholesky<f64, Dyn>,
}

impl TrakEstimator {
    pub fn new(problem: &LinearizedProblem, brb: &FitResult, projection: &Projection) -> Result<Self> {
        if projection.d() != problem.d() {
            return Err(Error::Dimension(format!(
                "projection has d = {}, problem has d = {}",
                projection.d(),
                problem.d()
            )));
        }
        let (first, second) = derivatives_at(problem, brb)?;
        let features = &problem.rows * &projection.matrix;
        let weighted = weighted_gram(&features, &second).cholesky().ok_or(Error::SingularProjectedGram)?;
        let ones = DVector::from_element(problem.n(), 1.0);
        let plain = weighted_gram(&features, &ones).cholesky().ok_or(Error::SingularProjectedGram)?;
        Ok(Self { projection: projection.clone(), features, first, second, weighted, plain })
    }

    pub fn k(&self) -> usize {
        self.projection.k()
    }

    /// `1 - ℓ̈_i φ_iᵀ(Φᵀ diag[ℓ̈] Φ)⁻¹ φ_i`.
    pub fn denominator(&self, i: usize) -> f64 {
        let phi = self.features.row(i).transpose();
        1.0 - self.second[i] * phi.dot(&self.weighted.solve(&phi))
    }

    pub fn influence(&self, i: usize, g_new: &DVector<f64>, simplified: bool) -> Result<f64> {
        Ok(self.influence_many(i, std::slice::from_ref(g_new), simplified)?[0])
    }

    pub fn influence_many(&self, i: usize, g_new: &[DVector<f64>], simplified: bool) -> Result<Vec<f64>> {
        let n = self.features.nrows();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let phi = self.features.row(i).transpose();
        let (solved, denom) = if simplified {
            (self.plain.solve(&phi), 1.0)
        } else {
            let solved = self.weighted.solve(&phi);
            let denom = 1.0 - self.second[i] * phi.dot(&solved);
            if denom <= DENOM_FLOOR {
                return Err(Error::AloBreakdown(i));
            }
            (solved, denom)
        };
        g_new
            .iter()
            .map(|g| {
                if g.len() != self.projection.d() {
                    return Err(Error::Dimension("g_new length must equal d".into()));
                }
                let phi_new = self.projection.project(g);
                Ok(self.first[i] * phi_new.dot(&solved) / denom)
            })
            .collect()
    }
}

/// One-shot TRAK influence; builds (and discards) the projected factorization.
pub fn influence_trak(
    problem: &LinearizedProblem,
    brb: &FitResult,
    i: usize,
    g_new: &DVector<f64>,
    projection: &Projection,
    simplified: bool,
) -> Result<f64> {
    TrakEstimator::new(problem, brb, projection)?.influence(i, g_new, simplified)
}

/// `‖β̆ - β̂‖`, the drift of the linearized fit away from its anchor.
pub fn anchor_gap(problem: &LinearizedProblem, brb: &FitResult) -> f64 {
    (&brb.beta - &problem.anchor).norm()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InfluenceValue {
    Value(f64),
    Breakdown,
}

impl InfluenceValue {
    pub fn value(&self) -> Option<f64> {
        match *self {
            InfluenceValue::Value(v) => Some(v),
            InfluenceValue::Breakdown => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TableMetadata {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub seed: u64,
    pub model: String,
}

/// `(test id, train index) → influence` for one estimator, kept in
/// `(test_id, train_index)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceTable {
    pub estimator: EstimatorKind,
    pub entries: BTreeMap<(u64, usize), InfluenceValue>,
    pub metadata: TableMetadata,
}

pub const TABLE_HEADER: &str = "estimator,k,train_index,test_id,value,breakdown_flag";

/// 17 significant digits, round-trip exact.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

impl InfluenceTable {
    pub fn new(estimator: EstimatorKind, metadata: TableMetadata) -> Self {
        Self { estimator, entries: BTreeMap::new(), metadata }
    }

    pub fn insert(&mut self, train: usize, test: u64, value: InfluenceValue) -> Result<()> {
        if let InfluenceValue::Value(v) = value {
            if !v.is_finite() {
                return Err(Error::NonFinite("influence value"));
            }
        }
        self.entries.insert((test, train), value);
        Ok(())
    }

    pub fn get(&self, train: usize, test: u64) -> Option<f64> {
        self.entries.get(&(test, train)).and_then(InfluenceValue::value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn breakdowns(&self) -> usize {
        self.entries.values().filter(|v| matches!(v, InfluenceValue::Breakdown)).count()
    }

    pub fn test_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.entries.keys().map(|&(t, _)| t).collect();
        ids.dedup();
        ids
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TABLE_HEADER}")?;
        let label = self.estimator.label();
        let k = self.estimator.projection_dim().map(|k| k.to_string()).unwrap_or_default();
        for (&(test, train), value) in &self.entries {
            match value {
                InfluenceValue::Value(v) => writeln!(out, "{label},{k},{train},{test},{},0", format_real(*v))?,
                InfluenceValue::Breakdown => writeln!(out, "{label},{k},{train},{test},,1")?,
            }
        }
        Ok(())
    }

    /// Reads one table (all rows must name the same estimator).
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end() != TABLE_HEADER {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut table: Option<InfluenceTable> = None;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse(format!("line {}: {line:?}", lineno + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(bad());
            }
            let k = if fields[1].is_empty() { None } else { Some(parse(fields[1]).map_err(|_| bad())?) };
            let estimator = EstimatorKind::from_parts(fields[0], k)?;
            let train: usize = parse(fields[2]).map_err(|_| bad())?;
            let test: u64 = parse(fields[3]).map_err(|_| bad())?;
            let value = match fields[5] {
                "0" => InfluenceValue::Value(parse(fields[4]).map_err(|_| bad())?),
                "1" => InfluenceValue::Breakdown,
                _ => return Err(bad()),
            };
            let t = table.get_or_insert_with(|| InfluenceTable::new(estimator, TableMetadata::default()));
            if t.estimator != estimator {
                return Err(Error::Parse("mixed estimators in one table".into()));
            }
            t.insert(train, test, value)?;
        }
        table.ok_or_else(|| Error::Parse("empty influence table".into()))
    }
}

fn parse<T: FromStr>(s: &str) -> std::result::Result<T, T::Err> {
    s.trim().parse()
}

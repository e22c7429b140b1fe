//! Synthetic experiment inputs: Toeplitz-covariance Gaussian designs,
//! normalized true parameters and responses drawn from each model kind.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::format_real;
use crate::model::{predict, sigmoid, softplus, Dataset, ModelKind, ModelSpec};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BetaNormRule {
    /// `‖β*‖² = p` per parameter vector; multiclass parameters are scaled
    /// jointly to `‖β*‖² = (K-1)p`.
    #[default]
    NormSqEqualsP,
}

/// How the Toeplitz correlation matrix is rescaled into `Σ = c·T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceRule {
    /// `β*ᵀ Σ β* = 1`; with several class rows `W_k`, the mean of
    /// `W_kᵀ Σ W_k` is 1.
    UnitSignal,
    /// Spectral norm `‖Σ‖ = 1/‖β*‖` (multiclass protocol).
    InverseBetaNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub n: usize,
    pub p: usize,
    /// Class count; values below 3 mean a single parameter vector (`d = p`).
    pub classes: usize,
    pub decay: f64,
    pub seed: u64,
    pub trial: u64,
    pub beta_norm_rule: BetaNormRule,
    pub covariance_rule: CovarianceRule,
}

impl DesignConfig {
    pub fn glm(n: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            classes: 2,
            decay: 0.1,
            seed,
            trial: 0,
            beta_norm_rule: BetaNormRule::NormSqEqualsP,
            covariance_rule: CovarianceRule::UnitSignal,
        }
    }

    pub fn multiclass(n: usize, p: usize, classes: usize, seed: u64) -> Self {
        Self { classes, covariance_rule: CovarianceRule::InverseBetaNorm, ..Self::glm(n, p, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config("n and p must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::Config(format!("decay {} outside [0, 1)", self.decay)));
        }
        Ok(())
    }

    pub fn parameter_dim(&self) -> usize {
        if self.classes >= 3 {
            (self.classes - 1) * self.p
        } else {
            self.p
        }
    }
}

/// `T_{jj'} = decay^{|j-j'|}`.
pub fn toeplitz(p: usize, decay: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| decay.powi(i.abs_diff(j) as i32))
}

/// `n` i.i.d. rows from `N(0, Σ)` via the Cholesky factor of `Σ`.
pub fn gaussian_rows<R: Rng + ?Sized>(n: usize, covariance: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let chol =
        covariance.clone().cholesky().ok_or_else(|| Error::Config("covariance is not positive definite".into()))?;
    Ok(gaussian_rows_from_factor(n, &chol.l(), rng))
}

fn gaussian_rows_from_factor<R: Rng + ?Sized>(n: usize, lower: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let p = lower.nrows();
    // Row-major draw order so the i-th row only depends on the first i·p normals.
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        }
    }
    z * lower.transpose()
}

/// `β*` with i.i.d. standard normal entries, rescaled to the norm rule.
pub fn make_true_beta(cfg: &DesignConfig) -> Result<DVector<f64>> {
    cfg.validate()?;
    let d = cfg.parameter_dim();
    let mut rng = rng::stream(cfg.seed, cfg.trial, Purpose::TrueBeta);
    let mut beta = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let BetaNormRule::NormSqEqualsP = cfg.beta_norm_rule;
    let blocks = d / cfg.p;
    let target = (blocks * cfg.p) as f64;
    beta *= (target / beta.norm_squared()).sqrt();
    Ok(beta)
}

/// Generation state for one synthetic configuration: correlation matrix,
/// true parameters and the resulting covariance scale.
#[derive(Clone, Debug)]
pub struct SyntheticDesign {
    pub config: DesignConfig,
    pub beta_star: DVector<f64>,
    pub correlation: DMatrix<f64>,
    pub scale: f64,
    lower: DMatrix<f64>,
}

impl SyntheticDesign {
    pub fn new(cfg: &DesignConfig) -> Result<Self> {
        cfg.validate()?;
        let beta_star = make_true_beta(cfg)?;
        let correlation = toeplitz(cfg.p, cfg.decay);
        let scale = match cfg.covariance_rule {
            CovarianceRule::UnitSignal => {
                // Multiclass: the class rows share one scale, fixed by their mean quadratic form.
                let blocks = beta_star.len() / cfg.p;
                let w = DMatrix::from_column_slice(cfg.p, blocks, beta_star.as_slice());
                let quad = (w.transpose() * &correlation * &w).trace();
                blocks as f64 / quad
            }
            CovarianceRule::InverseBetaNorm => {
                let spectral = correlation.clone().symmetric_eigenvalues().max();
                1.0 / (beta_star.norm() * spectral)
            }
        };
        let chol = correlation.clone().cholesky();
        assert!(chol.is_some(), "Toeplitz matrix with decay in [0, 1) is positive definite");
        let lower = chol.unwrap().l() * scale.sqrt();
        Ok(Self { config: *cfg, beta_star, correlation, scale, lower })
    }

    /// `Σ = c·T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.correlation * self.scale
    }

    /// The `n` training rows.
    pub fn features(&self) -> DMatrix<f64> {
        let mut rng = rng::stream(self.config.seed, self.config.trial, Purpose::Design);
        gaussian_rows_from_factor(self.config.n, &self.lower, &mut rng)
    }

    /// `m` fresh rows from the same distribution, independent of the training rows.
    pub fn test_features(&self, m: usize) -> DMatrix<f64> {
        let mut rng = rng::stream(self.config.seed, self.config.trial, Purpose::TestDesign);
        gaussian_rows_from_factor(m, &self.lower, &mut rng)
    }
}

/// Training design for `cfg`: rows i.i.d. `N(0, c·T)`.
pub fn toeplitz_design(cfg: &DesignConfig) -> Result<DMatrix<f64>> {
    Ok(SyntheticDesign::new(cfg)?.features())
}

pub fn sample_responses(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    beta_star: &DVector<f64>,
    seed: u64,
) -> Result<DVector<f64>> {
    let mut rng = rng::stream(seed, 0, Purpose::Responses);
    sample_responses_with(spec, x, beta_star, &mut rng)
}

/// Responses `y_i ~ q(· | f(x_i; β*))` for the model's likelihood.
pub fn sample_responses_with<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    beta_star: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if x.ncols() != spec.p || beta_star.len() != spec.d {
        return Err(Error::Dimension(format!(
            "design is {}×{}, β* has length {}; the model wants p = {}, d = {}",
            x.nrows(),
            x.ncols(),
            beta_star.len(),
            spec.p,
            spec.d
        )));
    }
    let n = x.nrows();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        y[i] = match spec.kind {
            ModelKind::LinearSquared | ModelKind::OneHiddenLayer { .. } => {
                let f = predict(spec, &row, 0.0, beta_star.as_slice())?;
                let noise: f64 = StandardNormal.sample(rng);
                f + noise
            }
            ModelKind::LinearLogistic => {
                let f = predict(spec, &row, 0.0, beta_star.as_slice())?;
                if rng.random::<f64>() < sigmoid(f) {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::LinearPoissonSoftplus => {
                let f = predict(spec, &row, 0.0, beta_star.as_slice())?;
                let mean = softplus(f);
                if mean > 0.0 {
                    Poisson::new(mean).map_err(|e| Error::Config(format!("poisson mean {mean}: {e}")))?.sample(rng)
                } else {
                    0.0
                }
            }
            ModelKind::MulticlassMargin { classes } => {
                let p = spec.p;
                let mut logits: Vec<f64> = (0..classes - 1)
                    .map(|k| row.iter().zip(&beta_star.as_slice()[k * p..(k + 1) * p]).map(|(a, b)| a * b).sum())
                    .collect();
                logits.push(0.0);
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
                let total: f64 = weights.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut label = classes;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        label = k + 1;
                        break;
                    }
                }
                label as f64
            }
        };
    }
    Ok(y)
}

/// A synthetic training set plus independently drawn test points.
#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub design: SyntheticDesign,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn synthetic_sample(spec: &ModelSpec, cfg: &DesignConfig, test_count: usize) -> Result<SyntheticSample> {
    if cfg.p != spec.p || cfg.parameter_dim() != spec.d {
        return Err(Error::Config(format!(
            "design (p = {}, d = {}) does not match the model (p = {}, d = {})",
            cfg.p,
            cfg.parameter_dim(),
            spec.p,
            spec.d
        )));
    }
    let design = SyntheticDesign::new(cfg)?;
    let x = design.features();
    let mut rng = rng::stream(cfg.seed, cfg.trial, Purpose::Responses);
    let y = sample_responses_with(spec, &x, &design.beta_star, &mut rng)?;
    let train = Dataset::new(spec, x, y)?;

    let m = test_count.max(1);
    let xt = design.test_features(m);
    let mut rng = rng::stream(cfg.seed, cfg.trial, Purpose::TestResponses);
    let yt = sample_responses_with(spec, &xt, &design.beta_star, &mut rng)?;
    let test = Dataset::new(spec, xt, yt)?;
    Ok(SyntheticSample { design, train, test })
}

/// Sidecar describing how a dataset CSV was produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub n: usize,
    pub p: usize,
    pub model: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Writes `y,x1,…,xp` rows with a header line.
pub fn write_dataset_csv<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    let header: Vec<String> = std::iter::once("y".to_string()).chain((1..=data.p()).map(|j| format!("x{j}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    let x = data.features();
    let mut line = String::new();
    for i in 0..data.n() {
        line.clear();
        line.push_str(&format_real(data.y(i)));
        for j in 0..data.p() {
            line.push(',');
            line.push_str(&format_real(x[(i, j)]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(spec: &ModelSpec, input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.ok_or(Error::EmptyDataset)?;
    let cols = header.split(',').count();
    if cols != spec.p + 1 {
        return Err(Error::Dimension(format!("CSV has {} feature columns, model wants p = {}", cols - 1, spec.p)));
    }
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        if vals.len() != cols {
            return Err(Error::Parse(format!("line {}: {} fields, expected {cols}", lineno + 2, vals.len())));
        }
        ys.push(vals[0]);
        xs.extend_from_slice(&vals[1..]);
    }
    let n = ys.len();
    Dataset::new(spec, DMatrix::from_row_slice(n, spec.p, &xs), DVector::from_vec(ys))
}

/// Writes `<stem>.csv` and `<stem>.json` next to each other.
pub fn save_dataset(data: &Dataset, meta: &DatasetMetadata, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
    write_dataset_csv(data, &mut out)?;
    out.flush()?;
    let sidecar = File::create(dir.join(format!("{stem}.json")))?;
    serde_json::to_writer_pretty(sidecar, meta)?;
    Ok(())
}

pub fn load_dataset(spec: &ModelSpec, path: &Path) -> Result<Dataset> {
    read_dataset_csv(spec, BufReader::new(File::open(path)?))
}

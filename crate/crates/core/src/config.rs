//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, lists are comma separated.
//!
//! ```text
//! model = multiclass
//! classes = 3
//! n = 512, 1024, 2048
//! p = 100
//! k = 50, 100, 150
//! estimators = true, linear, alo, trak
//! removed = 100
//! tests = 10
//! seed = 7
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::CovarianceRule;
use crate::error::{Error, Result};
use crate::influence::EstimatorKind;
use crate::model::{Activation, ModelKind, ModelSpec};
use crate::solver::SolverOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorFamily {
    True,
    Linear,
    Alo,
    Trak,
    TrakSimplified,
}

impl FromStr for EstimatorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "true" => Ok(Self::True),
            "linear" => Ok(Self::Linear),
            "alo" => Ok(Self::Alo),
            "trak" => Ok(Self::Trak),
            "trak_simplified" | "traksimplified" | "simplified" => Ok(Self::TrakSimplified),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    pub classes: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub ks: Vec<usize>,
    pub trials: usize,
    pub removed: usize,
    pub tests: usize,
    pub estimators: Vec<EstimatorFamily>,
    /// Also evaluate each removed point on itself (`z_new = z_i`).
    pub dependent: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub decay: f64,
    /// `None` picks the default for the model kind.
    pub covariance: Option<CovarianceRule>,
    /// List sizes for rank alignment.
    pub topk: Vec<usize>,
    pub solver: SolverOptions,
    /// Training and test CSVs for single-dataset runs.
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "logistic".into(),
            classes: 3,
            hidden: 8,
            activation: Activation::Tanh,
            ns: vec![1024],
            ps: vec![100],
            ks: vec![],
            trials: 1,
            removed: 100,
            tests: 10,
            estimators: vec![EstimatorFamily::True, EstimatorFamily::Linear, EstimatorFamily::Alo],
            dependent: false,
            seed: 0,
            out: PathBuf::from("results"),
            decay: 0.1,
            covariance: None,
            topk: vec![1, 5, 10],
            solver: SolverOptions::default(),
            train: None,
            test: None,
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    match s.trim().to_ascii_lowercase().as_str() {
        "tanh" => Ok(Activation::Tanh),
        "identity" | "linear" => Ok(Activation::Identity),
        "sigmoid" => Ok(Activation::Sigmoid),
        other => Err(Error::Config(format!("unknown activation {other:?}"))),
    }
}

pub fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {s:?}"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.to_ascii_lowercase(),
            "classes" | "K" => self.classes = scalar(key, value)?,
            "hidden" => self.hidden = scalar(key, value)?,
            "activation" => self.activation = parse_activation(value)?,
            "n" => self.ns = list(key, value)?,
            "p" => self.ps = list(key, value)?,
            "k" => self.ks = list(key, value)?,
            "trials" => self.trials = scalar(key, value)?,
            "removed" => self.removed = scalar(key, value)?,
            "tests" => self.tests = scalar(key, value)?,
            "estimators" => self.estimators = list(key, value)?,
            "dependent" => self.dependent = parse_bool(key, value)?,
            "seed" => self.seed = scalar(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "decay" => self.decay = scalar(key, value)?,
            "covariance" => {
                self.covariance = Some(match value.to_ascii_lowercase().as_str() {
                    "unit_signal" => CovarianceRule::UnitSignal,
                    "inverse_beta_norm" | "spectral" => CovarianceRule::InverseBetaNorm,
                    other => return Err(Error::Config(format!("unknown covariance rule {other:?}"))),
                })
            }
            "topk" => self.topk = list(key, value)?,
            "tol_grad" => self.solver.tol_grad = Some(scalar(key, value)?),
            "max_iter" => self.solver.max_iter = scalar(key, value)?,
            "ridge" => self.solver.ridge = scalar(key, value)?,
            "divergence_guard" => self.solver.divergence_guard = scalar(key, value)?,
            "train" => self.train = Some(PathBuf::from(value)),
            "test" => self.test = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[usize]| {
            if v.is_empty() || v.contains(&0) {
                Err(Error::Config(format!("{name} must be a nonempty list of positive counts")))
            } else {
                Ok(())
            }
        };
        positive("n", &self.ns)?;
        positive("p", &self.ps)?;
        if self.trials == 0 || self.removed == 0 || self.tests == 0 {
            return Err(Error::Config("trials, removed and tests must be positive".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must be nonempty".into()));
        }
        let wants_trak =
            self.estimators.iter().any(|e| matches!(e, EstimatorFamily::Trak | EstimatorFamily::TrakSimplified));
        if wants_trak {
            positive("k", &self.ks)?;
        }
        if self.topk.contains(&0) {
            return Err(Error::Config("topk entries must be positive".into()));
        }
        self.spec(self.ps[0])?;
        Ok(())
    }

    /// Model for feature dimension `p`.
    pub fn spec(&self, p: usize) -> Result<ModelSpec> {
        let kind = match self.model.as_str() {
            "squared" | "linear_squared" | "least_squares" => ModelKind::LinearSquared,
            "logistic" | "linear_logistic" => ModelKind::LinearLogistic,
            "poisson" | "linear_poisson_softplus" => ModelKind::LinearPoissonSoftplus,
            "multiclass" | "multiclass_margin" => ModelKind::MulticlassMargin { classes: self.classes },
            "nn" | "one_hidden_layer" => ModelKind::OneHiddenLayer { hidden: self.hidden, activation: self.activation },
            other => return Err(Error::Config(format!("unknown model {other:?}"))),
        };
        ModelSpec::new(kind, p).map_err(|e| Error::Config(e.to_string()))
    }

    /// Estimators expanded over the projection dimensions.
    pub fn estimator_kinds(&self) -> Vec<EstimatorKind> {
        let mut out = Vec::new();
        for family in &self.estimators {
            match family {
                EstimatorFamily::True => out.push(EstimatorKind::True),
                EstimatorFamily::Linear => out.push(EstimatorKind::Linear),
                EstimatorFamily::Alo => out.push(EstimatorKind::Alo),
                EstimatorFamily::Trak => out.extend(self.ks.iter().map(|&k| EstimatorKind::Trak(k))),
                EstimatorFamily::TrakSimplified => {
                    out.extend(self.ks.iter().map(|&k| EstimatorKind::TrakSimplified(k)))
                }
            }
        }
        out.dedup();
        out
    }
}

//! Predictors `f(x, β)`, scalar losses `ℓ(y, z)` and the gradient feature map.
//!
//! Parameter layouts:
//!
//! * linear kinds: `β ∈ R^p`, `f = xᵀβ`.
//! * multiclass margin: `β ∈ R^{(K-1)p}` stored class-major, `β[k·p + j] = W[k, j]`,
//!   with the last class pinned to `W_K = 0`. The predictor is the true-class
//!   log-odds, so it depends on the label carried alongside `x`.
//! * one hidden layer: `β = (vec(W), v)` with `W ∈ R^{h×p}` vectorized column-major,
//!   `β[j·h + l] = W[l, j]`, and `f = vᵀσ(Wx)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise activation of the hidden layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn value(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
            Activation::Sigmoid => sigmoid(a),
        }
    }

    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
            Activation::Sigmoid => sigmoid(a) * sigmoid(-a),
        }
    }

    pub fn second_derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Identity => 0.0,
            Activation::Sigmoid => {
                let s = sigmoid(a);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    LinearSquared,
    LinearLogistic,
    LinearPoissonSoftplus,
    MulticlassMargin { classes: usize },
    OneHiddenLayer { hidden: usize, activation: Activation },
}

/// Scalar loss attached to a model kind, as a function of the prediction `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// `½(y - z)²`
    Squared,
    /// `log(1 + e^z) - y z`, `y ∈ {0, 1}`
    Logistic,
    /// `h(z) - y log h(z) + log y!` with `h = softplus`
    PoissonSoftplus,
    /// `log(1 + e^{-z})`; the label is already folded into `z`.
    Margin,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossDerivatives {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub p: usize,
    pub d: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Dimension("feature dimension p must be positive".into()));
        }
        let d = match kind {
            ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus => p,
            ModelKind::MulticlassMargin { classes } => {
                if classes < 3 {
                    return Err(Error::Dimension(format!(
                        "multiclass margin model needs K >= 3 classes, got {classes}"
                    )));
                }
                (classes - 1) * p
            }
            ModelKind::OneHiddenLayer { hidden, .. } => {
                if hidden == 0 {
                    return Err(Error::Dimension("hidden width must be positive".into()));
                }
                hidden * p + hidden
            }
        };
        Ok(Self { kind, p, d })
    }

    pub fn linear_squared(p: usize) -> Self {
        Self::new(ModelKind::LinearSquared, p).expect("p > 0")
    }

    pub fn logistic(p: usize) -> Self {
        Self::new(ModelKind::LinearLogistic, p).expect("p > 0")
    }

    pub fn poisson(p: usize) -> Self {
        Self::new(ModelKind::LinearPoissonSoftplus, p).expect("p > 0")
    }

    pub fn multiclass(classes: usize, p: usize) -> Result<Self> {
        Self::new(ModelKind::MulticlassMargin { classes }, p)
    }

    pub fn one_hidden_layer(hidden: usize, p: usize, activation: Activation) -> Result<Self> {
        Self::new(ModelKind::OneHiddenLayer { hidden, activation }, p)
    }

    pub fn loss(&self) -> LossKind {
        match self.kind {
            ModelKind::LinearSquared | ModelKind::OneHiddenLayer { .. } => LossKind::Squared,
            ModelKind::LinearLogistic => LossKind::Logistic,
            ModelKind::LinearPoissonSoftplus => LossKind::PoissonSoftplus,
            ModelKind::MulticlassMargin { .. } => LossKind::Margin,
        }
    }

    /// `f(x, β) = xᵀβ`, so linearization is exact.
    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus)
    }

    pub fn classes(&self) -> Option<usize> {
        match self.kind {
            ModelKind::MulticlassMargin { classes } => Some(classes),
            _ => None,
        }
    }

    /// Short identifier used in file metadata and the CLI.
    pub fn name(&self) -> String {
        match self.kind {
            ModelKind::LinearSquared => "squared".into(),
            ModelKind::LinearLogistic => "logistic".into(),
            ModelKind::LinearPoissonSoftplus => "poisson".into(),
            ModelKind::MulticlassMargin { classes } => format!("multiclass{classes}"),
            ModelKind::OneHiddenLayer { hidden, .. } => format!("nn{hidden}"),
        }
    }

    /// Checks that `y` lies in the response codomain of this kind.
    pub fn check_response(&self, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::NonFinite("responses"));
        }
        let ok = match self.kind {
            ModelKind::LinearSquared | ModelKind::OneHiddenLayer { .. } => true,
            ModelKind::LinearLogistic => y == 0.0 || y == 1.0,
            ModelKind::LinearPoissonSoftplus => y >= 0.0 && y.fract() == 0.0,
            ModelKind::MulticlassMargin { classes } => y.fract() == 0.0 && y >= 1.0 && y <= classes as f64,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidResponse { kind: self.kind_label(), value: y })
        }
    }

    fn kind_label(&self) -> &'static str {
        match self.kind {
            ModelKind::LinearSquared => "squared",
            ModelKind::LinearLogistic => "logistic",
            ModelKind::LinearPoissonSoftplus => "poisson",
            ModelKind::MulticlassMargin { .. } => "multiclass",
            ModelKind::OneHiddenLayer { .. } => "one-hidden-layer",
        }
    }

    fn check_dims(&self, x: &[f64], beta: &[f64]) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::Dimension(format!("x has length {}, expected p = {}", x.len(), self.p)));
        }
        if beta.len() != self.d {
            return Err(Error::Dimension(format!("beta has length {}, expected d = {}", beta.len(), self.d)));
        }
        Ok(())
    }
}

/// Training or test sample: `n × p` features and one response per row.
///
/// Multiclass labels are `1..=K`; label `K` is the reference class.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: DMatrix<f64>,
    responses: DVector<f64>,
}

impl Dataset {
    pub fn new(spec: &ModelSpec, features: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != responses.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} responses",
                features.nrows(),
                responses.len()
            )));
        }
        if features.ncols() != spec.p {
            return Err(Error::Dimension(format!("{} feature columns, expected p = {}", features.ncols(), spec.p)));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        for &y in responses.iter() {
            spec.check_response(y)?;
        }
        Ok(Self { features, responses })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn x(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn y(&self, i: usize) -> f64 {
        self.responses[i]
    }

    /// Rows selected by `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let features = self.features.select_rows(idx);
        let responses = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.responses[i]));
        Dataset { features, responses }
    }
}

/// Rows `∇f(x_i, β)` stacked into an `n × d` matrix.
#[derive(Clone, Debug)]
pub struct GradientMatrix {
    pub rows: DMatrix<f64>,
    pub beta: DVector<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl LossKind {
    pub fn check_response(self, y: f64) -> Result<()> {
        match self {
            LossKind::Logistic if y != 0.0 && y != 1.0 => Err(Error::InvalidResponse { kind: "logistic", value: y }),
            LossKind::PoissonSoftplus if y < 0.0 || y.fract() != 0.0 => {
                Err(Error::InvalidResponse { kind: "poisson", value: y })
            }
            _ => Ok(()),
        }
    }

    pub fn derivatives(self, y: f64, z: f64) -> Result<LossDerivatives> {
        if !z.is_finite() {
            return Err(Error::NonFinite("prediction"));
        }
        self.check_response(y)?;
        Ok(self.eval(y, z))
    }

    /// Unchecked evaluation for solver inner loops; responses are validated once
    /// when the dataset is built.
    pub(crate) fn eval(self, y: f64, z: f64) -> LossDerivatives {
        match self {
            LossKind::Squared => LossDerivatives { value: 0.5 * (y - z) * (y - z), first: z - y, second: 1.0 },
            LossKind::Logistic => {
                let s = sigmoid(z);
                LossDerivatives { value: softplus(z) - y * z, first: s - y, second: s * sigmoid(-z) }
            }
            LossKind::Margin => {
                LossDerivatives { value: softplus(-z), first: -sigmoid(-z), second: sigmoid(z) * sigmoid(-z) }
            }
            LossKind::PoissonSoftplus => {
                let h = softplus(z);
                let s = sigmoid(z);
                let one_minus_s = sigmoid(-z);
                let log_fact = if y > 0.0 { libm::lgamma(y + 1.0) } else { 0.0 };
                let (value, first, second) = if y == 0.0 {
                    (h, s, s * one_minus_s)
                } else {
                    let value = h - y * h.ln() + log_fact;
                    let first = s * (1.0 - y / h);
                    // σ(1-σ)(1 - y/h) + yσ²/h², regrouped to keep the cancellation
                    // inside a single difference.
                    let second = s * one_minus_s + y * s * (s - one_minus_s * h) / (h * h);
                    (value, first, second.max(0.0))
                };
                LossDerivatives { value, first, second }
            }
        }
    }
}

/// `(ℓ, ℓ̇, ℓ̈)` of the loss attached to `spec` at prediction `z`.
pub fn loss_derivatives(spec: &ModelSpec, y: f64, z: f64) -> Result<LossDerivatives> {
    if matches!(spec.kind, ModelKind::MulticlassMargin { .. }) {
        // The margin loss ignores y; the label only enters through f.
        spec.check_response(y)?;
        return LossKind::Margin.derivatives(0.0, z);
    }
    spec.loss().derivatives(y, z)
}

fn class_index(y: f64, classes: usize) -> Result<usize> {
    if y.fract() != 0.0 || y < 1.0 || y > classes as f64 {
        return Err(Error::InvalidResponse { kind: "multiclass", value: y });
    }
    Ok(y as usize - 1)
}

/// Logits of the `K-1` free classes; the reference class has logit 0.
fn class_logits(x: &[f64], beta: &[f64], p: usize, classes: usize) -> Vec<f64> {
    (0..classes - 1)
        .map(|k| {
            let w = &beta[k * p..(k + 1) * p];
            w.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// True-class log-odds `z_y - logsumexp_{j≠y} z_j` from the full logit vector
/// (including the trailing reference zero).
fn margin_from_logits(logits: &[f64], y: usize) -> f64 {
    let others = logits.iter().enumerate().filter(|(j, _)| *j != y).map(|(_, &v)| v);
    logits[y] - log_sum_exp(others)
}

/// Coefficients `(1_y - p)/(1 - p_y)` over the `K-1` free classes.
fn margin_coefficients(logits: &[f64], y: usize) -> Vec<f64> {
    let classes = logits.len();
    let others = logits.iter().enumerate().filter(|(j, _)| *j != y).map(|(_, &v)| v);
    let lse = log_sum_exp(others);
    (0..classes - 1).map(|k| if k == y { 1.0 } else { -(logits[k] - lse).exp() }).collect()
}

fn hidden_preactivations(x: &[f64], beta: &[f64], hidden: usize, p: usize) -> Vec<f64> {
    let mut a = vec![0.0; hidden];
    for (j, &xj) in x.iter().enumerate() {
        let col = &beta[j * hidden..(j + 1) * hidden];
        for (al, &w) in a.iter_mut().zip(col) {
            *al += w * xj;
        }
    }
    debug_assert_eq!(beta.len(), hidden * p + hidden);
    a
}

/// `f(x, β)`. `y` is only read by the multiclass margin kind.
pub fn predict(spec: &ModelSpec, x: &[f64], y: f64, beta: &[f64]) -> Result<f64> {
    spec.check_dims(x, beta)?;
    match spec.kind {
        ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus => {
            Ok(x.iter().zip(beta).map(|(a, b)| a * b).sum())
        }
        ModelKind::MulticlassMargin { classes } => {
            let yi = class_index(y, classes)?;
            let mut logits = class_logits(x, beta, spec.p, classes);
            logits.push(0.0);
            Ok(margin_from_logits(&logits, yi))
        }
        ModelKind::OneHiddenLayer { hidden, activation } => {
            let a = hidden_preactivations(x, beta, hidden, spec.p);
            let v = &beta[hidden * spec.p..];
            Ok(a.iter().zip(v).map(|(&al, &vl)| vl * activation.value(al)).sum())
        }
    }
}

/// `∇_β f(x, β)`.
pub fn model_gradient(spec: &ModelSpec, x: &[f64], y: f64, beta: &[f64]) -> Result<DVector<f64>> {
    spec.check_dims(x, beta)?;
    let p = spec.p;
    match spec.kind {
        ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus => {
            Ok(DVector::from_column_slice(x))
        }
        ModelKind::MulticlassMargin { classes } => {
            let yi = class_index(y, classes)?;
            let mut logits = class_logits(x, beta, p, classes);
            logits.push(0.0);
            let coef = margin_coefficients(&logits, yi);
            let mut g = DVector::zeros(spec.d);
            for (k, c) in coef.iter().enumerate() {
                for (j, &xj) in x.iter().enumerate() {
                    g[k * p + j] = c * xj;
                }
            }
            Ok(g)
        }
        ModelKind::OneHiddenLayer { hidden, activation } => {
            let a = hidden_preactivations(x, beta, hidden, p);
            let v = &beta[hidden * p..];
            let mut g = DVector::zeros(spec.d);
            for (j, &xj) in x.iter().enumerate() {
                for l in 0..hidden {
                    g[j * hidden + l] = activation.derivative(a[l]) * v[l] * xj;
                }
            }
            for l in 0..hidden {
                g[hidden * p + l] = activation.value(a[l]);
            }
            Ok(g)
        }
    }
}

/// `f(x_i, β)` for every row of `data`.
pub fn predict_all(spec: &ModelSpec, data: &Dataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != spec.d {
        return Err(Error::Dimension(format!("beta has length {}, expected {}", beta.len(), spec.d)));
    }
    match spec.kind {
        ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus => {
            Ok(data.features() * beta)
        }
        ModelKind::MulticlassMargin { classes } => {
            let logits = multiclass_logits(data.features(), beta, classes);
            let mut out = DVector::zeros(data.n());
            let mut row = vec![0.0; classes];
            for i in 0..data.n() {
                for k in 0..classes - 1 {
                    row[k] = logits[(i, k)];
                }
                row[classes - 1] = 0.0;
                out[i] = margin_from_logits(&row, class_index(data.y(i), classes)?);
            }
            Ok(out)
        }
        ModelKind::OneHiddenLayer { .. } => {
            let mut out = DVector::zeros(data.n());
            for i in 0..data.n() {
                out[i] = predict(spec, &data.x(i), data.y(i), beta.as_slice())?;
            }
            Ok(out)
        }
    }
}

/// `n × (K-1)` logits `X Wᵀ`. The class-major layout of `β` is exactly the
/// column-major storage of `Wᵀ`.
pub(crate) fn multiclass_logits(x: &DMatrix<f64>, beta: &DVector<f64>, classes: usize) -> DMatrix<f64> {
    let p = x.ncols();
    let wt = DMatrix::from_column_slice(p, classes - 1, beta.as_slice());
    x * wt
}

/// Stacks `∇f(x_i, β)` over all rows.
pub fn gradient_matrix(spec: &ModelSpec, data: &Dataset, beta: &DVector<f64>) -> Result<GradientMatrix> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if beta.len() != spec.d {
        return Err(Error::Dimension(format!("beta has length {}, expected {}", beta.len(), spec.d)));
    }
    if data.p() != spec.p {
        return Err(Error::Dimension(format!("data has p = {}, the model has p = {}", data.p(), spec.p)));
    }
    let n = data.n();
    let p = spec.p;
    let rows = match spec.kind {
        ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus => {
            data.features().clone()
        }
        ModelKind::MulticlassMargin { classes } => {
            let logits = multiclass_logits(data.features(), beta, classes);
            let mut coef = DMatrix::zeros(n, classes - 1);
            let mut row = vec![0.0; classes];
            for i in 0..n {
                for k in 0..classes - 1 {
                    row[k] = logits[(i, k)];
                }
                row[classes - 1] = 0.0;
                let c = margin_coefficients(&row, class_index(data.y(i), classes)?);
                for k in 0..classes - 1 {
                    coef[(i, k)] = c[k];
                }
            }
            let mut g = DMatrix::zeros(n, spec.d);
            for k in 0..classes - 1 {
                for j in 0..p {
                    let xcol = data.features().column(j);
                    let ck = coef.column(k);
                    let mut out = g.column_mut(k * p + j);
                    for i in 0..n {
                        out[i] = ck[i] * xcol[i];
                    }
                }
            }
            g
        }
        ModelKind::OneHiddenLayer { .. } => {
            let mut g = DMatrix::zeros(n, spec.d);
            for i in 0..n {
                let gi = model_gradient(spec, &data.x(i), data.y(i), beta.as_slice())?;
                g.set_row(i, &gi.transpose());
            }
            g
        }
    };
    Ok(GradientMatrix { rows, beta: beta.clone() })
}

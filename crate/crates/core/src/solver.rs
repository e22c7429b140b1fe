//! Damped Newton solver for the full ERM problem, its leave-one-out refits and
//! the linearized surrogate problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    gradient_matrix, log_sum_exp, multiclass_logits, predict_all, Dataset, LossKind, ModelKind, ModelSpec,
};

/// Levenberg damping values tried in order when the Newton system fails or the
/// step does not decrease the objective.
const DAMPING_LADDER: [f64; 7] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2];
const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_HALVINGS: usize = 60;
/// Relative Newton-step size required, alongside the gradient tolerance, to
/// declare convergence.
const STEP_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Gradient-norm tolerance; `None` means `1e-8 · max(1, n)`.
    pub tol_grad: Option<f64>,
    pub max_iter: usize,
    /// Optional `½ ridge ‖β‖²` penalty.
    pub ridge: f64,
    /// Abort with `converged = false` once `‖β‖` exceeds this.
    pub divergence_guard: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol_grad: None, max_iter: 100, ridge: 0.0, divergence_guard: 1e6 }
    }
}

impl SolverOptions {
    pub fn tolerance(&self, n: usize) -> f64 {
        self.tol_grad.unwrap_or(1e-8 * (n.max(1) as f64))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub objective: f64,
}

/// Smooth objective evaluated by the Newton loop.
trait Objective {
    fn dim(&self) -> usize;
    /// Rows that contribute to the sum (sets the default tolerance).
    fn active_rows(&self) -> usize;
    fn value(&self, beta: &DVector<f64>) -> f64;
    fn derivatives(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>);
}

/// Adds `½ ridge ‖β‖²` on top of another objective.
struct Ridged<'a, O> {
    inner: &'a O,
    ridge: f64,
}

impl<O: Objective> Objective for Ridged<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn active_rows(&self) -> usize {
        self.inner.active_rows()
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        self.inner.value(beta) + 0.5 * self.ridge * beta.norm_squared()
    }

    fn derivatives(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (f, g, mut h) = self.inner.derivatives(beta);
        for i in 0..h.nrows() {
            h[(i, i)] += self.ridge;
        }
        (f + 0.5 * self.ridge * beta.norm_squared(), g + beta * self.ridge, h)
    }
}

/// `Gᵀ diag(w) G` computed as one dense product.
pub(crate) fn weighted_gram(rows: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = rows.clone();
    for mut col in scaled.column_iter_mut() {
        col.component_mul_assign(weights);
    }
    let gt = rows.transpose();
    let mut h = gt * scaled;
    symmetrize(&mut h);
    h
}

fn symmetrize(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = m;
            h[(j, i)] = m;
        }
    }
}

/// `Σ_j ℓ(y_j, g_jᵀβ + b_j)` over the non-excluded rows.
struct GlmObjective<'a> {
    rows: &'a DMatrix<f64>,
    offsets: Option<&'a DVector<f64>>,
    responses: &'a DVector<f64>,
    loss: LossKind,
    exclude: Option<usize>,
}

impl GlmObjective<'_> {
    fn linear_predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut z = self.rows * beta;
        if let Some(b) = self.offsets {
            z += b;
        }
        z
    }

    fn included(&self, i: usize) -> bool {
        self.exclude != Some(i)
    }
}

impl Objective for GlmObjective<'_> {
    fn dim(&self) -> usize {
        self.rows.ncols()
    }

    fn active_rows(&self) -> usize {
        self.rows.nrows() - usize::from(self.exclude.is_some())
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        let z = self.linear_predictor(beta);
        (0..z.len()).filter(|&i| self.included(i)).map(|i| self.loss.eval(self.responses[i], z[i]).value).sum()
    }

    fn derivatives(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let z = self.linear_predictor(beta);
        let n = z.len();
        let mut first = DVector::zeros(n);
        let mut second = DVector::zeros(n);
        let mut value = 0.0;
        for i in (0..n).filter(|&i| self.included(i)) {
            let d = self.loss.eval(self.responses[i], z[i]);
            value += d.value;
            first[i] = d.first;
            second[i] = d.second;
        }
        let grad = self.rows.tr_mul(&first);
        let hess = weighted_gram(self.rows, &second);
        (value, grad, hess)
    }
}

/// Multinomial cross-entropy `Σ_i -log p_{y_i}`, identical to the summed margin
/// loss `Σ_i log(1 + e^{-f(z_i, β)})` but with the exact closed-form Hessian
/// `Σ_i (diag(p) - ppᵀ) ⊗ x_i x_iᵀ`.
struct MulticlassObjective<'a> {
    data: &'a Dataset,
    classes: usize,
    exclude: Option<usize>,
}

impl MulticlassObjective<'_> {
    /// Per-row probabilities of all `K` classes and the per-row loss.
    fn probabilities(&self, beta: &DVector<f64>) -> (DMatrix<f64>, f64) {
        let n = self.data.n();
        let k = self.classes;
        let logits = multiclass_logits(self.data.features(), beta, k);
        let mut probs = DMatrix::zeros(n, k);
        let mut total = 0.0;
        let mut row = vec![0.0; k];
        for i in 0..n {
            for c in 0..k - 1 {
                row[c] = logits[(i, c)];
            }
            row[k - 1] = 0.0;
            let lse = log_sum_exp(row.iter().copied());
            for c in 0..k {
                probs[(i, c)] = (row[c] - lse).exp();
            }
            if self.exclude != Some(i) {
                let y = self.data.y(i) as usize - 1;
                total += lse - row[y];
            }
        }
        (probs, total)
    }
}

impl Objective for MulticlassObjective<'_> {
    fn dim(&self) -> usize {
        (self.classes - 1) * self.data.p()
    }

    fn active_rows(&self) -> usize {
        self.data.n() - usize::from(self.exclude.is_some())
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        self.probabilities(beta).1
    }

    fn derivatives(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.data.n();
        let p = self.data.p();
        let free = self.classes - 1;
        let x = self.data.features();
        let (probs, value) = self.probabilities(beta);

        let mut resid = DMatrix::zeros(n, free);
        for i in 0..n {
            if self.exclude == Some(i) {
                continue;
            }
            let y = self.data.y(i) as usize - 1;
            for c in 0..free {
                resid[(i, c)] = probs[(i, c)] - if c == y { 1.0 } else { 0.0 };
            }
        }
        // Class-major gradient: block c is Xᵀ r_c.
        let grad_blocks = x.tr_mul(&resid);
        let grad = DVector::from_column_slice(grad_blocks.as_slice());

        let d = free * p;
        let mut hess = DMatrix::zeros(d, d);
        let mut w = DVector::zeros(n);
        for a in 0..free {
            for b in a..free {
                for i in 0..n {
                    w[i] = if self.exclude == Some(i) {
                        0.0
                    } else {
                        let pa = probs[(i, a)];
                        let diag = if a == b { pa } else { 0.0 };
                        diag - pa * probs[(i, b)]
                    };
                }
                let block = weighted_gram(x, &w);
                hess.view_mut((a * p, b * p), (p, p)).copy_from(&block);
                if a != b {
                    hess.view_mut((b * p, a * p), (p, p)).copy_from(&block.transpose());
                }
            }
        }
        (value, grad, hess)
    }
}

/// Squared loss on `vᵀσ(Wx)` with the exact Hessian `Σ ℓ̈ ggᵀ + ℓ̇ ∇²f`.
struct HiddenLayerObjective<'a> {
    spec: &'a ModelSpec,
    data: &'a Dataset,
    exclude: Option<usize>,
}

impl Objective for HiddenLayerObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn active_rows(&self) -> usize {
        self.data.n() - usize::from(self.exclude.is_some())
    }

    fn value(&self, beta: &DVector<f64>) -> f64 {
        let Ok(f) = predict_all(self.spec, self.data, beta) else {
            return f64::NAN;
        };
        let loss = self.spec.loss();
        (0..self.data.n()).filter(|&i| self.exclude != Some(i)).map(|i| loss.eval(self.data.y(i), f[i]).value).sum()
    }

    fn derivatives(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let ModelKind::OneHiddenLayer { hidden, activation } = self.spec.kind else {
            unreachable!("hidden-layer objective built for another kind");
        };
        let n = self.data.n();
        let p = self.spec.p;
        let loss = self.spec.loss();
        let f = predict_all(self.spec, self.data, beta).expect("dimensions checked");
        let g = gradient_matrix(self.spec, self.data, beta).expect("dimensions checked").rows;

        let mut first = DVector::zeros(n);
        let mut second = DVector::zeros(n);
        let mut value = 0.0;
        for i in (0..n).filter(|&i| self.exclude != Some(i)) {
            let dv = loss.eval(self.data.y(i), f[i]);
            value += dv.value;
            first[i] = dv.first;
            second[i] = dv.second;
        }
        let grad = g.tr_mul(&first);
        let mut hess = weighted_gram(&g, &second);

        let v = &beta.as_slice()[hidden * p..];
        for i in (0..n).filter(|&i| self.exclude != Some(i)) {
            let x = self.data.x(i);
            let mut a = vec![0.0; hidden];
            for (j, &xj) in x.iter().enumerate() {
                for l in 0..hidden {
                    a[l] += beta[j * hidden + l] * xj;
                }
            }
            for l in 0..hidden {
                let ww = first[i] * v[l] * activation.second_derivative(a[l]);
                let wv = first[i] * activation.derivative(a[l]);
                for j in 0..p {
                    let r = j * hidden + l;
                    if ww != 0.0 {
                        for jj in 0..p {
                            hess[(r, jj * hidden + l)] += ww * x[j] * x[jj];
                        }
                    }
                    hess[(r, hidden * p + l)] += wv * x[j];
                    hess[(hidden * p + l, r)] += wv * x[j];
                }
            }
        }
        (value, grad, hess)
    }
}

fn newton<O: Objective>(obj: &O, init: &DVector<f64>, opts: &SolverOptions) -> Result<FitResult> {
    if obj.active_rows() == 0 {
        return Err(Error::EmptyObjective);
    }
    if init.len() != obj.dim() {
        return Err(Error::Dimension(format!("initial point has length {}, expected {}", init.len(), obj.dim())));
    }
    let ridged = Ridged { inner: obj, ridge: opts.ridge };
    let tol = opts.tolerance(obj.active_rows());
    let mut beta = init.clone();
    let (mut f, mut grad, mut hess) = ridged.derivatives(&beta);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective);
    }

    let mut iterations = 0;
    loop {
        let grad_norm = grad.norm();
        let done = |converged| FitResult { beta: beta.clone(), iterations, grad_norm, converged, objective: f };
        if grad_norm <= tol && newton_step_is_small(&hess, &grad, &beta) {
            return Ok(done(true));
        }
        if iterations >= opts.max_iter || beta.norm() > opts.divergence_guard {
            return Ok(done(false));
        }

        let next = newton_step(&ridged, &beta, f, &grad, &hess)?;
        iterations += 1;
        beta = next;
        (f, grad, hess) = ridged.derivatives(&beta);
    }
}

/// A small gradient alone does not certify a minimizer: on separable logistic
/// data the gradient decays like `e^{-‖β‖}` while the Newton step stays O(1).
fn newton_step_is_small(hess: &DMatrix<f64>, grad: &DVector<f64>, beta: &DVector<f64>) -> bool {
    if grad.iter().all(|&g| g == 0.0) {
        return true;
    }
    match hess.clone().cholesky() {
        Some(chol) => chol.solve(grad).norm() <= STEP_TOL * beta.norm().max(1.0),
        None => false,
    }
}

/// One damped, backtracked Newton step from `beta`.
fn newton_step<O: Objective>(
    obj: &O,
    beta: &DVector<f64>,
    f: f64,
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let d = beta.len();
    for &lambda in &DAMPING_LADDER {
        let mut damped = hess.clone();
        if lambda > 0.0 {
            for i in 0..d {
                damped[(i, i)] += lambda;
            }
        }
        let Some(chol) = damped.cholesky() else {
            continue;
        };
        let step = chol.solve(&(-grad));
        if !step.iter().all(|v| v.is_finite()) {
            continue;
        }
        let slope = grad.dot(&step);
        if slope >= 0.0 {
            continue;
        }
        let mut t = 1.0;
        for _ in 0..MAX_HALVINGS {
            let cand = beta + &step * t;
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= f + ARMIJO * t * slope {
                return Ok(cand);
            }
            t *= BACKTRACK;
        }
        // Near the optimum the predicted decrease drops below the rounding
        // noise of f; accept the full step if it shrinks the gradient.
        if -slope <= 1e-10 * (1.0 + f.abs()) {
            let cand = beta + &step;
            let (fc, gc, _) = obj.derivatives(&cand);
            if fc.is_finite() && gc.norm() < grad.norm() {
                return Ok(cand);
            }
        }
    }
    Err(Error::SingularHessian)
}

fn check_fit_inputs(spec: &ModelSpec, data: &Dataset, init: &DVector<f64>) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.p() != spec.p {
        return Err(Error::Dimension(format!("data has p = {}, the model has p = {}", data.p(), spec.p)));
    }
    if init.len() != spec.d {
        return Err(Error::Dimension(format!("initial point has length {}, expected d = {}", init.len(), spec.d)));
    }
    Ok(())
}

fn fit_with_exclusion(
    spec: &ModelSpec,
    data: &Dataset,
    exclude: Option<usize>,
    init: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_fit_inputs(spec, data, init)?;
    if let Some(i) = exclude {
        if i >= data.n() {
            return Err(Error::IndexOutOfRange { index: i, len: data.n() });
        }
    }
    match spec.kind {
        ModelKind::LinearSquared | ModelKind::LinearLogistic | ModelKind::LinearPoissonSoftplus => {
            let obj = GlmObjective {
                rows: data.features(),
                offsets: None,
                responses: data.responses(),
                loss: spec.loss(),
                exclude,
            };
            newton(&obj, init, opts)
        }
        ModelKind::MulticlassMargin { classes } => newton(&MulticlassObjective { data, classes, exclude }, init, opts),
        ModelKind::OneHiddenLayer { .. } => newton(&HiddenLayerObjective { spec, data, exclude }, init, opts),
    }
}

/// Full-data empirical risk minimizer `β̂`.
pub fn fit_erm(spec: &ModelSpec, data: &Dataset, init: &DVector<f64>, opts: &SolverOptions) -> Result<FitResult> {
    fit_with_exclusion(spec, data, None, init, opts)
}

/// Exact refit `β̂_{/i}` with row `i` deleted, started from `warm`.
pub fn fit_loo(
    spec: &ModelSpec,
    data: &Dataset,
    i: usize,
    warm: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    fit_with_exclusion(spec, data, Some(i), warm, opts)
}

/// Summed loss `Σ_i ℓ(y_i, f(x_i, β))` recomputed from scratch through the
/// model's scalar loss, without the solver's objective code paths.
pub fn empirical_risk(spec: &ModelSpec, data: &Dataset, beta: &DVector<f64>) -> Result<f64> {
    let f = predict_all(spec, data, beta)?;
    let loss = spec.loss();
    Ok((0..data.n()).map(|i| loss.eval(data.y(i), f[i]).value).sum())
}

/// First-order expansion of the model around an anchor `β̂`: rows `g_j`,
/// offsets `b_j = f(x_j, β̂) - g_jᵀβ̂` and the responses.
#[derive(Clone, Debug)]
pub struct LinearizedProblem {
    pub rows: DMatrix<f64>,
    pub offsets: DVector<f64>,
    pub responses: DVector<f64>,
    pub loss: LossKind,
    pub anchor: DVector<f64>,
}

impl LinearizedProblem {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    /// Linear predictor `g_jᵀβ + b_j` for every row.
    pub fn predictor(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.rows * beta + &self.offsets
    }

    fn objective(&self, exclude: Option<usize>) -> GlmObjective<'_> {
        GlmObjective {
            rows: &self.rows,
            offsets: Some(&self.offsets),
            responses: &self.responses,
            loss: self.loss,
            exclude,
        }
    }
}

pub fn build_linearized(spec: &ModelSpec, data: &Dataset, anchor: &FitResult) -> Result<LinearizedProblem> {
    if !anchor.converged {
        return Err(Error::AnchorNotConverged);
    }
    let g = gradient_matrix(spec, data, &anchor.beta)?;
    let offsets = if spec.is_linear() {
        DVector::zeros(data.n())
    } else {
        predict_all(spec, data, &anchor.beta)? - &g.rows * &anchor.beta
    };
    // The margin loss has the label folded into f, so responses are not read.
    let loss = spec.loss();
    Ok(LinearizedProblem {
        rows: g.rows,
        offsets,
        responses: data.responses().clone(),
        loss,
        anchor: anchor.beta.clone(),
    })
}

/// `β̆` (no exclusion) or `β̆_{/i}`, started from the anchor `β̂`.
pub fn fit_linearized(problem: &LinearizedProblem, exclude: Option<usize>, opts: &SolverOptions) -> Result<FitResult> {
    fit_linearized_from(problem, exclude, &problem.anchor, opts)
}

pub fn fit_linearized_from(
    problem: &LinearizedProblem,
    exclude: Option<usize>,
    init: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let n = problem.n();
    if let Some(i) = exclude {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
    }
    let active = n - usize::from(exclude.is_some());
    if active == 0 {
        return Err(Error::EmptyObjective);
    }
    if problem.d() > active && opts.ridge == 0.0 {
        return Err(Error::Underdetermined { n: active, d: problem.d() });
    }
    newton(&problem.objective(exclude), init, opts)
}

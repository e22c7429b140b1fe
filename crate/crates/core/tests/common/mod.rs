//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's solver or estimators.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn normal_vector(len: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// Central-difference gradient of `f` at `x` with per-coordinate step `h·max(1, |x_j|)`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|j| {
            let step = h * x[j].abs().max(1.0);
            work[j] = x[j] + step;
            let up = f(&work);
            work[j] = x[j] - step;
            let down = f(&work);
            work[j] = x[j];
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

/// Cross-entropy `Σ_i −log softmax(W x_i)_{y_i}` with class `K` pinned at
/// logit 0, written directly from the definition. `beta` is class-major.
pub fn multiclass_ce(
    x: &DMatrix<f64>,
    y: &[usize],
    beta: &[f64],
    classes: usize,
    skip: Option<usize>,
) -> (f64, Vec<f64>) {
    let p = x.ncols();
    let mut value = 0.0;
    let mut grad = vec![0.0; beta.len()];
    for i in 0..x.nrows() {
        if Some(i) == skip {
            continue;
        }
        let mut z: Vec<f64> = (0..classes - 1).map(|k| (0..p).map(|j| beta[k * p + j] * x[(i, j)]).sum()).collect();
        z.push(0.0);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let lse = m + total.ln();
        value += lse - z[y[i] - 1];
        for k in 0..classes - 1 {
            let prob = (z[k] - lse).exp();
            let ind = if y[i] == k + 1 { 1.0 } else { 0.0 };
            for j in 0..p {
                grad[k * p + j] += (prob - ind) * x[(i, j)];
            }
        }
    }
    (value, grad)
}

/// Barzilai-Borwein gradient descent with a non-monotone (max of the last
/// ten values) Armijo safeguard. Stops when the gradient norm falls below `tol`.
pub fn bb_minimize(f: impl Fn(&[f64]) -> (f64, Vec<f64>), init: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let mut x = init.to_vec();
    let (mut fx, mut g) = f(&x);
    let mut history = vec![fx];
    let mut step = 1e-3;
    for _ in 0..max_iter {
        let gn2: f64 = g.iter().map(|v| v * v).sum();
        if gn2.sqrt() <= tol {
            break;
        }
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut t = step;
        let (x_new, f_new, g_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let (fc, gc) = f(&cand);
            if fc <= reference - 1e-4 * t * gn2 || t < 1e-20 {
                break (cand, fc, gc);
            }
            t *= 0.5;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { ss / sy } else { 1e-3 };
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if history.len() > 10 {
            history.remove(0);
        }
    }
    x
}

/// Least-squares LOO influence from the rank-one downdate of `XᵀX`:
/// `x_newᵀ(XᵀX)⁻¹x_i · (−r_i)/(1 − h_ii)` where `r_i = y_i − x_iᵀβ̂`.
pub fn least_squares_loo_influence(x: &DMatrix<f64>, y: &DVector<f64>, i: usize, x_new: &DVector<f64>) -> f64 {
    let xtx_inv = (x.transpose() * x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * y;
    let xi = x.row(i).transpose();
    let r = y[i] - xi.dot(&beta);
    let h = xi.dot(&(&xtx_inv * &xi));
    -x_new.dot(&(&xtx_inv * &xi)) * r / (1.0 - h)
}

//! Agreement metrics between estimators: Pearson correlation, top-k rank
//! alignment and log-log magnitude scaling fits.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::InfluenceTable;

pub const MIN_SCALING_POINTS: usize = 3;
pub const MIN_SCALING_SAMPLES: usize = 30;

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("pearson on lengths {} and {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Dimension("pearson needs at least two pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::ZeroVariance("pearson input"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Values of both tables on their common non-breakdown cells, in
/// `(test_id, train_index)` order.
pub fn paired_values(a: &InfluenceTable, b: &InfluenceTable) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&(test, train), v) in &a.entries {
        if let (Some(x), Some(y)) = (v.value(), b.get(train, test)) {
            xs.push(x);
            ys.push(y);
        }
    }
    (xs, ys)
}

pub fn table_pearson(a: &InfluenceTable, b: &InfluenceTable) -> Result<f64> {
    let (xs, ys) = paired_values(a, b);
    pearson(&xs, &ys)
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Dimension("least squares needs two or more paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::ZeroVariance("regressor"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Most positive influence (proponents).
    TopK,
    /// Most negative influence (opponents).
    BottomK,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::TopK => "top",
            Side::BottomK => "bottom",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankAlignment {
    pub k: usize,
    pub side: Side,
    pub exact_match_count: usize,
    pub test_points: usize,
    pub overlap_ratio: f64,
}

/// The `k` train indices ranked first for one test point; ties go to the
/// smaller train index. Breakdown cells are not ranked.
pub fn top_k(table: &InfluenceTable, test: u64, k: usize, side: Side) -> Result<Vec<usize>> {
    let mut cells: Vec<(usize, f64)> = table
        .entries
        .range((test, 0)..=(test, usize::MAX))
        .filter_map(|(&(_, train), v)| v.value().map(|x| (train, x)))
        .collect();
    if k == 0 || k > cells.len() {
        return Err(Error::TopKTooLarge { k, available: cells.len() });
    }
    cells.sort_by(|a, b| {
        let ord = match side {
            Side::TopK => b.1.total_cmp(&a.1),
            Side::BottomK => a.1.total_cmp(&b.1),
        };
        ord.then(a.0.cmp(&b.0))
    });
    Ok(cells.into_iter().take(k).map(|c| c.0).collect())
}

pub fn rank_alignment(
    reference: &InfluenceTable,
    candidate: &InfluenceTable,
    k: usize,
    side: Side,
) -> Result<RankAlignment> {
    if !reference.entries.keys().eq(candidate.entries.keys()) {
        return Err(Error::GridMismatch);
    }
    let tests = reference.test_ids();
    if tests.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut exact = 0;
    let mut overlap = 0.0;
    for &t in &tests {
        let a = top_k(reference, t, k, side)?;
        let b = top_k(candidate, t, k, side)?;
        if a == b {
            exact += 1;
        }
        overlap += a.iter().filter(|i| b.contains(i)).count() as f64 / k as f64;
    }
    Ok(RankAlignment {
        k,
        side,
        exact_match_count: exact,
        test_points: tests.len(),
        overlap_ratio: overlap / tests.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingAxis {
    N,
    P,
    K,
}

impl fmt::Display for ScalingAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingAxis::N => "n",
            ScalingAxis::P => "p",
            ScalingAxis::K => "k",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub value: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub axis: ScalingAxis,
    pub slope: f64,
    pub intercept: f64,
    /// `(ln value, ln median)` used by the fit.
    pub points: Vec<(f64, f64)>,
    pub summary: Vec<ScalingPoint>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, 0.5))
}

/// Fits `ln median = intercept + slope · ln value` over groups of magnitude
/// samples, one group per axis value.
pub fn scaling_fit(groups: &[(f64, Vec<f64>)], axis: ScalingAxis) -> Result<ScalingFit> {
    if groups.len() < MIN_SCALING_POINTS {
        return Err(Error::ScalingInput("at least three axis values are required"));
    }
    let mut summary = Vec::with_capacity(groups.len());
    let mut points = Vec::with_capacity(groups.len());
    for (value, samples) in groups {
        if samples.len() < MIN_SCALING_SAMPLES {
            return Err(Error::ScalingInput("each axis value needs at least 30 samples"));
        }
        if !(*value > 0.0) {
            return Err(Error::ScalingInput("axis values must be positive"));
        }
        let mut s = samples.clone();
        s.sort_by(f64::total_cmp);
        let med = quantile_sorted(&s, 0.5);
        if !(med > 0.0) {
            return Err(Error::NonPositiveMedian(med));
        }
        summary.push(ScalingPoint {
            value: *value,
            median: med,
            q1: quantile_sorted(&s, 0.25),
            q3: quantile_sorted(&s, 0.75),
        });
        points.push((value.ln(), med.ln()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (slope, intercept) = ols(&xs, &ys)?;
    Ok(ScalingFit { axis, slope, intercept, points, summary })
}

//! CIFAR binary batches to pooled, channel-standardized feature rows.
//!
//! Pooling runs before standardization; the pipeline records that order in
//! [`PIPELINE_NOTE`] so it can travel with the output metadata.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 3073;
pub const SIDE: usize = 32;
pub const POOL: usize = 4;
pub const CHANNELS: usize = 3;
pub const POOLED_SIDE: usize = SIDE / POOL;
pub const FEATURES: usize = CHANNELS * POOLED_SIDE * POOLED_SIDE;

pub const PIPELINE_NOTE: &str =
    "bytes/255, 4x4 average pooling to 8x8x3 (channel-major), then per-channel standardization";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRecord {
    pub label: u8,
    /// 1024 red, 1024 green, 1024 blue; each plane row-major 32×32.
    pub pixels: Vec<u8>,
}

/// One mean and one standard deviation per colour channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub means: [f64; CHANNELS],
    pub stds: [f64; CHANNELS],
}

pub fn parse_cifar_bytes(bytes: &[u8]) -> Result<Vec<ImageRecord>> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::TruncatedCifar { len: bytes.len() });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(record, chunk)| {
            let label = chunk[0];
            if label > 9 {
                return Err(Error::BadCifarLabel { record, label });
            }
            Ok(ImageRecord { label, pixels: chunk[1..].to_vec() })
        })
        .collect()
}

pub fn read_cifar_binary(path: &Path) -> Result<Vec<ImageRecord>> {
    parse_cifar_bytes(&std::fs::read(path)?)
}

/// 4×4 average pooling of one record after dividing bytes by `byte_scale`.
/// Output is channel-major: `c·64 + row·8 + col`.
pub fn pool_record(record: &ImageRecord, byte_scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; FEATURES];
    let plane = SIDE * SIDE;
    for c in 0..CHANNELS {
        let px = &record.pixels[c * plane..(c + 1) * plane];
        for br in 0..POOLED_SIDE {
            for bc in 0..POOLED_SIDE {
                let mut sum = 0.0;
                for r in 0..POOL {
                    for q in 0..POOL {
                        sum += px[(br * POOL + r) * SIDE + bc * POOL + q] as f64;
                    }
                }
                out[c * POOLED_SIDE * POOLED_SIDE + br * POOLED_SIDE + bc] = sum / (POOL * POOL) as f64 / byte_scale;
            }
        }
    }
    out
}

/// Pooled features, one row per record.
pub fn pool_records(records: &[ImageRecord], byte_scale: f64) -> Result<DMatrix<f64>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<Vec<f64>> = records.par_iter().map(|r| pool_record(r, byte_scale)).collect();
    Ok(DMatrix::from_fn(rows.len(), FEATURES, |i, j| rows[i][j]))
}

pub fn channel_stats(features: &DMatrix<f64>) -> Result<ChannelStats> {
    let block = POOLED_SIDE * POOLED_SIDE;
    let mut means = [0.0; CHANNELS];
    let mut stds = [0.0; CHANNELS];
    for c in 0..CHANNELS {
        let cols = features.columns(c * block, block);
        let count = cols.len() as f64;
        let mean = cols.iter().sum::<f64>() / count;
        let var = cols.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
        // Rounding leaves a constant channel with variance near ε²·mean², not 0.
        if !(var > 1e-24 * mean.abs().max(1.0).powi(2)) {
            return Err(Error::ZeroVariance("image channel"));
        }
        means[c] = mean;
        stds[c] = var.sqrt();
    }
    Ok(ChannelStats { means, stds })
}

/// Standardizes in place with `stats`, or with stats computed from `features`.
pub fn standardize(features: &mut DMatrix<f64>, stats: Option<ChannelStats>) -> Result<ChannelStats> {
    let stats = match stats {
        Some(s) => s,
        None => channel_stats(features)?,
    };
    let block = POOLED_SIDE * POOLED_SIDE;
    for c in 0..CHANNELS {
        if !(stats.stds[c] > 0.0) {
            return Err(Error::ZeroVariance("image channel"));
        }
        features.columns_mut(c * block, block).apply(|v| *v = (*v - stats.means[c]) / stats.stds[c]);
    }
    Ok(stats)
}

/// Full pipeline. Pass the training stats when transforming a test partition.
pub fn pool_and_standardize(
    records: &[ImageRecord],
    stats: Option<ChannelStats>,
) -> Result<(DMatrix<f64>, Vec<u8>, ChannelStats)> {
    let mut features = pool_records(records, 255.0)?;
    let stats = standardize(&mut features, stats)?;
    Ok((features, records.iter().map(|r| r.label).collect(), stats))
}

/// Records of classes `a` and `b` in original order, relabelled `a → 0`, `b → 1`.
pub fn binary_subset(records: &[ImageRecord], a: u8, b: u8) -> Result<Vec<ImageRecord>> {
    if a == b {
        return Err(Error::IdenticalClasses);
    }
    let out: Vec<ImageRecord> = records
        .iter()
        .filter(|r| r.label == a || r.label == b)
        .map(|r| ImageRecord { label: u8::from(r.label == b), pixels: r.pixels.clone() })
        .collect();
    if out.is_empty() {
        return Err(Error::EmptySubset);
    }
    Ok(out)
}

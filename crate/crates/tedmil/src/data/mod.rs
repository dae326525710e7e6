//! Feature ingestion, bag construction, annotations, and synthetic data.
//!
//! A video arrives as an `n_clips × dim` matrix of unit-l2 clip features
//! (one 16-frame clip per row). [`build_bag`] partitions the rows into 32
//! contiguous segments, averages each segment, and re-normalizes, giving
//! the fixed-length instance sequence the network consumes.

pub mod files;
pub mod partition;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use files::{
    load_annotations, load_feature_file, load_manifest, write_annotations, write_feature_file,
    write_manifest, AnnotationRecord, Manifest, ManifestRow, Split,
};
pub use synthetic::{generate_synthetic, GeneratedDataset, SyntheticSpec};

/// Instances per bag.
pub const BAG_SIZE: usize = 32;
/// Frames covered by one clip feature row.
pub const FRAMES_PER_CLIP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Abnormal,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Normal => write!(f, "normal"),
            Label::Abnormal => write!(f, "abnormal"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            other => Err(Error::Format(format!("unknown label {other:?}"))),
        }
    }
}

/// Per-clip features for one video, as stored on disk (32-bit floats).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub video_id: String,
    pub n_clips: usize,
    pub dim: usize,
    /// Row-major `n_clips × dim`.
    pub values: Vec<f32>,
}

impl FeatureFile {
    pub fn new(video_id: String, n_clips: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if n_clips == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "feature file {video_id:?} must have n_clips >= 1 and dim >= 1, got {n_clips}x{dim}"
            )));
        }
        if values.len() != n_clips * dim {
            return Err(Error::Validation(format!(
                "feature file {video_id:?}: expected {} values, got {}",
                n_clips * dim,
                values.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature file {video_id:?}: non-finite value at element {idx}"
            )));
        }
        Ok(Self { video_id, n_clips, dim, values })
    }

    pub fn row(&self, clip: usize) -> &[f32] {
        &self.values[clip * self.dim..(clip + 1) * self.dim]
    }

    /// Number of rows whose l2 norm deviates from 1 by more than 1e-3.
    pub fn off_unit_rows(&self) -> usize {
        (0..self.n_clips)
            .filter(|&i| {
                let norm: f64 = self.row(i).iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
                (norm - 1.0).abs() > 1e-3
            })
            .count()
    }
}

/// One video as a fixed-length instance sequence plus its bag label.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    /// Row-major `BAG_SIZE × dim`.
    pub instances: Vec<f64>,
    pub dim: usize,
    pub label: Label,
    pub video_id: String,
    pub n_frames: usize,
}

/// Partition `n_clips` rows into [`BAG_SIZE`] contiguous segments and
/// average each one. When `renormalize` is set the averaged instances are
/// re-scaled to unit l2 norm. With fewer clips than instances, empty
/// segments inherit the nearest preceding non-empty instance (the leading
/// ones take the first non-empty, so a single clip fills the whole bag).
pub fn build_instances(rows: &[f64], n_clips: usize, dim: usize, renormalize: bool) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Contract("cannot build a bag from zero-dimension features".into()));
    }
    if n_clips == 0 {
        return Err(Error::Contract("cannot build a bag from zero clips".into()));
    }
    if rows.len() != n_clips * dim {
        return Err(Error::Shape(format!(
            "expected {} feature values, got {}",
            n_clips * dim,
            rows.len()
        )));
    }

    let mut instances = vec![0.0; BAG_SIZE * dim];
    let mut filled = [false; BAG_SIZE];
    for j in 0..BAG_SIZE {
        let (lo, hi) = partition::bounds(j, n_clips, BAG_SIZE);
        if lo == hi {
            continue;
        }
        let out = &mut instances[j * dim..(j + 1) * dim];
        for row in lo..hi {
            for (o, v) in out.iter_mut().zip(&rows[row * dim..(row + 1) * dim]) {
                *o += v;
            }
        }
        let inv = 1.0 / (hi - lo) as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        if renormalize {
            let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                out.iter_mut().for_each(|v| *v /= norm);
            }
        }
        filled[j] = true;
    }

    let first = filled
        .iter()
        .position(|&f| f)
        .expect("at least one segment is non-empty when n_clips >= 1");
    let mut last = first;
    for j in 0..BAG_SIZE {
        if filled[j] {
            last = j;
        } else {
            let src = if j < first { first } else { last };
            let (a, b) = if src < j {
                let (head, tail) = instances.split_at_mut(j * dim);
                (&head[src * dim..(src + 1) * dim], &mut tail[..dim])
            } else {
                let (head, tail) = instances.split_at_mut(src * dim);
                (&tail[..dim], &mut head[j * dim..(j + 1) * dim])
            };
            b.copy_from_slice(a);
        }
    }
    Ok(instances)
}

pub fn build_bag(features: &FeatureFile, label: Label, n_frames: usize, renormalize: bool) -> Result<Bag> {
    let rows: Vec<f64> = features.values.iter().map(|&v| v as f64).collect();
    let instances = build_instances(&rows, features.n_clips, features.dim, renormalize)?;
    Ok(Bag {
        instances,
        dim: features.dim,
        label,
        video_id: features.video_id.clone(),
        n_frames,
    })
}

/// Load every bag of one manifest split.
pub fn load_split(manifest: &Manifest, split: Split, renormalize: bool) -> Result<Vec<Bag>> {
    manifest
        .rows
        .iter()
        .filter(|r| r.split == split)
        .map(|r| {
            let features = load_feature_file(&manifest.resolve(&r.feature_path))?;
            build_bag(&features, r.label, r.n_frames, renormalize)
        })
        .collect()
}

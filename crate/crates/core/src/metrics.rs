//! Reconstruction accuracy, IoU and per-viewpoint aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::dataset::SampleStore;
use crate::geometry::VoxelGrid;
use crate::training::{CompletionModel, TrainError};

pub const DEFAULT_THRESHOLD: f32 = 0.5;
const EVAL_BATCH: usize = 16;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {expected} voxels expected, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn check(pred: &[f32], gt: &VoxelGrid) -> Result<(), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::Dimension {
            expected: gt.len(),
            found: pred.len(),
        });
    }
    Ok(())
}

fn matches(pred: &[f32], gt: &VoxelGrid, tau: f32) -> usize {
    pred.iter()
        .zip(gt.occupancy())
        .filter(|(&p, &g)| (p > tau) == g)
        .count()
}

/// Fraction of voxels whose thresholded prediction equals the ground truth.
pub fn voxel_accuracy(pred: &[f32], gt: &VoxelGrid, tau: f32) -> Result<f64, MetricsError> {
    check(pred, gt)?;
    Ok(matches(pred, gt, tau) as f64 / gt.len() as f64)
}

/// Intersection over union of thresholded occupancy; two empty sets score 1.
pub fn iou(pred: &[f32], gt: &VoxelGrid, tau: f32) -> Result<f64, MetricsError> {
    check(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt.occupancy()) {
        let p = p > tau;
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub class_id: u16,
    pub view_index: u16,
    pub matched: usize,
    pub voxels: usize,
    pub iou: f64,
}

impl SampleScore {
    pub fn accuracy(&self) -> f64 {
        self.matched as f64 / self.voxels as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub overall_iou: f64,
    pub sample_count: usize,
    pub per_angle: BTreeMap<u16, f64>,
    pub per_class: BTreeMap<u16, f64>,
}

/// Mean that does not depend on the order of `values`.
fn stable_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn grouped_accuracy(scores: &[SampleScore], key: impl Fn(&SampleScore) -> u16) -> BTreeMap<u16, f64> {
    let mut groups: BTreeMap<u16, Vec<f64>> = BTreeMap::new();
    for s in scores {
        groups.entry(key(s)).or_default().push(s.accuracy());
    }
    groups.into_iter().map(|(k, v)| (k, stable_mean(v))).collect()
}

impl EvalReport {
    /// Aggregates per-sample scores; overall accuracy is the mean per-sample accuracy.
    pub fn from_scores(scores: &[SampleScore]) -> Result<Self, MetricsError> {
        if scores.is_empty() {
            return Err(MetricsError::Argument("no samples to evaluate".into()));
        }
        Ok(Self {
            overall_accuracy: stable_mean(scores.iter().map(SampleScore::accuracy).collect()),
            overall_iou: stable_mean(scores.iter().map(|s| s.iou).collect()),
            sample_count: scores.len(),
            per_angle: grouped_accuracy(scores, |s| s.view_index),
            per_class: grouped_accuracy(scores, |s| s.class_id),
        })
    }

    /// One `key value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "overall_accuracy {:.6}", self.overall_accuracy);
        let _ = writeln!(s, "overall_iou {:.6}", self.overall_iou);
        let _ = writeln!(s, "sample_count {}", self.sample_count);
        for (k, v) in &self.per_angle {
            let _ = writeln!(s, "per_angle.{k} {v:.6}");
        }
        for (k, v) in &self.per_class {
            let _ = writeln!(s, "per_class.{k} {v:.6}");
        }
        s
    }
}

/// Scores every record of `store` with one forward pass each.
pub fn score_samples(
    model: &CompletionModel,
    store: &SampleStore,
    tau: f32,
) -> Result<Vec<SampleScore>, MetricsError> {
    if store.is_empty() {
        return Err(MetricsError::Argument("empty store".into()));
    }
    if store.resolution != model.output_resolution() {
        return Err(MetricsError::Dimension {
            expected: model.output_resolution().pow(3),
            found: store.resolution.pow(3),
        });
    }
    let mut scores = Vec::with_capacity(store.len());
    for chunk in store.records.chunks(EVAL_BATCH) {
        let depths: Vec<_> = chunk.iter().map(|r| &r.depth).collect();
        for (r, pred) in chunk.iter().zip(model.predict_batch(&depths)?) {
            scores.push(SampleScore {
                class_id: r.class_id,
                view_index: r.view_index,
                matched: matches(&pred, &r.target, tau),
                voxels: r.target.len(),
                iou: iou(&pred, &r.target, tau)?,
            });
        }
    }
    Ok(scores)
}

pub fn evaluate(
    model: &CompletionModel,
    store: &SampleStore,
    tau: f32,
) -> Result<EvalReport, MetricsError> {
    EvalReport::from_scores(&score_samples(model, store, tau)?)
}

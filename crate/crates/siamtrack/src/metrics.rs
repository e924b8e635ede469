//! One-pass evaluation metrics: success and precision curves with their
//! summary numbers, and the proposal recall protocol.

use std::sync::Arc;

use thiserror::Error;

use crate::boxes::{iou, BBox};
use crate::fusion::{init_tracker, propose_around, TrackError, TrackerConfig};
use crate::model::Model;
use crate::tensor::FeatureMap;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{results} result boxes but {gt} ground-truth boxes")]
    LengthMismatch { results: usize, gt: usize },
    #[error("empty result set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub value: f64,
}

/// Success rate at IoU thresholds 0.00..=1.00 in steps of 0.01 (101 points);
/// success is the fraction of frames with IoU strictly above the threshold.
/// The AUC is the mean of the sampled success values.
#[derive(Debug, Clone)]
pub struct SuccessCurve {
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

pub fn success_curve(results: &[BBox], gt: &[BBox]) -> Result<SuccessCurve, MetricsError> {
    if results.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            results: results.len(),
            gt: gt.len(),
        });
    }
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let ious: Vec<f64> = results.iter().zip(gt).map(|(r, g)| iou(r, g)).collect();
    let n = ious.len() as f64;
    let mut points = Vec::with_capacity(101);
    let mut sum = 0.0;
    for step in 0..=100 {
        let t = step as f64 / 100.0;
        let rate = ious.iter().filter(|&&v| v > t).count() as f64 / n;
        points.push(CurvePoint {
            threshold: t,
            value: rate,
        });
        sum += rate;
    }
    Ok(SuccessCurve {
        points,
        auc: sum / 101.0,
    })
}

/// Precision at center-error thresholds 0..=50 pixels in steps of 1
/// (51 points); precision is the fraction of frames whose center distance is
/// at most the threshold. `at_20` is the OTB 20-pixel summary number.
#[derive(Debug, Clone)]
pub struct PrecisionCurve {
    pub points: Vec<CurvePoint>,
    pub at_20: f64,
}

pub fn precision_curve(results: &[BBox], gt: &[BBox]) -> Result<PrecisionCurve, MetricsError> {
    if results.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            results: results.len(),
            gt: gt.len(),
        });
    }
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let errors: Vec<f64> = results
        .iter()
        .zip(gt)
        .map(|(r, g)| {
            let (rx, ry) = r.center();
            let (gx, gy) = g.center();
            ((rx - gx).powi(2) + (ry - gy).powi(2)).sqrt()
        })
        .collect();
    let n = errors.len() as f64;
    let mut points = Vec::with_capacity(51);
    for e in 0..=50 {
        let t = e as f64;
        points.push(CurvePoint {
            threshold: t,
            value: errors.iter().filter(|&&v| v <= t).count() as f64 / n,
        });
    }
    let at_20 = points[20].value;
    Ok(PrecisionCurve { points, at_20 })
}

/// Recall of the coarse stage's top-K proposals against ground truth.
#[derive(Debug, Clone)]
pub struct RecallTable {
    pub ks: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// `recalls[ki][ti]` = fraction of frames where some proposal among the
    /// top `ks[ki]` (plus the reserved candidate) overlaps the ground truth
    /// strictly above `thresholds[ti]`.
    pub recalls: Vec<Vec<f64>>,
    /// Mean recall over the threshold grid, per K.
    pub means: Vec<f64>,
}

/// Overlap thresholds of the recall protocol: 0.5..=0.7 in steps of 0.05.
pub fn recall_thresholds() -> Vec<f64> {
    (0..=4).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// Run the recall protocol: the template comes from frame 0, and the search
/// region of frame `t` is centered on the ground-truth box of frame `t - 1`.
/// Proposal sets are nested across K (top-K plus reserved), so recall is
/// non-decreasing in K by construction.
pub fn recall_analysis(
    frames: &[FeatureMap],
    gt: &[BBox],
    model: Arc<Model>,
    config: TrackerConfig,
    ks: &[usize],
    thresholds: &[f64],
) -> Result<RecallTable, TrackError> {
    if frames.len() != gt.len() || frames.len() < 2 {
        return Err(TrackError::SequenceMismatch {
            frames: frames.len(),
            boxes: gt.len(),
        });
    }
    assert!(!ks.is_empty() && !thresholds.is_empty());
    let k_max = *ks.iter().max().expect("ks non-empty");
    let state = init_tracker(&frames[0], &gt[0], model, config)?;

    let evaluated = frames.len() - 1;
    let mut hits = vec![vec![0usize; thresholds.len()]; ks.len()];
    for t in 1..frames.len() {
        let proposals = propose_around(&state, &frames[t], &gt[t - 1], k_max)?;
        // proposals[0] is reserved; the rest are score-ranked, so the set for
        // a smaller K is a prefix.
        for (ki, &k) in ks.iter().enumerate() {
            let take = (1 + k).min(proposals.len());
            let best = proposals[..take]
                .iter()
                .map(|p| iou(&p.box_cm, &gt[t]))
                .fold(0.0f64, f64::max);
            for (ti, &thr) in thresholds.iter().enumerate() {
                if best > thr {
                    hits[ki][ti] += 1;
                }
            }
        }
    }

    let recalls: Vec<Vec<f64>> = hits
        .iter()
        .map(|row| row.iter().map(|&h| h as f64 / evaluated as f64).collect())
        .collect();
    let means = recalls
        .iter()
        .map(|row: &Vec<f64>| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    Ok(RecallTable {
        ks: ks.to_vec(),
        thresholds: thresholds.to_vec(),
        recalls,
        means,
    })
}

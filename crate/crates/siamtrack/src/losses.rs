//! Training objective as pure, gradient-checked functions: softmax
//! cross-entropy for classification, smooth L1 for box regression, and the
//! weighted total. Everything is computed in double precision; losses are
//! means over their contributing samples so the weights are batch-size free.

use thiserror::Error;

use crate::boxes::BoxDelta;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty sample set")]
    Empty,
    #[error("{preds} predictions but {targets} targets")]
    CountMismatch { preds: usize, targets: usize },
    #[error("{logits} logit pairs but {labels} labels")]
    LabelMismatch { logits: usize, labels: usize },
}

/// Weights of the four loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub cm_cls: f64,
    pub cm_box: f64,
    pub fm_cls: f64,
    pub fm_box: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cm_cls: 1.0,
            cm_box: 2.0,
            fm_cls: 1.0,
            fm_box: 1.0,
        }
    }
}

/// Softmax cross-entropy over (background, foreground) logit pairs, averaged
/// over samples. `labels[i]` is true for foreground. Returns the mean loss
/// and the analytic gradient `(softmax - onehot) / N` per logit pair,
/// computed with max-subtraction stabilization.
pub fn cross_entropy(logits: &[[f64; 2]], labels: &[bool]) -> Result<(f64, Vec<[f64; 2]>), LossError> {
    if logits.is_empty() {
        return Err(LossError::Empty);
    }
    if logits.len() != labels.len() {
        return Err(LossError::LabelMismatch {
            logits: logits.len(),
            labels: labels.len(),
        });
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (pair, &fg) in logits.iter().zip(labels) {
        let m = pair[0].max(pair[1]);
        let e0 = (pair[0] - m).exp();
        let e1 = (pair[1] - m).exp();
        let z = e0 + e1;
        let (p0, p1) = (e0 / z, e1 / z);
        let class = usize::from(fg);
        // -log p[class], in the stabilized form.
        total += z.ln() - (pair[class] - m);
        let (t0, t1) = if fg { (0.0, 1.0) } else { (1.0, 0.0) };
        grads.push([(p0 - t0) / n, (p1 - t1) / n]);
    }
    Ok((total / n, grads))
}

/// Smooth L1 over per-sample 4-vector differences `x = pred - target`:
/// `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise; summed over the four
/// coordinates and averaged over samples. The gradient per coordinate is
/// `clamp(x, -1, 1) / N`. An empty batch (no positives) yields zero loss and
/// an empty gradient by convention.
pub fn smooth_l1(pred: &[BoxDelta], target: &[BoxDelta]) -> Result<(f64, Vec<[f64; 4]>), LossError> {
    if pred.len() != target.len() {
        return Err(LossError::CountMismatch {
            preds: pred.len(),
            targets: target.len(),
        });
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let mut g = [0.0; 4];
        for (k, (pv, tv)) in p.as_array().iter().zip(t.as_array()).enumerate() {
            let x = pv - tv;
            total += if x.abs() < 1.0 { 0.5 * x * x } else { x.abs() - 0.5 };
            g[k] = x.clamp(-1.0, 1.0) / n;
        }
        grads.push(g);
    }
    Ok((total / n, grads))
}

/// Weighted sum of the four components.
pub fn total_loss(cm_cls: f64, cm_box: f64, fm_cls: f64, fm_box: f64, lw: &LossWeights) -> f64 {
    lw.cm_cls * cm_cls + lw.cm_box * cm_box + lw.fm_cls * fm_cls + lw.fm_box * fm_box
}

/// All four components of one training step, their weighted total, and the
/// gradients with respect to the inputs.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub cm_cls: f64,
    pub cm_box: f64,
    pub fm_cls: f64,
    pub fm_box: f64,
    pub total: f64,
    pub cm_cls_grad: Vec<[f64; 2]>,
    pub cm_box_grad: Vec<[f64; 4]>,
    pub fm_cls_grad: Vec<[f64; 2]>,
    pub fm_box_grad: Vec<[f64; 4]>,
}

impl LossReport {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        cm_logits: &[[f64; 2]],
        cm_labels: &[bool],
        cm_pred: &[BoxDelta],
        cm_target: &[BoxDelta],
        fm_logits: &[[f64; 2]],
        fm_labels: &[bool],
        fm_pred: &[BoxDelta],
        fm_target: &[BoxDelta],
        lw: &LossWeights,
    ) -> Result<LossReport, LossError> {
        let (cm_cls, cm_cls_grad) = cross_entropy(cm_logits, cm_labels)?;
        let (cm_box, cm_box_grad) = smooth_l1(cm_pred, cm_target)?;
        let (fm_cls, fm_cls_grad) = cross_entropy(fm_logits, fm_labels)?;
        let (fm_box, fm_box_grad) = smooth_l1(fm_pred, fm_target)?;
        let total = total_loss(cm_cls, cm_box, fm_cls, fm_box, lw);
        Ok(LossReport {
            cm_cls,
            cm_box,
            fm_cls,
            fm_box,
            total,
            cm_cls_grad,
            cm_box_grad,
            fm_cls_grad,
            fm_box_grad,
        })
    }
}

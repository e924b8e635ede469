//! Fine matching stage: multi-layer RoI Align feature extraction and the
//! relation head that rescores and refines each proposal, plus its training
//! label assignment and sample selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backbone::TapMap;
use crate::boxes::{encode_delta, iou, BBox, BoxDelta};
use crate::coarse::Proposal;
use crate::tensor::{bilinear_sample, concat_channels, FeatureMap, KernelError};
use crate::weights::{ModelWeights, WeightsError};

/// IoU strictly above this makes a proposal a positive fine-stage sample.
pub const FM_POSITIVE_IOU: f64 = 0.5;
/// Number of proposals selected per training step.
pub const FM_TRAIN_SAMPLES: usize = 48;

#[derive(Debug, Error)]
pub enum FmError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("tap \"{0}\" missing from feature set")]
    MissingTap(String),
    #[error("RoI feature has shape {got:?}, head expects {expected:?}")]
    RoiShape {
        got: (usize, usize, usize),
        expected: (usize, usize, usize),
    },
}

/// Pool a fixed-size regional feature from one or more tapped feature maps.
///
/// For each tap the box is mapped to feature coordinates by `x / stride`
/// (no half-pixel offset), split into `out_size^2` bins, and each bin
/// averages `samples_per_bin^2` bilinear samples taken at the regular
/// interior points `(s + 0.5) / samples_per_bin` of the bin. Tap results are
/// concatenated channel-wise in the order of `tap_names`.
pub fn roi_align(
    taps: &TapMap,
    tap_names: &[&str],
    roi: &BBox,
    out_size: usize,
    samples_per_bin: usize,
) -> Result<FeatureMap, FmError> {
    assert!(out_size >= 1 && samples_per_bin >= 1);
    let mut pooled: Option<FeatureMap> = None;
    for &name in tap_names {
        let tap = taps.get(name).ok_or_else(|| FmError::MissingTap(name.to_string()))?;
        let part = pool_one(&tap.map, tap.stride, roi, out_size, samples_per_bin);
        pooled = Some(match pooled {
            None => part,
            Some(acc) => concat_channels(&acc, &part)?,
        });
    }
    Ok(pooled.expect("tap_names is never empty"))
}

fn pool_one(
    map: &FeatureMap,
    stride: usize,
    roi: &BBox,
    out_size: usize,
    samples_per_bin: usize,
) -> FeatureMap {
    let s = stride as f64;
    let x1 = roi.x1 / s;
    let y1 = roi.y1 / s;
    let bin_w = (roi.x2 / s - x1) / out_size as f64;
    let bin_h = (roi.y2 / s - y1) / out_size as f64;
    let n = samples_per_bin;
    let inv = 1.0 / (n * n) as f64;

    let mut out = FeatureMap::zeros(map.channels(), out_size, out_size);
    let mut acc = vec![0.0f64; map.channels()];
    for by in 0..out_size {
        for bx in 0..out_size {
            acc.fill(0.0);
            for sy in 0..n {
                let y = y1 + (by as f64 + (sy as f64 + 0.5) / n as f64) * bin_h;
                for sx in 0..n {
                    let x = x1 + (bx as f64 + (sx as f64 + 0.5) / n as f64) * bin_w;
                    let sample = bilinear_sample(map, x, y);
                    for (a, v) in acc.iter_mut().zip(&sample) {
                        *a += *v as f64;
                    }
                }
            }
            for (c, a) in acc.iter().enumerate() {
                out.set(c, by, bx, (a * inv) as f32);
            }
        }
    }
    out
}

/// A fully connected layer; weights are stored `[out][in]` row-major and the
/// forward pass accumulates in `f64`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Dense {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Dense {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_features);
        let mut out = Vec::with_capacity(self.out_features);
        for o in 0..self.out_features {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            let mut sum = self.bias[o] as f64;
            for (w, v) in row.iter().zip(x) {
                sum += *w as f64 * *v;
            }
            out.push(sum);
        }
        out
    }
}

/// Weights of the relation head: a 1x1 convolution over the concatenated
/// pair feature, two fully connected layers, and the terminal classification
/// and regression maps.
#[derive(Debug, Clone)]
pub struct FmHeadWeights {
    pub roi_channels: usize,
    pub roi_size: usize,
    pub reduced: usize,
    pub hidden: usize,
    /// 1x1 reduction, stored `[reduced][2 * roi_channels]`.
    pub reduce: Dense,
    pub fc1: Dense,
    pub fc2: Dense,
    pub cls: Dense,
    pub reg: Dense,
}

impl FmHeadWeights {
    pub fn from_weights(
        w: &ModelWeights,
        roi_channels: usize,
        roi_size: usize,
        reduced: usize,
        hidden: usize,
    ) -> Result<Self, WeightsError> {
        let dense = |name: &str, out: usize, inp: usize, conv: bool| -> Result<Dense, WeightsError> {
            let shape: Vec<usize> = if conv { vec![out, inp, 1, 1] } else { vec![out, inp] };
            let weight = w.get_shaped(&format!("{name}.weight"), &shape)?;
            let bias = w.get_shaped(&format!("{name}.bias"), &[out])?;
            Ok(Dense {
                in_features: inp,
                out_features: out,
                weight: weight.values.clone(),
                bias: bias.values.clone(),
            })
        };
        let flat = reduced * roi_size * roi_size;
        Ok(FmHeadWeights {
            roi_channels,
            roi_size,
            reduced,
            hidden,
            reduce: dense("fm.reduce", reduced, 2 * roi_channels, true)?,
            fc1: dense("fm.fc1", hidden, flat, false)?,
            fc2: dense("fm.fc2", hidden, hidden, false)?,
            cls: dense("fm.cls", 2, hidden, false)?,
            reg: dense("fm.reg", 4, hidden, false)?,
        })
    }

    /// All-zero head: every pair scores 0.5 with zero deltas.
    pub fn zeros(roi_channels: usize, roi_size: usize, reduced: usize, hidden: usize) -> Self {
        let flat = reduced * roi_size * roi_size;
        FmHeadWeights {
            roi_channels,
            roi_size,
            reduced,
            hidden,
            reduce: Dense::zeros(2 * roi_channels, reduced),
            fc1: Dense::zeros(flat, hidden),
            fc2: Dense::zeros(hidden, hidden),
            cls: Dense::zeros(hidden, 2),
            reg: Dense::zeros(hidden, 4),
        }
    }

    fn check_roi(&self, roi: &FeatureMap) -> Result<(), FmError> {
        let expected = (self.roi_channels, self.roi_size, self.roi_size);
        if roi.shape() != expected {
            return Err(FmError::RoiShape {
                got: roi.shape(),
                expected,
            });
        }
        Ok(())
    }
}

/// The template half of the 1x1 reduction, precomputed once per sequence:
/// `partial[oc][pos] = bias[oc] + sum_ic W[oc][ic] * template[ic][pos]`.
#[derive(Debug, Clone)]
pub struct TemplateContext {
    partial: Vec<f64>,
    positions: usize,
}

/// Fold the template RoI into the reduction layer.
pub fn precompute_template(template_roi: &FeatureMap, w: &FmHeadWeights) -> Result<TemplateContext, FmError> {
    w.check_roi(template_roi)?;
    let positions = w.roi_size * w.roi_size;
    let mut partial = vec![0.0f64; w.reduced * positions];
    for oc in 0..w.reduced {
        let row = &w.reduce.weight[oc * w.reduce.in_features..(oc + 1) * w.reduce.in_features];
        let acc = &mut partial[oc * positions..(oc + 1) * positions];
        acc.fill(w.reduce.bias[oc] as f64);
        for ic in 0..w.roi_channels {
            let wv = row[ic] as f64;
            if wv == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(template_roi.channel(ic)) {
                *a += wv * *v as f64;
            }
        }
    }
    Ok(TemplateContext { partial, positions })
}

/// Relation head forward pass with a precomputed template context. Equal to
/// [`relation_head`] by construction (the template and proposal halves of the
/// 1x1 reduction are accumulated in the same order).
pub fn relation_head_with_context(
    ctx: &TemplateContext,
    proposal_roi: &FeatureMap,
    w: &FmHeadWeights,
) -> Result<(f64, BoxDelta), FmError> {
    w.check_roi(proposal_roi)?;
    let positions = ctx.positions;
    // Proposal channels occupy the second half of the reduction input.
    let mut x = vec![0.0f64; w.reduced * positions];
    for oc in 0..w.reduced {
        let row = &w.reduce.weight[oc * w.reduce.in_features..(oc + 1) * w.reduce.in_features];
        let acc = &mut x[oc * positions..(oc + 1) * positions];
        acc.copy_from_slice(&ctx.partial[oc * positions..(oc + 1) * positions]);
        for ic in 0..w.roi_channels {
            let wv = row[w.roi_channels + ic] as f64;
            if wv == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(proposal_roi.channel(ic)) {
                *a += wv * *v as f64;
            }
        }
    }
    for v in &mut x {
        if *v < 0.0 {
            *v = 0.0; // ReLU
        }
    }
    let mut h1 = w.fc1.forward(&x);
    for v in &mut h1 {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut h2 = w.fc2.forward(&h1);
    for v in &mut h2 {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let logits = w.cls.forward(&h2);
    let deltas = w.reg.forward(&h2);
    let fg = 1.0 / (1.0 + (logits[0] - logits[1]).exp());
    Ok((
        fg,
        BoxDelta {
            dx: deltas[0],
            dy: deltas[1],
            dw: deltas[2],
            dh: deltas[3],
        },
    ))
}

/// Score a (template, proposal) RoI pair: concatenate, reduce with a 1x1
/// convolution and ReLU, flatten channel-major, run two ReLU fully connected
/// layers, and read out a 2-way softmax foreground score and 4 box deltas.
pub fn relation_head(
    template_roi: &FeatureMap,
    proposal_roi: &FeatureMap,
    w: &FmHeadWeights,
) -> Result<(f64, BoxDelta), FmError> {
    let ctx = precompute_template(template_roi, w)?;
    relation_head_with_context(&ctx, proposal_roi, w)
}

/// Fine-stage label of one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FmLabel {
    Positive(BoxDelta),
    Negative,
}

impl FmLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, FmLabel::Positive(_))
    }
}

/// IoU with the ground truth strictly above 0.5 makes a proposal positive and
/// assigns it a regression target toward the ground truth; everything else,
/// including exact equality, is negative.
pub fn assign_fm_labels(proposals: &[Proposal], gt: &BBox) -> Vec<FmLabel> {
    proposals
        .iter()
        .map(|p| {
            if iou(&p.box_cm, gt) > FM_POSITIVE_IOU {
                FmLabel::Positive(encode_delta(gt, &p.box_cm))
            } else {
                FmLabel::Negative
            }
        })
        .collect()
}

/// Select up to `n` training samples at a 1:1 positive-negative ratio,
/// uniformly without replacement. When one class runs short the other fills
/// the remainder. Returns indices into `labels`, positives first.
pub fn sample_fm_training(labels: &[FmLabel], n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    shuffle(&mut pos, &mut rng);
    shuffle(&mut neg, &mut rng);

    let half = n / 2;
    let mut take_pos = half.min(pos.len());
    let mut take_neg = half.min(neg.len());
    // Fill the shortfall from whichever class has samples left.
    let short = n - (take_pos + take_neg).min(n);
    let extra_neg = short.min(neg.len() - take_neg);
    take_neg += extra_neg;
    take_pos += (short - extra_neg).min(pos.len() - take_pos);

    let mut out = Vec::with_capacity(take_pos + take_neg);
    out.extend_from_slice(&pos[..take_pos]);
    out.extend_from_slice(&neg[..take_neg]);
    out
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    // Fisher-Yates; kept local so the selection is stable across rand versions.
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

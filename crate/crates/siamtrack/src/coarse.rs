//! Coarse matching stage: correlation heads producing per-anchor scores and
//! box deltas, label assignment (standard and generalized), and proposal
//! selection with the previous-box reservation rule.
//!
//! Score map channel layout: channel `2a` is the background logit and
//! `2a + 1` the foreground logit of anchor `a`. Delta map channels
//! `4a .. 4a+4` are `(dx, dy, dw, dh)` of anchor `a`. Anchor `a` at response
//! cell `(i, j)` has flat index `(i * grid_w + j) * A + a`, matching
//! [`AnchorGrid`] storage order.

use thiserror::Error;

use crate::boxes::{clip_box, decode_delta, encode_delta, iou, nms, AnchorGrid, BBox, BoxDelta, BoxError};
use crate::tensor::{conv2d, cross_correlate, ConvParams, FeatureMap, KernelError};
use crate::weights::{ModelWeights, WeightsError};

/// IoU above which an anchor is a positive sample.
pub const CM_POSITIVE_IOU: f64 = 0.6;
/// IoU below which an anchor is a negative sample.
pub const CM_NEGATIVE_IOU: f64 = 0.3;
/// Overlap with an ignore region above which a negative anchor is ignored.
pub const CM_IGNORE_IOU: f64 = 0.3;

#[derive(Debug, Error)]
pub enum CmError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Box(#[from] BoxError),
    #[error("template has {got} channels, head expects {expected}")]
    TemplateChannels { got: usize, expected: usize },
    #[error("anchor grid is empty")]
    EmptyAnchors,
    #[error("anchor grid has {anchors} anchors but output implies {expected} ({grid_h}x{grid_w}x{per_cell})")]
    GridMismatch {
        anchors: usize,
        expected: usize,
        grid_h: usize,
        grid_w: usize,
        per_cell: usize,
    },
    #[error("score map has {channels} channels, not divisible as 2 x {anchors} anchors")]
    ScoreChannels { channels: usize, anchors: usize },
}

/// Weights of the coarse head: 1x1 template-lift convolutions producing the
/// per-anchor correlation kernels, and 1x1 post-correlation adjustments.
#[derive(Debug, Clone)]
pub struct CmHeadWeights {
    pub anchors: usize,
    pub channels: usize,
    pub cls_lift: ConvParams,
    pub reg_lift: ConvParams,
    pub cls_adjust: ConvParams,
    pub reg_adjust: ConvParams,
}

impl CmHeadWeights {
    pub fn from_weights(w: &ModelWeights, anchors: usize, channels: usize) -> Result<Self, WeightsError> {
        let conv = |name: &str, out: usize, inp: usize| -> Result<ConvParams, WeightsError> {
            let weight = w.get_shaped(&format!("{name}.weight"), &[out, inp, 1, 1])?;
            let bias = w.get_shaped(&format!("{name}.bias"), &[out])?;
            Ok(ConvParams {
                out_channels: out,
                in_channels: inp,
                kernel_h: 1,
                kernel_w: 1,
                stride: 1,
                padding: 0,
                weights: weight.values.clone(),
                bias: bias.values.clone(),
                apply_relu: false,
            })
        };
        Ok(CmHeadWeights {
            anchors,
            channels,
            cls_lift: conv("cm.cls_lift", 2 * anchors * channels, channels)?,
            reg_lift: conv("cm.reg_lift", 4 * anchors * channels, channels)?,
            cls_adjust: conv("cm.cls_adjust", 2 * anchors, 2 * anchors)?,
            reg_adjust: conv("cm.reg_adjust", 4 * anchors, 4 * anchors)?,
        })
    }

    /// Analytic pass-through head: for every anchor the foreground kernel is
    /// the template itself scaled by `1 / (channels * cells^2)`, so the
    /// foreground logit is the mean per-element correlation; background
    /// logits and all box deltas are zero.
    pub fn toy_passthrough(anchors: usize, channels: usize, template_cells: usize) -> Self {
        let scale = 1.0 / (channels * template_cells * template_cells) as f32;
        let mut cls_weights = vec![0.0f32; 2 * anchors * channels * channels];
        for a in 0..anchors {
            let fg_group = 2 * a + 1;
            for c in 0..channels {
                cls_weights[(fg_group * channels + c) * channels + c] = scale;
            }
        }
        let cls_lift = ConvParams {
            out_channels: 2 * anchors * channels,
            in_channels: channels,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            weights: cls_weights,
            bias: vec![0.0; 2 * anchors * channels],
            apply_relu: false,
        };
        let reg_lift = ConvParams {
            out_channels: 4 * anchors * channels,
            in_channels: channels,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            weights: vec![0.0; 4 * anchors * channels * channels],
            bias: vec![0.0; 4 * anchors * channels],
            apply_relu: false,
        };
        CmHeadWeights {
            anchors,
            channels,
            cls_lift,
            reg_lift,
            cls_adjust: ConvParams::identity(2 * anchors),
            reg_adjust: ConvParams::identity(4 * anchors),
        }
    }
}

/// Template features lifted into per-group correlation kernels. Cached by the
/// tracker for the whole sequence; groups whose kernel is identically zero
/// are flagged so their correlation can be skipped.
#[derive(Debug, Clone)]
pub struct LiftedKernels {
    cls: Vec<FeatureMap>,
    reg: Vec<FeatureMap>,
    cls_zero: Vec<bool>,
    reg_zero: Vec<bool>,
}

/// Per-anchor classification logits and box deltas over the response grid.
#[derive(Debug, Clone)]
pub struct CmOutput {
    pub score_map: FeatureMap,
    pub delta_map: FeatureMap,
}

impl CmOutput {
    pub fn grid(&self) -> (usize, usize) {
        (self.score_map.height(), self.score_map.width())
    }
}

fn split_groups(map: &FeatureMap, groups: usize) -> (Vec<FeatureMap>, Vec<bool>) {
    let per = map.channels() / groups;
    let mut kernels = Vec::with_capacity(groups);
    let mut zero = Vec::with_capacity(groups);
    for g in 0..groups {
        let k = map.channel_range(g * per, (g + 1) * per);
        zero.push(k.data().iter().all(|&v| v == 0.0));
        kernels.push(k);
    }
    (kernels, zero)
}

/// Lift template features into the 2A classification and 4A regression
/// correlation kernels.
pub fn lift_template(template: &FeatureMap, w: &CmHeadWeights) -> Result<LiftedKernels, CmError> {
    if template.channels() != w.channels {
        return Err(CmError::TemplateChannels {
            got: template.channels(),
            expected: w.channels,
        });
    }
    let cls = conv2d(template, &w.cls_lift)?;
    let reg = conv2d(template, &w.reg_lift)?;
    let (cls, cls_zero) = split_groups(&cls, 2 * w.anchors);
    let (reg, reg_zero) = split_groups(&reg, 4 * w.anchors);
    Ok(LiftedKernels {
        cls,
        reg,
        cls_zero,
        reg_zero,
    })
}

fn correlate_groups(
    search: &FeatureMap,
    kernels: &[FeatureMap],
    zero: &[bool],
) -> Result<FeatureMap, CmError> {
    let out_h = search.height() - kernels[0].height() + 1;
    let out_w = search.width() - kernels[0].width() + 1;
    let mut out = FeatureMap::zeros(kernels.len(), out_h, out_w);
    let plane = out_h * out_w;
    for (g, kernel) in kernels.iter().enumerate() {
        if zero[g] {
            continue; // zero kernel correlates to an all-zero plane
        }
        let resp = cross_correlate(search, kernel)?;
        out.data_mut()[g * plane..(g + 1) * plane].copy_from_slice(resp.data());
    }
    Ok(out)
}

/// Correlate cached lifted kernels against search features and apply the 1x1
/// adjustment convolutions.
pub fn correlate_lifted(
    lifted: &LiftedKernels,
    search: &FeatureMap,
    w: &CmHeadWeights,
) -> Result<CmOutput, CmError> {
    let cls = correlate_groups(search, &lifted.cls, &lifted.cls_zero)?;
    let reg = correlate_groups(search, &lifted.reg, &lifted.reg_zero)?;
    Ok(CmOutput {
        score_map: conv2d(&cls, &w.cls_adjust)?,
        delta_map: conv2d(&reg, &w.reg_adjust)?,
    })
}

/// Full coarse forward pass: lift the template, correlate group-wise against
/// the search features, adjust. `anchors` must match the head.
pub fn cm_forward(
    template: &FeatureMap,
    search: &FeatureMap,
    w: &CmHeadWeights,
    anchors: usize,
) -> Result<CmOutput, CmError> {
    assert_eq!(anchors, w.anchors, "anchor count disagrees with head weights");
    let lifted = lift_template(template, w)?;
    correlate_lifted(&lifted, search, w)
}

/// Label of one anchor under the training assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorLabel {
    /// Positive sample with its regression target.
    Positive(BoxDelta),
    Negative,
    Ignore,
}

impl AnchorLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, AnchorLabel::Positive(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Standard,
    /// Additionally treats same-category boxes as positive sources and
    /// blanks out annotated ignore regions.
    Generalized,
}

/// Per-anchor labels; one entry per anchor, in grid order.
#[derive(Debug, Clone)]
pub struct LabelAssignment {
    pub labels: Vec<AnchorLabel>,
}

impl LabelAssignment {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }
}

/// Assign training labels to every anchor.
///
/// Standard mode: IoU with `target` above 0.6 is positive, below 0.3
/// negative, in between ignored. Generalized mode additionally makes anchors
/// positive when they overlap any `same_category` box above 0.6 (regressing
/// toward the highest-IoU source box) and ignores otherwise-negative anchors
/// overlapping an `ignore_regions` entry above 0.3.
pub fn assign_cm_labels(
    anchors: &AnchorGrid,
    target: &BBox,
    same_category: &[BBox],
    ignore_regions: &[BBox],
    mode: LabelMode,
) -> LabelAssignment {
    let mut labels = Vec::with_capacity(anchors.len());
    for anchor in &anchors.anchors {
        let target_iou = iou(anchor, target);
        let standard = if target_iou > CM_POSITIVE_IOU {
            AnchorLabel::Positive(encode_delta(target, anchor))
        } else if target_iou < CM_NEGATIVE_IOU {
            AnchorLabel::Negative
        } else {
            AnchorLabel::Ignore
        };
        let label = match mode {
            LabelMode::Standard => standard,
            LabelMode::Generalized => {
                // Best positive source across the target and same-category boxes.
                let mut best_iou = target_iou;
                let mut best_box = target;
                for b in same_category {
                    let v = iou(anchor, b);
                    if v > best_iou {
                        best_iou = v;
                        best_box = b;
                    }
                }
                if best_iou > CM_POSITIVE_IOU {
                    AnchorLabel::Positive(encode_delta(best_box, anchor))
                } else if standard == AnchorLabel::Negative
                    && ignore_regions.iter().any(|r| iou(anchor, r) > CM_IGNORE_IOU)
                {
                    AnchorLabel::Ignore
                } else {
                    standard
                }
            }
        };
        labels.push(label);
    }
    LabelAssignment { labels }
}

/// A candidate box flowing through the pipeline. The coarse stage fills the
/// first four fields; the fine stage and fusion fill the rest.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub anchor_index: usize,
    /// Decoded and clipped coarse box.
    pub box_cm: BBox,
    /// Foreground probability from the coarse stage.
    pub score_cm: f64,
    /// True for the candidate reserved for overlapping the previous box.
    pub reserved: bool,
    pub score_fm: Option<f64>,
    pub box_fm: Option<BBox>,
    pub fused_score: Option<f64>,
    pub fused_box: Option<BBox>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Select candidate boxes from a coarse output.
///
/// The decoded box with the largest IoU against `prev_box` is reserved and
/// bypasses both the score filter and NMS. The remaining boxes are filtered
/// at `score_thr`, suppressed at `nms_thr`, and the top `k` by score are
/// kept. The reserved candidate is returned first, followed by the kept
/// candidates in descending score order; no shape or window penalties are
/// applied here.
pub fn select_proposals(
    out: &CmOutput,
    anchors: &AnchorGrid,
    prev_box: &BBox,
    k: usize,
    nms_thr: f64,
    score_thr: f64,
    bounds: (f64, f64),
) -> Result<Vec<Proposal>, CmError> {
    assert!(k >= 1, "k must be >= 1");
    if anchors.is_empty() {
        return Err(CmError::EmptyAnchors);
    }
    let (grid_h, grid_w) = out.grid();
    let per_cell = anchors.anchors_per_cell();
    if out.score_map.channels() != 2 * per_cell {
        return Err(CmError::ScoreChannels {
            channels: out.score_map.channels(),
            anchors: per_cell,
        });
    }
    if anchors.len() != grid_h * grid_w * per_cell {
        return Err(CmError::GridMismatch {
            anchors: anchors.len(),
            expected: grid_h * grid_w * per_cell,
            grid_h,
            grid_w,
            per_cell,
        });
    }

    let n = anchors.len();
    let mut scores = Vec::with_capacity(n);
    let mut boxes = Vec::with_capacity(n);
    for i in 0..grid_h {
        for j in 0..grid_w {
            for a in 0..per_cell {
                let bg = out.score_map.get(2 * a, i, j) as f64;
                let fg = out.score_map.get(2 * a + 1, i, j) as f64;
                scores.push(sigmoid(fg - bg));
                let delta = BoxDelta {
                    dx: out.delta_map.get(4 * a, i, j) as f64,
                    dy: out.delta_map.get(4 * a + 1, i, j) as f64,
                    dw: out.delta_map.get(4 * a + 2, i, j) as f64,
                    dh: out.delta_map.get(4 * a + 3, i, j) as f64,
                };
                let anchor = &anchors.anchors[(i * grid_w + j) * per_cell + a];
                boxes.push(clip_box(&decode_delta(anchor, &delta), bounds.0, bounds.1));
            }
        }
    }

    // Reservation rule: best overlap with the previous box, ties to the
    // lower index.
    let mut reserved_idx = 0;
    let mut reserved_iou = f64::NEG_INFINITY;
    for (idx, b) in boxes.iter().enumerate() {
        let v = iou(b, prev_box);
        if v > reserved_iou {
            reserved_iou = v;
            reserved_idx = idx;
        }
    }

    let mut cand_idx: Vec<usize> = (0..n)
        .filter(|&i| i != reserved_idx && scores[i] >= score_thr)
        .collect();
    let cand_boxes: Vec<BBox> = cand_idx.iter().map(|&i| boxes[i]).collect();
    let cand_scores: Vec<f64> = cand_idx.iter().map(|&i| scores[i]).collect();
    let kept = nms(&cand_boxes, &cand_scores, nms_thr)?;
    cand_idx = kept.into_iter().take(k).map(|pos| cand_idx[pos]).collect();

    let mut proposals = Vec::with_capacity(cand_idx.len() + 1);
    proposals.push(Proposal {
        anchor_index: reserved_idx,
        box_cm: boxes[reserved_idx],
        score_cm: scores[reserved_idx],
        reserved: true,
        score_fm: None,
        box_fm: None,
        fused_score: None,
        fused_box: None,
    });
    for idx in cand_idx {
        proposals.push(Proposal {
            anchor_index: idx,
            box_cm: boxes[idx],
            score_cm: scores[idx],
            reserved: false,
            score_fm: None,
            box_fm: None,
            fused_score: None,
            fused_box: None,
        });
    }
    Ok(proposals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::generate_anchors;
    use crate::model::{init_weights, ModelConfig};

    fn toy_head(a: usize, c: usize, cells: usize) -> CmHeadWeights {
        CmHeadWeights::toy_passthrough(a, c, cells)
    }

    #[test]
    fn forward_shape_contract_small() {
        let a = 5;
        let c = 8;
        let head = toy_head(a, c, 6);
        let template = FeatureMap::filled(c, 6, 6, 0.5);
        let search = FeatureMap::filled(c, 34, 34, 0.25);
        let out = cm_forward(&template, &search, &head, a).unwrap();
        assert_eq!(out.score_map.shape(), (10, 29, 29));
        assert_eq!(out.delta_map.shape(), (20, 29, 29));
    }

    #[test]
    fn zero_weights_give_uniform_half_probability() {
        let cfg = ModelConfig::reduced_for_tests();
        let mut weights = init_weights(&cfg, 0);
        // Overwrite every cm entry with zeros.
        let zeroed: Vec<(String, Vec<usize>)> = cfg
            .weight_shapes()
            .into_iter()
            .filter(|(n, _)| n.starts_with("cm."))
            .collect();
        let mut z = crate::weights::ModelWeights::new();
        for e in weights.entries() {
            if e.name.starts_with("cm.") {
                continue;
            }
            z.insert(&e.name, e.shape.clone(), e.values.clone()).unwrap();
        }
        for (name, shape) in zeroed {
            let n: usize = shape.iter().product();
            z.insert(&name, shape, vec![0.0; n]).unwrap();
        }
        weights = z;

        let head = CmHeadWeights::from_weights(&weights, cfg.anchors, cfg.feat_channels).unwrap();
        let template = FeatureMap::filled(cfg.feat_channels, cfg.template_cells, cfg.template_cells, 0.7);
        let search = FeatureMap::filled(cfg.feat_channels, 12, 12, 0.3);
        let out = cm_forward(&template, &search, &head, cfg.anchors).unwrap();
        assert!(out.score_map.data().iter().all(|&v| v == 0.0));

        let (h, w) = out.grid();
        let grid = generate_anchors(h, w, 8, 64.0, &[0.5, 1.0, 2.0]);
        let prev = BBox::from_center(40.0, 40.0, 30.0, 30.0).unwrap();
        let proposals = select_proposals(&out, &grid, &prev, 3, 0.5, 0.05, (96.0, 96.0)).unwrap();
        for p in &proposals {
            assert!((p.score_cm - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_unfused_composition() {
        use rand::{Rng, SeedableRng};
        let cfg = ModelConfig::reduced_for_tests();
        let weights = init_weights(&cfg, 9);
        let head = CmHeadWeights::from_weights(&weights, cfg.anchors, cfg.feat_channels).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let template = FeatureMap::from_fn(cfg.feat_channels, cfg.template_cells, cfg.template_cells, |_, _, _| {
            rng.gen_range(-1.0..1.0)
        });
        let search = FeatureMap::from_fn(cfg.feat_channels, 11, 13, |_, _, _| rng.gen_range(-1.0..1.0));
        let out = cm_forward(&template, &search, &head, cfg.anchors).unwrap();

        // Independent composition of the tensor ops, one group at a time.
        let lifted_cls = conv2d(&template, &head.cls_lift).unwrap();
        let c = cfg.feat_channels;
        let groups = 2 * cfg.anchors;
        let out_h = search.height() - template.height() + 1;
        let out_w = search.width() - template.width() + 1;
        let mut stacked = FeatureMap::zeros(groups, out_h, out_w);
        for g in 0..groups {
            let kernel = lifted_cls.channel_range(g * c, (g + 1) * c);
            let resp = cross_correlate(&search, &kernel).unwrap();
            for y in 0..out_h {
                for x in 0..out_w {
                    stacked.set(g, y, x, resp.get(0, y, x));
                }
            }
        }
        let reference = conv2d(&stacked, &head.cls_adjust).unwrap();
        assert_eq!(out.score_map.shape(), reference.shape());
        for (a, b) in out.score_map.data().iter().zip(reference.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn label_threshold_table() {
        let grid = generate_anchors(1, 3, 64, 64.0, &[1.0]);
        // Anchor 0 centered at (32, 32): boxes chosen for exact IoU levels.
        let anchor0 = grid.anchors[0];
        let labels = assign_cm_labels(&grid, &anchor0, &[], &[], LabelMode::Standard);
        assert!(matches!(labels.labels[0], AnchorLabel::Positive(d) if d == BoxDelta::default()));
        // Anchors 1 and 2 are 64 and 128 pixels away; the far one is disjoint.
        assert_eq!(labels.labels[2], AnchorLabel::Negative);

        // IoU 0.45 target against anchor 0: a box of equal height shifted to
        // overlap 0.45/(2-0.45)... simpler: width scaled so IoU = 0.45.
        let partial = BBox::from_center(32.0, 32.0, 64.0 * 0.45, 64.0).unwrap();
        let labels = assign_cm_labels(&grid, &partial, &[], &[], LabelMode::Standard);
        assert_eq!(labels.labels[0], AnchorLabel::Ignore);
    }

    #[test]
    fn generalized_mode_adds_positives_and_ignores() {
        let grid = generate_anchors(1, 2, 64, 64.0, &[1.0]);
        let far_target = BBox::from_center(1000.0, 1000.0, 64.0, 64.0).unwrap();
        let same_cat = grid.anchors[0];

        let std = assign_cm_labels(&grid, &far_target, &[same_cat], &[], LabelMode::Standard);
        assert_eq!(std.labels[0], AnchorLabel::Negative);

        let gen = assign_cm_labels(&grid, &far_target, &[same_cat], &[], LabelMode::Generalized);
        assert!(matches!(gen.labels[0], AnchorLabel::Positive(d) if d == BoxDelta::default()));

        // Ignore region over anchor 1 demotes it from negative to ignore.
        let ignore = grid.anchors[1];
        let gen2 = assign_cm_labels(&grid, &far_target, &[], &[ignore], LabelMode::Generalized);
        assert_eq!(gen2.labels[1], AnchorLabel::Ignore);
        // But a positive anchor is never demoted.
        let gen3 = assign_cm_labels(&grid, &same_cat, &[], &[same_cat], LabelMode::Generalized);
        assert!(gen3.labels[0].is_positive());
    }

    #[test]
    fn generalized_regression_targets_best_source() {
        let grid = generate_anchors(1, 1, 64, 64.0, &[1.0]);
        let anchor = grid.anchors[0];
        // Two positive sources; the second overlaps more.
        let weaker = BBox::from_center(36.0, 32.0, 64.0, 64.0).unwrap();
        let stronger = BBox::from_center(33.0, 32.0, 64.0, 64.0).unwrap();
        let gen = assign_cm_labels(&grid, &weaker, &[stronger], &[], LabelMode::Generalized);
        match gen.labels[0] {
            AnchorLabel::Positive(d) => {
                let expected = encode_delta(&stronger, &anchor);
                assert!((d.dx - expected.dx).abs() < 1e-12);
            }
            _ => panic!("expected positive"),
        }
    }

    #[test]
    fn selection_reserves_previous_box_candidate() {
        let a = 1;
        let (h, w) = (5, 5);
        let score_map = FeatureMap::zeros(2 * a, h, w); // all scores equal
        let delta_map = FeatureMap::zeros(4 * a, h, w);
        let out = CmOutput { score_map, delta_map };
        let grid = generate_anchors(h, w, 16, 24.0, &[1.0]);
        // Previous box equals the decoded candidate at cell (2, 3).
        let prev = grid.anchors[2 * w + 3];
        let proposals = select_proposals(&out, &grid, &prev, 3, 0.5, 0.0, (200.0, 200.0)).unwrap();
        assert!(proposals[0].reserved);
        assert_eq!(proposals[0].anchor_index, 2 * w + 3);
        assert!(proposals.len() <= 3 + 1);
    }

    #[test]
    fn selection_k1_with_clear_maximum_yields_two() {
        let a = 1;
        let (h, w) = (3, 3);
        let mut score_map = FeatureMap::zeros(2 * a, h, w);
        score_map.set(1, 0, 0, 5.0); // strong foreground at cell (0, 0)
        let delta_map = FeatureMap::zeros(4 * a, h, w);
        let out = CmOutput { score_map, delta_map };
        let grid = generate_anchors(h, w, 40, 24.0, &[1.0]);
        // Previous box sits at the far cell, so reserved != top-1.
        let prev = grid.anchors[8];
        let proposals = select_proposals(&out, &grid, &prev, 1, 0.5, 0.0, (200.0, 200.0)).unwrap();
        assert_eq!(proposals.len(), 2);
        assert!(proposals[0].reserved);
        assert_eq!(proposals[1].anchor_index, 0);
    }

    #[test]
    fn selection_rejects_empty_grid() {
        let out = CmOutput {
            score_map: FeatureMap::zeros(2, 1, 1),
            delta_map: FeatureMap::zeros(4, 1, 1),
        };
        let empty = AnchorGrid {
            anchors: vec![],
            grid_h: 0,
            grid_w: 0,
            stride: 8,
            ratios: vec![1.0],
            base_size: 64.0,
        };
        let prev = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            select_proposals(&out, &empty, &prev, 1, 0.5, 0.0, (10.0, 10.0)),
            Err(CmError::EmptyAnchors)
        ));
    }

    #[test]
    fn selection_invariant_to_per_location_logit_shift() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = 2;
        let (h, w) = (6, 6);
        let score_map = FeatureMap::from_fn(2 * a, h, w, |_, _, _| rng.gen_range(-2.0..2.0));
        let delta_map = FeatureMap::from_fn(4 * a, h, w, |_, _, _| rng.gen_range(-0.2..0.2));
        let out = CmOutput {
            score_map: score_map.clone(),
            delta_map: delta_map.clone(),
        };
        let grid = generate_anchors(h, w, 12, 20.0, &[0.5, 1.0]);
        let prev = BBox::from_center(30.0, 30.0, 20.0, 20.0).unwrap();
        let base = select_proposals(&out, &grid, &prev, 4, 0.5, 0.05, (80.0, 80.0)).unwrap();

        // Add a per-location constant to both logits of every anchor.
        let mut shifted = score_map;
        for i in 0..h {
            for j in 0..w {
                let c = rng.gen_range(-1.0..1.0f32);
                for anchor in 0..a {
                    shifted.set(2 * anchor, i, j, shifted.get(2 * anchor, i, j) + c);
                    shifted.set(2 * anchor + 1, i, j, shifted.get(2 * anchor + 1, i, j) + c);
                }
            }
        }
        let out2 = CmOutput {
            score_map: shifted,
            delta_map,
        };
        let moved = select_proposals(&out2, &grid, &prev, 4, 0.5, 0.05, (80.0, 80.0)).unwrap();
        let idx = |ps: &[Proposal]| ps.iter().map(|p| p.anchor_index).collect::<Vec<_>>();
        assert_eq!(idx(&base), idx(&moved));
    }
}

//! Score/box fusion, the cosine-window penalty, and the per-frame tracking
//! loop: crop, extract, coarse proposals, fine rescoring, fusion, window
//! penalty, state update.
//!
//! Coordinate conventions: a crop of side `L` centered at `(cx, cy)` resized
//! to `N` output pixels maps output pixel `u` to image coordinate
//! `x = cx + (u - (N - 1) / 2) * L / N`; boxes map through the inverse
//! affine. The anchor grid is translated by `((t - 1) / 2) * stride`
//! (`t` = correlation kernel cells) so anchor centers sit on the
//! receptive-field centers of the response map.

use std::sync::Arc;

use thiserror::Error;

use crate::backbone::{central_crop, BackboneError, TapMap};
use crate::boxes::{clip_box, decode_delta, generate_anchors, AnchorGrid, BBox};
use crate::coarse::{correlate_lifted, lift_template, select_proposals, CmError, LiftedKernels, Proposal};
use crate::fine::{precompute_template, relation_head_with_context, roi_align, FmError, TemplateContext};
use crate::model::Model;
use crate::tensor::FeatureMap;

/// Taps pooled for every RoI, in concatenation order.
pub const ROI_TAPS: [&str; 2] = ["conv2", "conv4"];

#[derive(Debug, Error)]
pub enum TrackError {
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Cm(#[from] CmError),
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error("degenerate fusion scores: u_c={u_c}, u_f={u_f}, w_box={w_box}")]
    DegenerateScores { u_c: f64, u_f: f64, w_box: f64 },
    #[error("initialization box ({x1}, {y1}, {x2}, {y2}) is not inside the {width}x{height} frame")]
    BoxOutsideImage {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: usize,
        height: usize,
    },
    #[error("search features ({feat}x{feat}) are smaller than the {cells}x{cells} correlation kernel")]
    GridDegenerate { feat: usize, cells: usize },
    #[error("sequence and ground truth must align: {frames} frames, {boxes} boxes")]
    SequenceMismatch { frames: usize, boxes: usize },
}

/// Weights of the fine stage in the final fusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    /// Score blend weight, in `[0, 1]`.
    pub w_cls: f64,
    /// Box blend weight, `>= 0`.
    pub w_box: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights { w_cls: 0.5, w_box: 2.0 }
    }
}

/// Final score: `(1 - w_cls) * u_c + w_cls * u_f`.
pub fn fuse_score(u_c: f64, u_f: f64, fw: &FusionWeights) -> f64 {
    (1.0 - fw.w_cls) * u_c + fw.w_cls * u_f
}

/// Final box: coordinate-wise convex combination in center form with weights
/// `u_c / (w_box * u_f + u_c)` on the coarse box and
/// `w_box * u_f / (w_box * u_f + u_c)` on the fine box.
pub fn fuse_box(
    b_c: &BBox,
    b_f: &BBox,
    u_c: f64,
    u_f: f64,
    fw: &FusionWeights,
) -> Result<BBox, TrackError> {
    let denom = fw.w_box * u_f + u_c;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(TrackError::DegenerateScores {
            u_c,
            u_f,
            w_box: fw.w_box,
        });
    }
    let wc = u_c / denom;
    let wf = fw.w_box * u_f / denom;
    let (ccx, ccy) = b_c.center();
    let (fcx, fcy) = b_f.center();
    let cx = wc * ccx + wf * fcx;
    let cy = wc * ccy + wf * fcy;
    let w = wc * b_c.width() + wf * b_f.width();
    let h = wc * b_c.height() + wf * b_f.height();
    Ok(BBox {
        x1: cx - w / 2.0,
        y1: cy - h / 2.0,
        x2: cx + w / 2.0,
        y2: cy + h / 2.0,
    })
}

/// Outer product of two 1-D Hann windows: `0.5 * (1 - cos(2 pi i / (n - 1)))`
/// per axis, and `[1]` for a single-element axis.
#[derive(Debug, Clone)]
pub struct CosineWindow {
    pub grid_h: usize,
    pub grid_w: usize,
    values: Vec<f64>,
}

impl CosineWindow {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid_w + j]
    }
}

fn hann(i: usize, n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
    }
}

pub fn cosine_window(h: usize, w: usize) -> CosineWindow {
    assert!(h >= 1 && w >= 1);
    let col: Vec<f64> = (0..h).map(|i| hann(i, h)).collect();
    let row: Vec<f64> = (0..w).map(|j| hann(j, w)).collect();
    let mut values = Vec::with_capacity(h * w);
    for &c in &col {
        for &r in &row {
            values.push(c * r);
        }
    }
    CosineWindow {
        grid_h: h,
        grid_w: w,
        values,
    }
}

/// Placement of the response grid in crop coordinates: cell `(i, j)` is
/// centered at `(offset + (j + 0.5) * stride, offset + (i + 0.5) * stride)`.
#[derive(Debug, Clone, Copy)]
pub struct ResponseGeometry {
    pub stride: usize,
    pub offset_x: f64,
    pub offset_y: f64,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl ResponseGeometry {
    /// Grid cell nearest to a point in crop coordinates.
    pub fn nearest_cell(&self, x: f64, y: f64) -> (usize, usize) {
        let s = self.stride as f64;
        let j = ((x - self.offset_x) / s - 0.5).round();
        let i = ((y - self.offset_y) / s - 0.5).round();
        let clamp = |v: f64, n: usize| -> usize { (v.max(0.0) as usize).min(n - 1) };
        (clamp(i, self.grid_h), clamp(j, self.grid_w))
    }
}

/// Blend fused scores with the window value at each proposal's center:
/// `score' = (1 - influence) * u + influence * window(nearest cell)`.
pub fn apply_window_penalty(
    proposals: &[Proposal],
    window: &CosineWindow,
    influence: f64,
    geom: &ResponseGeometry,
) -> Vec<f64> {
    proposals
        .iter()
        .map(|p| {
            let u = p.fused_score.unwrap_or(p.score_cm);
            let b = p.fused_box.as_ref().unwrap_or(&p.box_cm);
            let (cx, cy) = b.center();
            let (i, j) = geom.nearest_cell(cx, cy);
            (1.0 - influence) * u + influence * window.value(i, j)
        })
        .collect()
}

/// Size-interpolated state update: the center snaps to the winning box, the
/// size moves by `rate` toward it.
pub fn update_box(current: &BBox, winner: &BBox, rate: f64) -> BBox {
    let (cx, cy) = winner.center();
    let w = (1.0 - rate) * current.width() + rate * winner.width();
    let h = (1.0 - rate) * current.height() + rate * winner.height();
    BBox {
        x1: cx - w / 2.0,
        y1: cy - h / 2.0,
        x2: cx + w / 2.0,
        y2: cy + h / 2.0,
    }
}

/// Side of the context-padded square crop around a box:
/// `sqrt((w + p)(h + p))` with `p = (w + h) / 2`.
pub fn context_side(b: &BBox) -> f64 {
    let p = (b.width() + b.height()) / 2.0;
    ((b.width() + p) * (b.height() + p)).sqrt()
}

/// A square crop-and-resize region: side `side` centered at `(cx, cy)`,
/// resampled to `out_size` pixels.
#[derive(Debug, Clone, Copy)]
pub struct CropSpec {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
    pub out_size: usize,
}

impl CropSpec {
    pub fn scale(&self) -> f64 {
        self.side / self.out_size as f64
    }

    /// Image coordinate sampled by output pixel index `u` (per axis).
    fn image_coord(&self, u: f64, center: f64) -> f64 {
        center + (u - (self.out_size as f64 - 1.0) / 2.0) * self.scale()
    }

    fn crop_coord(&self, x: f64, center: f64) -> f64 {
        (x - center) / self.scale() + (self.out_size as f64 - 1.0) / 2.0
    }
}

/// Map a box from image coordinates into crop coordinates.
pub fn image_to_crop(b: &BBox, spec: &CropSpec) -> BBox {
    BBox {
        x1: spec.crop_coord(b.x1, spec.cx),
        y1: spec.crop_coord(b.y1, spec.cy),
        x2: spec.crop_coord(b.x2, spec.cx),
        y2: spec.crop_coord(b.y2, spec.cy),
    }
}

/// Map a box from crop coordinates back to image coordinates.
pub fn crop_to_image(b: &BBox, spec: &CropSpec) -> BBox {
    BBox {
        x1: spec.image_coord(b.x1, spec.cx),
        y1: spec.image_coord(b.y1, spec.cy),
        x2: spec.image_coord(b.x2, spec.cx),
        y2: spec.image_coord(b.y2, spec.cy),
    }
}

/// Bilinear crop-and-resize. Sample points whose neighbours fall outside the
/// frame use the per-channel mean of the frame for those neighbours.
pub fn crop_resize(image: &FeatureMap, spec: &CropSpec) -> FeatureMap {
    let n = spec.out_size;
    let channels = image.channels();
    let means: Vec<f64> = (0..channels)
        .map(|c| {
            let plane = image.channel(c);
            plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len() as f64
        })
        .collect();
    let (h, w) = (image.height() as isize, image.width() as isize);
    let mut out = FeatureMap::zeros(channels, n, n);
    for v in 0..n {
        let y = spec.image_coord(v as f64, spec.cy);
        let y0 = y.floor();
        let wy = y - y0;
        let y0 = y0 as isize;
        for u in 0..n {
            let x = spec.image_coord(u as f64, spec.cx);
            let x0 = x.floor();
            let wx = x - x0;
            let x0 = x0 as isize;
            for c in 0..channels {
                let fetch = |yy: isize, xx: isize| -> f64 {
                    if yy < 0 || xx < 0 || yy >= h || xx >= w {
                        means[c]
                    } else {
                        image.get(c, yy as usize, xx as usize) as f64
                    }
                };
                let val = (1.0 - wx) * (1.0 - wy) * fetch(y0, x0)
                    + wx * (1.0 - wy) * fetch(y0, x0 + 1)
                    + (1.0 - wx) * wy * fetch(y0 + 1, x0)
                    + wx * wy * fetch(y0 + 1, x0 + 1);
                out.set(c, v, u, val as f32);
            }
        }
    }
    out
}

/// Runtime parameters of the tracker. Every value can be overridden; the
/// defaults are the shipped configuration.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub template_size: usize,
    pub search_size: usize,
    /// Number of candidates passed to the fine stage (the reserved candidate
    /// is additional).
    pub proposal_count: usize,
    pub nms_threshold: f64,
    pub score_threshold: f64,
    pub fusion: FusionWeights,
    pub window_influence: f64,
    pub size_lr: f64,
    pub anchor_ratios: Vec<f64>,
    pub anchor_base_size: f64,
    pub samples_per_bin: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            template_size: 127,
            search_size: 271,
            proposal_count: 9,
            nms_threshold: 0.5,
            score_threshold: 0.05,
            fusion: FusionWeights::default(),
            window_influence: 0.42,
            size_lr: 0.3,
            anchor_ratios: vec![0.33, 0.5, 1.0, 2.0, 3.0],
            anchor_base_size: 64.0,
            samples_per_bin: 2,
        }
    }
}

/// One tracked frame: the reported box in image coordinates and its fused
/// score before the window penalty.
#[derive(Debug, Clone, Copy)]
pub struct FrameOutput {
    pub bbox: BBox,
    pub score: f64,
}

/// Per-sequence tracker state. Template features are extracted once at
/// initialization and never mutated afterwards.
pub struct TrackerState {
    model: Arc<Model>,
    config: TrackerConfig,
    template_kernel: FeatureMap,
    template_roi: FeatureMap,
    lifted: LiftedKernels,
    template_ctx: TemplateContext,
    anchors: AnchorGrid,
    window: CosineWindow,
    geom: ResponseGeometry,
    current: BBox,
}

impl TrackerState {
    pub fn current_box(&self) -> BBox {
        self.current
    }

    /// Central-cropped correlation kernel features (channels x t x t).
    pub fn template_kernel(&self) -> &FeatureMap {
        &self.template_kernel
    }

    /// Pooled template RoI (roi_channels x roi_size x roi_size).
    pub fn template_roi(&self) -> &FeatureMap {
        &self.template_roi
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }
}

/// Build the response-grid geometry and anchors shared by tracking and the
/// recall protocol.
pub(crate) fn response_layout(
    model: &Model,
    config: &TrackerConfig,
) -> Result<(AnchorGrid, CosineWindow, ResponseGeometry), TrackError> {
    let (fh, fw) = model.conv5_dims(config.search_size);
    let cells = model.config.template_cells;
    if fh < cells || fw < cells {
        return Err(TrackError::GridDegenerate {
            feat: fh.min(fw),
            cells,
        });
    }
    let (grid_h, grid_w) = (fh - cells + 1, fw - cells + 1);
    let stride = model.conv5_stride();
    let offset = (cells - 1) as f64 / 2.0 * stride as f64;
    let anchors = generate_anchors(
        grid_h,
        grid_w,
        stride,
        config.anchor_base_size,
        &config.anchor_ratios,
    )
    .translate(offset, offset);
    let window = cosine_window(grid_h, grid_w);
    let geom = ResponseGeometry {
        stride,
        offset_x: offset,
        offset_y: offset,
        grid_h,
        grid_w,
    };
    Ok((anchors, window, geom))
}

/// Initialize a tracker on the first frame: crop the context-padded template
/// region, extract and cache its features, the correlation kernels, and the
/// template RoI.
pub fn init_tracker(
    image: &FeatureMap,
    gt_box: &BBox,
    model: Arc<Model>,
    config: TrackerConfig,
) -> Result<TrackerState, TrackError> {
    let (w, h) = (image.width(), image.height());
    if gt_box.x1 < 0.0 || gt_box.y1 < 0.0 || gt_box.x2 > w as f64 || gt_box.y2 > h as f64 {
        return Err(TrackError::BoxOutsideImage {
            x1: gt_box.x1,
            y1: gt_box.y1,
            x2: gt_box.x2,
            y2: gt_box.y2,
            width: w,
            height: h,
        });
    }
    let (cx, cy) = gt_box.center();
    let spec = CropSpec {
        cx,
        cy,
        side: context_side(gt_box),
        out_size: config.template_size,
    };
    let crop = crop_resize(image, &spec);
    let taps = model.extract(&crop)?;
    let conv5 = taps
        .get("conv5")
        .ok_or_else(|| BackboneError::UnknownTap("conv5".into()))?;
    let template_kernel = central_crop(&conv5.map, model.config.template_cells)?;
    let lifted = lift_template(&template_kernel, &model.cm)?;

    let gt_crop = image_to_crop(gt_box, &spec);
    let template_roi = roi_align(
        &taps,
        &ROI_TAPS,
        &gt_crop,
        model.config.roi_size,
        config.samples_per_bin,
    )?;
    let template_ctx = precompute_template(&template_roi, &model.fm)?;

    let (anchors, window, geom) = response_layout(&model, &config)?;
    Ok(TrackerState {
        model,
        config,
        template_kernel,
        template_roi,
        lifted,
        template_ctx,
        anchors,
        window,
        geom,
        current: *gt_box,
    })
}

/// Track one frame, returning the updated box and mutating the state.
pub fn track_frame(state: &mut TrackerState, image: &FeatureMap) -> Result<FrameOutput, TrackError> {
    let config = &state.config;
    let model = &state.model;
    let (cx, cy) = state.current.center();
    let spec = CropSpec {
        cx,
        cy,
        side: context_side(&state.current) * config.search_size as f64 / config.template_size as f64,
        out_size: config.search_size,
    };
    let crop = crop_resize(image, &spec);
    let taps = model.extract(&crop)?;
    let conv5 = taps
        .get("conv5")
        .ok_or_else(|| BackboneError::UnknownTap("conv5".into()))?;

    let cm_out = correlate_lifted(&state.lifted, &conv5.map, &model.cm)?;
    let prev_crop = image_to_crop(&state.current, &spec);
    let bounds = (config.search_size as f64, config.search_size as f64);
    let mut proposals = select_proposals(
        &cm_out,
        &state.anchors,
        &prev_crop,
        config.proposal_count,
        config.nms_threshold,
        config.score_threshold,
        bounds,
    )?;

    for p in &mut proposals {
        let roi = roi_align(&taps, &ROI_TAPS, &p.box_cm, model.config.roi_size, config.samples_per_bin)?;
        let (u_f, delta) = relation_head_with_context(&state.template_ctx, &roi, &model.fm)?;
        let box_fm = clip_box(&decode_delta(&p.box_cm, &delta), bounds.0, bounds.1);
        p.score_fm = Some(u_f);
        p.box_fm = Some(box_fm);
        p.fused_score = Some(fuse_score(p.score_cm, u_f, &config.fusion));
        p.fused_box = Some(fuse_box(&p.box_cm, &box_fm, p.score_cm, u_f, &config.fusion)?);
    }

    let penalized = apply_window_penalty(&proposals, &state.window, config.window_influence, &state.geom);
    let mut best = 0;
    for (i, &s) in penalized.iter().enumerate() {
        if s > penalized[best] {
            best = i;
        }
    }
    let winner = &proposals[best];
    let winner_box = crop_to_image(winner.fused_box.as_ref().expect("fused above"), &spec);
    state.current = update_box(&state.current, &winner_box, config.size_lr);
    Ok(FrameOutput {
        bbox: state.current,
        score: winner.fused_score.expect("fused above"),
    })
}

/// Track a whole sequence from its first-frame box. Returns one output per
/// frame; frame 0 is the initialization box with score 1.
pub fn track_sequence(
    frames: &[FeatureMap],
    init_box: &BBox,
    model: Arc<Model>,
    config: TrackerConfig,
) -> Result<Vec<FrameOutput>, TrackError> {
    let mut outputs = Vec::with_capacity(frames.len());
    let mut state = init_tracker(&frames[0], init_box, model, config)?;
    outputs.push(FrameOutput {
        bbox: *init_box,
        score: 1.0,
    });
    for frame in &frames[1..] {
        outputs.push(track_frame(&mut state, frame)?);
    }
    Ok(outputs)
}

/// Coarse-stage proposals for one frame whose search region is centered on a
/// reference box (the previous frame's ground truth in the recall protocol).
/// Returns the proposals mapped back to image coordinates.
pub fn propose_around(
    state: &TrackerState,
    image: &FeatureMap,
    reference: &BBox,
    k: usize,
) -> Result<Vec<Proposal>, TrackError> {
    let config = &state.config;
    let (cx, cy) = reference.center();
    let spec = CropSpec {
        cx,
        cy,
        side: context_side(reference) * config.search_size as f64 / config.template_size as f64,
        out_size: config.search_size,
    };
    let crop = crop_resize(image, &spec);
    let taps = state.model.extract(&crop)?;
    let conv5 = taps
        .get("conv5")
        .ok_or_else(|| BackboneError::UnknownTap("conv5".into()))?;
    let cm_out = correlate_lifted(&state.lifted, &conv5.map, &state.model.cm)?;
    let prev_crop = image_to_crop(reference, &spec);
    let bounds = (config.search_size as f64, config.search_size as f64);
    let mut proposals = select_proposals(
        &cm_out,
        &state.anchors,
        &prev_crop,
        k,
        config.nms_threshold,
        config.score_threshold,
        bounds,
    )?;
    for p in &mut proposals {
        p.box_cm = crop_to_image(&p.box_cm, &spec);
    }
    Ok(proposals)
}

//! A two-stage Siamese visual object tracker built from first principles.
//!
//! The pipeline extracts Siamese backbone features once per frame, proposes
//! candidate boxes with a correlation-based coarse stage, rescores and
//! refines each candidate with a relation-network fine stage over RoI-pooled
//! multi-layer features, and fuses the two stages' scores and boxes into the
//! final prediction. The crate also ships the training losses with analytic
//! gradients, one-pass evaluation metrics, sequence/weights file formats,
//! and a synthetic sequence generator used by the test suites.

pub mod backbone;
pub mod boxes;
pub mod coarse;
pub mod fine;
pub mod fusion;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod pnm;
pub mod results;
pub mod sequence;
pub mod synthetic;
pub mod tensor;
pub mod weights;

pub use backbone::{central_crop, extract_features, toy_taps, BackboneConfig, TapFeature, TapMap};
pub use boxes::{
    clip_box, decode_delta, encode_delta, generate_anchors, iou, nms, AnchorGrid, BBox, BoxDelta,
};
pub use coarse::{
    assign_cm_labels, cm_forward, select_proposals, AnchorLabel, CmHeadWeights, CmOutput,
    LabelAssignment, LabelMode, Proposal,
};
pub use fine::{
    assign_fm_labels, relation_head, roi_align, sample_fm_training, FmHeadWeights, FmLabel,
};
pub use fusion::{
    apply_window_penalty, cosine_window, fuse_box, fuse_score, init_tracker, track_frame,
    track_sequence, update_box, FrameOutput, FusionWeights, TrackError, TrackerConfig, TrackerState,
};
pub use losses::{cross_entropy, smooth_l1, total_loss, LossReport, LossWeights};
pub use metrics::{
    precision_curve, recall_analysis, recall_thresholds, success_curve, PrecisionCurve,
    RecallTable, SuccessCurve,
};
pub use model::{init_weights, FeatureSource, Model, ModelConfig};
pub use results::{write_curves, FrameRecord, TrackResult};
pub use sequence::{load_sequence, Sequence};
pub use synthetic::{generate, write_sequence, SyntheticSpec};
pub use tensor::{
    bilinear_sample, concat_channels, conv2d, cross_correlate, max_pool, ConvParams, FeatureMap,
};
pub use weights::{ModelWeights, WeightEntry};

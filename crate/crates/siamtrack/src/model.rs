//! Model configuration, deterministic weight initialization, and the bound
//! model (feature source + head weights) used by the tracker.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{extract_features, toy_taps, BackboneConfig, BackboneError, TapMap};
use crate::coarse::CmHeadWeights;
use crate::fine::FmHeadWeights;
use crate::tensor::FeatureMap;
use crate::weights::{ModelWeights, WeightsError};

/// Shapes of every learnable array in the pipeline.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    /// Anchors per response cell.
    pub anchors: usize,
    /// Channels of the correlation tap (conv5).
    pub feat_channels: usize,
    /// Spatial size of the central-cropped correlation kernel.
    pub template_cells: usize,
    /// Channels of one pooled RoI (conv2 + conv4 taps concatenated).
    pub roi_channels: usize,
    /// Spatial size of a pooled RoI.
    pub roi_size: usize,
    /// Output channels of the pair-feature 1x1 convolution.
    pub fm_reduced: usize,
    /// Width of the two fully connected layers.
    pub fm_hidden: usize,
}

impl ModelConfig {
    pub fn canonical() -> Self {
        ModelConfig {
            backbone: BackboneConfig::canonical(),
            anchors: 5,
            feat_channels: 256,
            template_cells: 6,
            roi_channels: 640,
            roi_size: 6,
            fm_reduced: 256,
            fm_hidden: 256,
        }
    }

    /// Tiny channel counts for fast unit tests; geometry rules unchanged.
    pub fn reduced_for_tests() -> Self {
        ModelConfig {
            backbone: BackboneConfig::canonical(),
            anchors: 3,
            feat_channels: 8,
            template_cells: 4,
            roi_channels: 12,
            roi_size: 4,
            fm_reduced: 6,
            fm_hidden: 10,
        }
    }

    /// Names and shapes of every weight entry, in serialization order.
    pub fn weight_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let a = self.anchors;
        let c = self.feat_channels;
        let mut shapes = self.backbone.weight_shapes();
        let conv1x1 = |name: &str, out: usize, inp: usize| {
            [
                (format!("{name}.weight"), vec![out, inp, 1, 1]),
                (format!("{name}.bias"), vec![out]),
            ]
        };
        shapes.extend(conv1x1("cm.cls_lift", 2 * a * c, c));
        shapes.extend(conv1x1("cm.reg_lift", 4 * a * c, c));
        shapes.extend(conv1x1("cm.cls_adjust", 2 * a, 2 * a));
        shapes.extend(conv1x1("cm.reg_adjust", 4 * a, 4 * a));
        shapes.extend(conv1x1("fm.reduce", self.fm_reduced, 2 * self.roi_channels));
        let dense = |name: &str, out: usize, inp: usize| {
            [
                (format!("{name}.weight"), vec![out, inp]),
                (format!("{name}.bias"), vec![out]),
            ]
        };
        shapes.extend(dense("fm.fc1", self.fm_hidden, self.fm_reduced * self.roi_size * self.roi_size));
        shapes.extend(dense("fm.fc2", self.fm_hidden, self.fm_hidden));
        shapes.extend(dense("fm.cls", 2, self.fm_hidden));
        shapes.extend(dense("fm.reg", 4, self.fm_hidden));
        shapes
    }
}

/// Deterministic pseudo-random initialization: every entry is drawn uniformly
/// from `[-s, s]` with `s = sqrt(1 / fan_in)` of its layer. The same seed
/// always produces identical weights.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = ModelWeights::new();
    let shapes = cfg.weight_shapes();
    // fan_in of a weight entry: product of all dims after the first. Bias
    // entries reuse the bound of the weight entry they follow.
    let mut last_bound = 1.0f64;
    for (name, shape) in shapes {
        let n: usize = shape.iter().product();
        let bound = if shape.len() > 1 {
            let fan_in: usize = shape[1..].iter().product();
            last_bound = (1.0 / fan_in as f64).sqrt();
            last_bound
        } else {
            last_bound
        };
        let values: Vec<f32> = (0..n).map(|_| rng.gen_range(-bound..=bound) as f32).collect();
        weights
            .insert(&name, shape, values)
            .expect("init shapes are unique and consistent");
    }
    weights
}

/// Where feature maps come from.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    /// The convolutional backbone, using the stored weights.
    Backbone,
    /// The documented pass-through block-average extractor; ignores weights.
    Toy,
}

/// A model ready to run: feature source plus materialized head weights.
#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub source: FeatureSource,
    backbone_weights: Option<ModelWeights>,
    pub cm: CmHeadWeights,
    pub fm: FmHeadWeights,
}

impl Model {
    /// Bind a trained/initialized weight collection to the configuration.
    pub fn from_weights(config: ModelConfig, weights: ModelWeights) -> Result<Arc<Model>, WeightsError> {
        let cm = CmHeadWeights::from_weights(&weights, config.anchors, config.feat_channels)?;
        let fm = FmHeadWeights::from_weights(
            &weights,
            config.roi_channels,
            config.roi_size,
            config.fm_reduced,
            config.fm_hidden,
        )?;
        Ok(Arc::new(Model {
            config,
            source: FeatureSource::Backbone,
            backbone_weights: Some(weights),
            cm,
            fm,
        }))
    }

    /// The toy pipeline: pass-through features, a coarse head that scores
    /// candidates by plain normalized correlation with zero box deltas, and
    /// a fine head that returns score 0.5 with zero deltas for every pair.
    pub fn toy() -> Arc<Model> {
        let config = ModelConfig::canonical();
        let cm = CmHeadWeights::toy_passthrough(config.anchors, config.feat_channels, config.template_cells);
        let fm = FmHeadWeights::zeros(config.roi_channels, config.roi_size, config.fm_reduced, config.fm_hidden);
        Arc::new(Model {
            config,
            source: FeatureSource::Toy,
            backbone_weights: None,
            cm,
            fm,
        })
    }

    pub fn extract(&self, image: &FeatureMap) -> Result<TapMap, BackboneError> {
        match self.source {
            FeatureSource::Backbone => {
                let weights = self
                    .backbone_weights
                    .as_ref()
                    .expect("backbone source always carries weights");
                extract_features(image, weights, &self.config.backbone)
            }
            FeatureSource::Toy => Ok(toy_taps(image)),
        }
    }

    /// Spatial size of the conv5 tap for a given input size.
    pub fn conv5_dims(&self, size: usize) -> (usize, usize) {
        match self.source {
            FeatureSource::Backbone => {
                let dims = self.config.backbone.tap_dims(size, size);
                let (_, h, w) = dims["conv5"];
                (h, w)
            }
            FeatureSource::Toy => ((size + 1) / 8, (size + 1) / 8),
        }
    }

    /// Cumulative stride of the conv5 tap.
    pub fn conv5_stride(&self) -> usize {
        match self.source {
            FeatureSource::Backbone => self
                .config
                .backbone
                .stride_of_tap("conv5")
                .expect("canonical configurations expose conv5"),
            FeatureSource::Toy => 8,
        }
    }
}

//! Siamese feature-extraction backbone.
//!
//! A configurable stack of convolution and max-pool layers exposing named
//! intermediate taps. The canonical configuration is a five-conv stack with
//! taps `conv2` (384 channels, cumulative stride 4) and `conv4`/`conv5`
//! (256 channels, cumulative stride 8); a 3x127x127 template yields a
//! 256x16x16 final map and a 3x271x271 search image a 256x34x34 map.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::tensor::{conv2d, max_pool, ConvParams, FeatureMap, KernelError};
use crate::weights::{ModelWeights, WeightsError};

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("central crop size {size} exceeds input {height}x{width}")]
    CropTooLarge {
        size: usize,
        height: usize,
        width: usize,
    },
    #[error("tap \"{0}\" is not produced by this configuration")]
    UnknownTap(String),
}

/// One layer of the stack.
#[derive(Debug, Clone)]
pub enum LayerSpec {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        relu: bool,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
}

impl LayerSpec {
    fn stride(&self) -> usize {
        match self {
            LayerSpec::Conv { stride, .. } => *stride,
            LayerSpec::MaxPool { stride, .. } => *stride,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackboneConfig {
    pub layers: Vec<LayerSpec>,
    /// Names of conv layers whose outputs are exposed.
    pub taps: Vec<String>,
}

/// A tapped feature map together with its cumulative stride in input pixels.
#[derive(Debug, Clone)]
pub struct TapFeature {
    pub map: FeatureMap,
    pub stride: usize,
}

pub type TapMap = BTreeMap<String, TapFeature>;

impl BackboneConfig {
    /// The canonical five-conv stack. Kernel sizes and strides are chosen so
    /// that the tap channel counts are 384/256/256, the cumulative strides
    /// are 4/8/8, and a 127-pixel input maps to a 16x16 final feature map.
    pub fn canonical() -> Self {
        let conv = |name: &str, ic: usize, oc: usize, k: usize, s: usize, p: usize, relu: bool| {
            LayerSpec::Conv {
                name: name.to_string(),
                in_channels: ic,
                out_channels: oc,
                kernel: k,
                stride: s,
                padding: p,
                relu,
            }
        };
        BackboneConfig {
            layers: vec![
                conv("conv1", 3, 96, 11, 2, 5, true),
                LayerSpec::MaxPool { kernel: 3, stride: 2 },
                conv("conv2", 96, 384, 5, 1, 2, true),
                conv("conv3", 384, 384, 3, 2, 1, true),
                conv("conv4", 384, 256, 3, 1, 1, true),
                conv("conv5", 256, 256, 3, 1, 1, false),
            ],
            taps: vec!["conv2".into(), "conv4".into(), "conv5".into()],
        }
    }

    /// Cumulative stride (input pixels per feature cell) at each tap.
    pub fn stride_of_tap(&self, tap: &str) -> Result<usize, BackboneError> {
        let mut stride = 1;
        for layer in &self.layers {
            stride *= layer.stride();
            if let LayerSpec::Conv { name, .. } = layer {
                if name == tap {
                    return Ok(stride);
                }
            }
        }
        Err(BackboneError::UnknownTap(tap.to_string()))
    }

    /// Spatial output size of each tap for a given input size, without
    /// running the network.
    pub fn tap_dims(&self, in_h: usize, in_w: usize) -> BTreeMap<String, (usize, usize, usize)> {
        let mut dims = BTreeMap::new();
        let (mut h, mut w) = (in_h, in_w);
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv {
                    name,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    h = (h + 2 * padding - kernel) / stride + 1;
                    w = (w + 2 * padding - kernel) / stride + 1;
                    if self.taps.iter().any(|t| t == name) {
                        dims.insert(name.clone(), (*out_channels, h, w));
                    }
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    h = (h - kernel) / stride + 1;
                    w = (w - kernel) / stride + 1;
                }
            }
        }
        dims
    }

    /// Conv layer weight names in network order, with their shapes.
    pub fn weight_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let LayerSpec::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } = layer
            {
                out.push((
                    format!("backbone.{name}.weight"),
                    vec![*out_channels, *in_channels, *kernel, *kernel],
                ));
                out.push((format!("backbone.{name}.bias"), vec![*out_channels]));
            }
        }
        out
    }
}

/// Run the stack on `image`, returning all tapped feature maps.
pub fn extract_features(
    image: &FeatureMap,
    weights: &ModelWeights,
    cfg: &BackboneConfig,
) -> Result<TapMap, BackboneError> {
    let mut current = image.clone();
    let mut taps = TapMap::new();
    let mut stride = 1;
    for layer in &cfg.layers {
        match layer {
            LayerSpec::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                stride: s,
                padding,
                relu,
            } => {
                let w = weights.get_shaped(
                    &format!("backbone.{name}.weight"),
                    &[*out_channels, *in_channels, *kernel, *kernel],
                )?;
                let b = weights.get_shaped(&format!("backbone.{name}.bias"), &[*out_channels])?;
                let params = ConvParams {
                    out_channels: *out_channels,
                    in_channels: *in_channels,
                    kernel_h: *kernel,
                    kernel_w: *kernel,
                    stride: *s,
                    padding: *padding,
                    weights: w.values.clone(),
                    bias: b.values.clone(),
                    apply_relu: *relu,
                };
                current = conv2d(&current, &params)?;
                stride *= s;
                if cfg.taps.iter().any(|t| t == name) {
                    taps.insert(
                        name.clone(),
                        TapFeature {
                            map: current.clone(),
                            stride,
                        },
                    );
                }
            }
            LayerSpec::MaxPool { kernel, stride: s } => {
                current = max_pool(&current, *kernel, *s)?;
                stride *= s;
            }
        }
    }
    Ok(taps)
}

/// Spatially centered `size x size` window with channels unchanged. When a
/// margin is odd the window starts at `floor((dim - size) / 2)`.
pub fn central_crop(f: &FeatureMap, size: usize) -> Result<FeatureMap, BackboneError> {
    if size > f.height() || size > f.width() || size == 0 {
        return Err(BackboneError::CropTooLarge {
            size,
            height: f.height(),
            width: f.width(),
        });
    }
    let y0 = (f.height() - size) / 2;
    let x0 = (f.width() - size) / 2;
    let mut out = FeatureMap::zeros(f.channels(), size, size);
    for c in 0..f.channels() {
        for y in 0..size {
            let src = &f.row(c, y0 + y)[x0..x0 + size];
            let dst_start = (c * size + y) * size;
            out.data_mut()[dst_start..dst_start + size].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Pass-through feature extractor used for weight-free pipeline runs.
///
/// Each tap is a plain block average of the input image: tap cell `(i, j)`
/// of channel `k` is the mean of image channel `k mod 3` over the pixel
/// block starting at `(i * stride, j * stride)`, clipped to the image. Tap
/// spatial sizes replicate the canonical backbone so the downstream geometry
/// (anchor grid, RoI strides) is identical:
///
/// - `conv2`: 384 channels, stride 4, size `(d - 3) / 4`
/// - `conv4`, `conv5`: 256 channels, stride 8, size `(d + 1) / 8`
pub fn toy_taps(image: &FeatureMap) -> TapMap {
    let mut taps = TapMap::new();
    taps.insert(
        "conv2".into(),
        TapFeature {
            map: block_average(image, 4, (image.height() - 3) / 4, (image.width() - 3) / 4, 384),
            stride: 4,
        },
    );
    let h8 = (image.height() + 1) / 8;
    let w8 = (image.width() + 1) / 8;
    let conv4 = block_average(image, 8, h8, w8, 256);
    taps.insert(
        "conv4".into(),
        TapFeature {
            map: conv4.clone(),
            stride: 8,
        },
    );
    taps.insert("conv5".into(), TapFeature { map: conv4, stride: 8 });
    taps
}

fn block_average(image: &FeatureMap, stride: usize, out_h: usize, out_w: usize, channels: usize) -> FeatureMap {
    let src_channels = image.channels();
    let mut base = FeatureMap::zeros(src_channels, out_h, out_w);
    for c in 0..src_channels {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let y1 = (oy * stride + stride).min(image.height());
                let x1 = (ox * stride + stride).min(image.width());
                let mut sum = 0.0f64;
                let mut count = 0usize;
                for y in oy * stride..y1 {
                    let row = image.row(c, y);
                    for x in ox * stride..x1 {
                        sum += row[x] as f64;
                        count += 1;
                    }
                }
                base.set(c, oy, ox, (sum / count.max(1) as f64) as f32);
            }
        }
    }
    // Replicate the per-image-channel averages across the requested width.
    FeatureMap::from_fn(channels, out_h, out_w, |k, y, x| base.get(k % src_channels, y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, ModelConfig};

    #[test]
    fn canonical_tap_dims_and_strides() {
        let cfg = BackboneConfig::canonical();
        assert_eq!(cfg.stride_of_tap("conv2").unwrap(), 4);
        assert_eq!(cfg.stride_of_tap("conv4").unwrap(), 8);
        assert_eq!(cfg.stride_of_tap("conv5").unwrap(), 8);
        assert!(cfg.stride_of_tap("conv9").is_err());

        let t = cfg.tap_dims(127, 127);
        assert_eq!(t["conv2"], (384, 31, 31));
        assert_eq!(t["conv4"], (256, 16, 16));
        assert_eq!(t["conv5"], (256, 16, 16));

        let s = cfg.tap_dims(271, 271);
        assert_eq!(s["conv2"], (384, 67, 67));
        assert_eq!(s["conv4"], (256, 34, 34));
        assert_eq!(s["conv5"], (256, 34, 34));
    }

    #[test]
    fn central_crop_cases() {
        let f = FeatureMap::from_fn(2, 16, 16, |c, y, x| (c * 256 + y * 16 + x) as f32);
        let cropped = central_crop(&f, 6).unwrap();
        assert_eq!(cropped.shape(), (2, 6, 6));
        // Rows/cols 5..11 of the source.
        assert_eq!(cropped.get(0, 0, 0), f.get(0, 5, 5));
        assert_eq!(cropped.get(1, 5, 5), f.get(1, 10, 10));

        let id = central_crop(&f, 16).unwrap();
        assert_eq!(id, f);

        let tiny = FeatureMap::from_fn(1, 3, 3, |_, y, x| (y * 3 + x) as f32);
        let center = central_crop(&tiny, 1).unwrap();
        assert_eq!(center.get(0, 0, 0), tiny.get(0, 1, 1));

        assert!(central_crop(&tiny, 4).is_err());
    }

    #[test]
    fn extract_is_deterministic_on_small_input() {
        // A reduced stack keeps this test fast; the full-size shape chain is
        // covered by the acceptance suite.
        let cfg = BackboneConfig {
            layers: vec![
                LayerSpec::Conv {
                    name: "conv1".into(),
                    in_channels: 3,
                    out_channels: 4,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                    relu: true,
                },
                LayerSpec::Conv {
                    name: "conv2".into(),
                    in_channels: 4,
                    out_channels: 5,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    relu: false,
                },
            ],
            taps: vec!["conv2".into()],
        };
        let model_cfg = ModelConfig {
            backbone: cfg.clone(),
            ..ModelConfig::reduced_for_tests()
        };
        let weights = init_weights(&model_cfg, 5);
        let image = FeatureMap::from_fn(3, 13, 13, |c, y, x| ((c + y * x) % 7) as f32 * 0.1);
        let a = extract_features(&image, &weights, &cfg).unwrap();
        let b = extract_features(&image, &weights, &cfg).unwrap();
        assert_eq!(a["conv2"].map, b["conv2"].map);
        assert_eq!(a["conv2"].map.shape(), (5, 7, 7));
        assert_eq!(a["conv2"].stride, 2);
    }

    #[test]
    fn toy_taps_shapes_follow_canonical_geometry() {
        let image = FeatureMap::filled(3, 127, 127, 0.25);
        let taps = toy_taps(&image);
        assert_eq!(taps["conv2"].map.shape(), (384, 31, 31));
        assert_eq!(taps["conv4"].map.shape(), (256, 16, 16));
        assert_eq!(taps["conv5"].map.shape(), (256, 16, 16));
        // Constant image -> constant features.
        assert!((taps["conv5"].map.get(17, 3, 9) - 0.25).abs() < 1e-6);

        let search = FeatureMap::filled(3, 271, 271, 0.5);
        let taps = toy_taps(&search);
        assert_eq!(taps["conv2"].map.shape(), (384, 67, 67));
        assert_eq!(taps["conv5"].map.shape(), (256, 34, 34));
    }
}

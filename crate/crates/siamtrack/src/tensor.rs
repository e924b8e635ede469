//! Minimal dense numeric kernels on channel-major `f32` maps.
//!
//! Everything downstream (backbone, correlation heads, RoI pooling) is built
//! from the five operations in this module. All kernels accumulate in `f64`
//! and store results in `f32`, and are pure functions of their inputs:
//! identical inputs produce bit-identical outputs.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("channel mismatch: input has {input} channels, expected {expected}")]
    ChannelMismatch { input: usize, expected: usize },
    #[error("output dimension is not positive: input {in_h}x{in_w}, kernel {kernel_h}x{kernel_w}, stride {stride}, padding {padding}")]
    EmptyOutput {
        in_h: usize,
        in_w: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    #[error("kernel {kernel_h}x{kernel_w} larger than input {in_h}x{in_w}")]
    KernelTooLarge {
        kernel_h: usize,
        kernel_w: usize,
        in_h: usize,
        in_w: usize,
    },
    #[error("spatial mismatch: {ah}x{aw} vs {bh}x{bw}")]
    SpatialMismatch {
        ah: usize,
        aw: usize,
        bh: usize,
        bw: usize,
    },
    #[error("weight array has {got} values, expected {expected}")]
    WeightSize { got: usize, expected: usize },
    #[error("bias has {got} values, expected {expected}")]
    BiasSize { got: usize, expected: usize },
    #[error("data length {got} does not match {channels}x{height}x{width}")]
    DataSize {
        got: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("spatial dimensions must be >= 1, got {height}x{width}")]
    EmptyDims { height: usize, width: usize },
}

/// Dense rank-3 array in channel-major layout: index `(c, y, x)` maps to
/// `data[(c * height + y) * width + x]`.
///
/// Spatial dimensions are always >= 1. A map with zero channels is permitted
/// (it is the identity element of [`concat_channels`]) but is not a valid
/// input to the arithmetic kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, KernelError> {
        if height == 0 || width == 0 {
            return Err(KernelError::EmptyDims { height, width });
        }
        if data.len() != channels * height * width {
            return Err(KernelError::DataSize {
                got: data.len(),
                channels,
                height,
                width,
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "spatial dimensions must be >= 1");
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Map with every element set to `value`.
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        let mut m = Self::zeros(channels, height, width);
        m.data.fill(value);
        m
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut m = Self::zeros(channels, height, width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    m.data[(c * height + y) * width + x] = f(c, y, x);
                }
            }
        }
        m
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Contiguous row `y` of channel `c`.
    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f32] {
        let start = (c * self.height + y) * self.width;
        &self.data[start..start + self.width]
    }

    /// Contiguous plane of channel `c`.
    #[inline]
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// View of channels `[from, to)` as a standalone map (copies the slice).
    pub fn channel_range(&self, from: usize, to: usize) -> FeatureMap {
        assert!(from <= to && to <= self.channels);
        let plane = self.height * self.width;
        FeatureMap {
            channels: to - from,
            height: self.height,
            width: self.width,
            data: self.data[from * plane..to * plane].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Parameters of one convolution layer. Weights are laid out
/// `[out_channels][in_channels][kernel_h][kernel_w]`.
#[derive(Debug, Clone)]
pub struct ConvParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub apply_relu: bool,
}

impl ConvParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        let expected = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if self.weights.len() != expected {
            return Err(KernelError::WeightSize {
                got: self.weights.len(),
                expected,
            });
        }
        if self.bias.len() != self.out_channels {
            return Err(KernelError::BiasSize {
                got: self.bias.len(),
                expected: self.out_channels,
            });
        }
        assert!(self.stride >= 1, "stride must be >= 1");
        Ok(())
    }

    /// Identity 1x1 convolution over `channels`.
    pub fn identity(channels: usize) -> Self {
        let mut weights = vec![0.0; channels * channels];
        for c in 0..channels {
            weights[c * channels + c] = 1.0;
        }
        Self {
            out_channels: channels,
            in_channels: channels,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            weights,
            bias: vec![0.0; channels],
            apply_relu: false,
        }
    }

    pub fn output_dims(&self, in_h: usize, in_w: usize) -> Option<(usize, usize)> {
        let oh = conv_out_dim(in_h, self.kernel_h, self.stride, self.padding)?;
        let ow = conv_out_dim(in_w, self.kernel_w, self.stride, self.padding)?;
        Some((oh, ow))
    }
}

fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// 2D convolution in the machine-learning convention (cross-correlation, no
/// kernel flip) with symmetric zero padding. Accumulates in `f64`, optionally
/// applies an elementwise ReLU.
pub fn conv2d(input: &FeatureMap, p: &ConvParams) -> Result<FeatureMap, KernelError> {
    p.validate()?;
    if input.channels != p.in_channels {
        return Err(KernelError::ChannelMismatch {
            input: input.channels,
            expected: p.in_channels,
        });
    }
    let (out_h, out_w) = p.output_dims(input.height, input.width).ok_or(KernelError::EmptyOutput {
        in_h: input.height,
        in_w: input.width,
        kernel_h: p.kernel_h,
        kernel_w: p.kernel_w,
        stride: p.stride,
        padding: p.padding,
    })?;

    let mut out = FeatureMap::zeros(p.out_channels, out_h, out_w);
    let mut acc = vec![0.0f64; out_w];
    for oc in 0..p.out_channels {
        for oy in 0..out_h {
            acc.fill(p.bias[oc] as f64);
            for ic in 0..input.channels {
                for ky in 0..p.kernel_h {
                    // Input row for this (output row, kernel row); may be in padding.
                    let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                    if iy < 0 || iy >= input.height as isize {
                        continue;
                    }
                    let in_row = input.row(ic, iy as usize);
                    let w_base = ((oc * p.in_channels + ic) * p.kernel_h + ky) * p.kernel_w;
                    for kx in 0..p.kernel_w {
                        let w = p.weights[w_base + kx] as f64;
                        if w == 0.0 {
                            continue;
                        }
                        let x_off = kx as isize - p.padding as isize;
                        for (ox, a) in acc.iter_mut().enumerate() {
                            let ix = (ox * p.stride) as isize + x_off;
                            if ix >= 0 && ix < input.width as isize {
                                *a += w * in_row[ix as usize] as f64;
                            }
                        }
                    }
                }
            }
            let out_row_base = (oc * out_h + oy) * out_w;
            for (ox, a) in acc.iter().enumerate() {
                let v = if p.apply_relu && *a < 0.0 { 0.0 } else { *a as f32 };
                out.data[out_row_base + ox] = v;
            }
        }
    }
    Ok(out)
}

/// Per-channel sliding-window maximum. Output dims are
/// `floor((dim - kernel) / stride) + 1`.
pub fn max_pool(input: &FeatureMap, kernel: usize, stride: usize) -> Result<FeatureMap, KernelError> {
    assert!(kernel >= 1 && stride >= 1, "kernel and stride must be >= 1");
    if kernel > input.height || kernel > input.width {
        return Err(KernelError::KernelTooLarge {
            kernel_h: kernel,
            kernel_w: kernel,
            in_h: input.height,
            in_w: input.width,
        });
    }
    let out_h = (input.height - kernel) / stride + 1;
    let out_w = (input.width - kernel) / stride + 1;
    let mut out = FeatureMap::zeros(input.channels, out_h, out_w);
    for c in 0..input.channels {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..kernel {
                    let row = input.row(c, oy * stride + ky);
                    for kx in 0..kernel {
                        let v = row[ox * stride + kx];
                        if v > m {
                            m = v;
                        }
                    }
                }
                out.data[(c * out_h + oy) * out_w + ox] = m;
            }
        }
    }
    Ok(out)
}

/// Channel concatenation: `a`'s channels first, then `b`'s.
pub fn concat_channels(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap, KernelError> {
    if a.height != b.height || a.width != b.width {
        return Err(KernelError::SpatialMismatch {
            ah: a.height,
            aw: a.width,
            bh: b.height,
            bw: b.width,
        });
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Ok(FeatureMap {
        channels: a.channels + b.channels,
        height: a.height,
        width: a.width,
        data,
    })
}

/// Per-channel bilinear interpolation among the four integer-grid neighbours
/// of `(x, y)`. Neighbours outside `[0, W-1] x [0, H-1]` contribute zero, so
/// this is a total function of finite inputs.
pub fn bilinear_sample(input: &FeatureMap, x: f64, y: f64) -> Vec<f32> {
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = x - x0;
    let wy = y - y0;
    let x0 = x0 as isize;
    let y0 = y0 as isize;

    let fetch = |c: usize, yy: isize, xx: isize| -> f64 {
        if yy < 0 || xx < 0 || yy >= input.height as isize || xx >= input.width as isize {
            0.0
        } else {
            input.get(c, yy as usize, xx as usize) as f64
        }
    };

    let w00 = (1.0 - wx) * (1.0 - wy);
    let w01 = wx * (1.0 - wy);
    let w10 = (1.0 - wx) * wy;
    let w11 = wx * wy;

    (0..input.channels)
        .map(|c| {
            let v = w00 * fetch(c, y0, x0)
                + w01 * fetch(c, y0, x0 + 1)
                + w10 * fetch(c, y0 + 1, x0)
                + w11 * fetch(c, y0 + 1, x0 + 1);
            v as f32
        })
        .collect()
}

/// Valid-mode cross-correlation summed over all channels:
/// `response(i, j) = sum_{c,u,v} search[c, i+u, j+v] * kernel[c, u, v]`.
///
/// Output is a single-channel map of size `(H-h+1) x (W-w+1)`.
pub fn cross_correlate(search: &FeatureMap, kernel: &FeatureMap) -> Result<FeatureMap, KernelError> {
    if search.channels != kernel.channels {
        return Err(KernelError::ChannelMismatch {
            input: kernel.channels,
            expected: search.channels,
        });
    }
    if kernel.height > search.height || kernel.width > search.width {
        return Err(KernelError::KernelTooLarge {
            kernel_h: kernel.height,
            kernel_w: kernel.width,
            in_h: search.height,
            in_w: search.width,
        });
    }
    let out_h = search.height - kernel.height + 1;
    let out_w = search.width - kernel.width + 1;
    let mut out = FeatureMap::zeros(1, out_h, out_w);
    let mut acc = vec![0.0f64; out_w];
    for i in 0..out_h {
        acc.fill(0.0);
        for c in 0..search.channels {
            for u in 0..kernel.height {
                let s_row = search.row(c, i + u);
                let k_row = kernel.row(c, u);
                for (v, &k) in k_row.iter().enumerate() {
                    let k = k as f64;
                    let window = &s_row[v..v + out_w];
                    for (a, &s) in acc.iter_mut().zip(window) {
                        *a += k * s as f64;
                    }
                }
            }
        }
        for (j, a) in acc.iter().enumerate() {
            out.data[i * out_w + j] = *a as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &FeatureMap, b: &FeatureMap, tol: f32) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let input = FeatureMap::from_fn(2, 4, 5, |c, y, x| (c * 100 + y * 10 + x) as f32);
        let p = ConvParams::identity(2);
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn conv_ones_kernel_counts_neighbourhood() {
        let input = FeatureMap::filled(1, 3, 3, 1.0);
        let p = ConvParams {
            out_channels: 1,
            in_channels: 1,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
            weights: vec![1.0; 9],
            bias: vec![0.0],
            apply_relu: false,
        };
        let out = conv2d(&input, &p).unwrap();
        assert_eq!(out.get(0, 1, 1), 9.0);
        assert_eq!(out.get(0, 0, 0), 4.0);
        assert_eq!(out.get(0, 0, 2), 4.0);
        assert_eq!(out.get(0, 2, 0), 4.0);
        assert_eq!(out.get(0, 2, 2), 4.0);
        assert_eq!(out.get(0, 0, 1), 6.0);
    }

    /// Straight six-nested-loop convolution used as the module-level oracle.
    fn conv2d_naive(input: &FeatureMap, p: &ConvParams) -> FeatureMap {
        let (out_h, out_w) = p.output_dims(input.height(), input.width()).unwrap();
        let mut out = FeatureMap::zeros(p.out_channels, out_h, out_w);
        for oc in 0..p.out_channels {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut sum = p.bias[oc] as f64;
                    for ic in 0..p.in_channels {
                        for ky in 0..p.kernel_h {
                            for kx in 0..p.kernel_w {
                                let iy = (oy * p.stride + ky) as isize - p.padding as isize;
                                let ix = (ox * p.stride + kx) as isize - p.padding as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy >= input.height() as isize
                                    || ix >= input.width() as isize
                                {
                                    continue;
                                }
                                let w = p.weights
                                    [((oc * p.in_channels + ic) * p.kernel_h + ky) * p.kernel_w + kx];
                                sum += w as f64 * input.get(ic, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    let v = if p.apply_relu && sum < 0.0 { 0.0 } else { sum as f32 };
                    out.set(oc, oy, ox, v);
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let input = FeatureMap::from_fn(2, 8, 8, |_, _, _| rng.gen_range(-1.0..1.0));
        let p = ConvParams {
            out_channels: 4,
            in_channels: 2,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
            weights: (0..4 * 2 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            apply_relu: false,
        };
        let fast = conv2d(&input, &p).unwrap();
        let slow = conv2d_naive(&input, &p);
        assert_close(&fast, &slow, 1e-5);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = FeatureMap::zeros(3, 4, 4);
        let p = ConvParams::identity(2);
        assert!(matches!(
            conv2d(&input, &p),
            Err(KernelError::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn conv_rejects_empty_output() {
        let input = FeatureMap::zeros(1, 2, 2);
        let p = ConvParams {
            out_channels: 1,
            in_channels: 1,
            kernel_h: 5,
            kernel_w: 5,
            stride: 1,
            padding: 0,
            weights: vec![0.0; 25],
            bias: vec![0.0],
            apply_relu: false,
        };
        assert!(matches!(conv2d(&input, &p), Err(KernelError::EmptyOutput { .. })));
    }

    #[test]
    fn max_pool_identity_and_basic() {
        let input = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = max_pool(&input, 1, 1).unwrap();
        assert_eq!(id, input);
        let pooled = max_pool(&input, 2, 2).unwrap();
        assert_eq!(pooled.shape(), (1, 1, 1));
        assert_eq!(pooled.get(0, 0, 0), 4.0);
    }

    #[test]
    fn max_pool_rejects_oversized_kernel() {
        let input = FeatureMap::zeros(1, 2, 2);
        assert!(matches!(
            max_pool(&input, 3, 1),
            Err(KernelError::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn max_pool_matches_naive_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let input = FeatureMap::from_fn(3, 9, 7, |_, _, _| rng.gen_range(-5.0..5.0));
        let out = max_pool(&input, 3, 2).unwrap();
        for c in 0..3 {
            for oy in 0..out.height() {
                for ox in 0..out.width() {
                    let mut m = f32::NEG_INFINITY;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            m = m.max(input.get(c, oy * 2 + ky, ox * 2 + kx));
                        }
                    }
                    assert_eq!(out.get(c, oy, ox), m);
                }
            }
        }
    }

    #[test]
    fn concat_layout_and_identity() {
        let a = FeatureMap::from_fn(2, 3, 3, |c, y, x| (c * 9 + y * 3 + x) as f32);
        let b = FeatureMap::from_fn(1, 3, 3, |_, y, x| -((y * 3 + x) as f32));
        let cat = concat_channels(&a, &b).unwrap();
        assert_eq!(cat.channels(), 3);
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(cat.get(0, y, x), a.get(0, y, x));
                assert_eq!(cat.get(2, y, x), b.get(0, y, x));
            }
        }
        let empty = FeatureMap::new(0, 3, 3, vec![]).unwrap();
        let same = concat_channels(&a, &empty).unwrap();
        assert_eq!(same, a);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = FeatureMap::zeros(1, 3, 3);
        let b = FeatureMap::zeros(1, 4, 3);
        assert!(matches!(
            concat_channels(&a, &b),
            Err(KernelError::SpatialMismatch { .. })
        ));
    }

    #[test]
    fn bilinear_at_grid_points_and_constants() {
        let input = FeatureMap::from_fn(2, 4, 4, |c, y, x| (c * 16 + y * 4 + x) as f32);
        let v = bilinear_sample(&input, 2.0, 1.0);
        assert_eq!(v, vec![input.get(0, 1, 2), input.get(1, 1, 2)]);

        let flat = FeatureMap::filled(1, 4, 4, 3.5);
        for &(x, y) in &[(0.3, 0.7), (1.5, 2.25), (2.9, 0.1)] {
            assert!((bilinear_sample(&flat, x, y)[0] - 3.5).abs() < 1e-6);
        }
    }

    #[test]
    fn bilinear_is_linear_in_coordinates_on_ramp() {
        let ramp = FeatureMap::from_fn(1, 4, 6, |_, _, x| x as f32);
        let v = bilinear_sample(&ramp, 2.25, 1.0);
        assert!((v[0] - 2.25).abs() < 1e-6);
    }

    #[test]
    fn bilinear_out_of_bounds_uses_zero() {
        let input = FeatureMap::filled(1, 2, 2, 4.0);
        // Half a pixel outside: one neighbour column is out of bounds.
        let v = bilinear_sample(&input, -0.5, 0.0);
        assert!((v[0] - 2.0).abs() < 1e-6);
        let far = bilinear_sample(&input, -10.0, -10.0);
        assert_eq!(far[0], 0.0);
    }

    #[test]
    fn cross_correlate_delta_kernel_selects_window() {
        let search = FeatureMap::from_fn(1, 5, 5, |_, y, x| (y * 5 + x) as f32);
        let mut kernel = FeatureMap::zeros(1, 2, 2);
        kernel.set(0, 0, 0, 1.0);
        let resp = cross_correlate(&search, &kernel).unwrap();
        assert_eq!(resp.shape(), (1, 4, 4));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(resp.get(0, i, j), search.get(0, i, j));
            }
        }
    }

    #[test]
    fn cross_correlate_shape_contract() {
        let search = FeatureMap::zeros(256, 34, 34);
        let kernel = FeatureMap::zeros(256, 6, 6);
        let resp = cross_correlate(&search, &kernel).unwrap();
        assert_eq!(resp.shape(), (1, 29, 29));
    }

    #[test]
    fn cross_correlate_self_match_peaks_at_source() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // Nonnegative values with a clearly dominant patch at (2, 3).
        let mut search = FeatureMap::from_fn(2, 9, 9, |_, _, _| rng.gen_range(0.0..0.2));
        for c in 0..2 {
            for y in 2..5 {
                for x in 3..6 {
                    search.set(c, y, x, rng.gen_range(2.0..3.0));
                }
            }
        }
        let kernel = FeatureMap::from_fn(2, 3, 3, |c, y, x| search.get(c, 2 + y, 3 + x));
        let resp = cross_correlate(&search, &kernel).unwrap();
        let mut best = (0, 0);
        let mut best_v = f32::NEG_INFINITY;
        for i in 0..resp.height() {
            for j in 0..resp.width() {
                if resp.get(0, i, j) > best_v {
                    best_v = resp.get(0, i, j);
                    best = (i, j);
                }
            }
        }
        assert_eq!(best, (2, 3));
    }

    #[test]
    fn cross_correlate_rejects_bad_inputs() {
        let s = FeatureMap::zeros(2, 4, 4);
        let k1 = FeatureMap::zeros(3, 2, 2);
        assert!(matches!(
            cross_correlate(&s, &k1),
            Err(KernelError::ChannelMismatch { .. })
        ));
        let k2 = FeatureMap::zeros(2, 5, 5);
        assert!(matches!(
            cross_correlate(&s, &k2),
            Err(KernelError::KernelTooLarge { .. })
        ));
    }
}

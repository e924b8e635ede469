//! Synthetic test sequences: a single high-contrast square moving over a
//! uniform background, with exact ground truth. The square's interior is a
//! two-by-two checker of two bright values so that correlation against its
//! template has a unique peak instead of a plateau.

use std::path::Path;

use crate::boxes::BBox;
use crate::pnm::{write_pnm, PnmError};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Square side in pixels.
    pub side: usize,
    /// Top-left position on frame 0.
    pub start: (i64, i64),
    /// Pixels per frame; the square bounces off the frame edges.
    pub velocity: (i64, i64),
    pub background: u8,
    pub bright: u8,
    pub dark: u8,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            width: 320,
            height: 240,
            frames: 60,
            side: 36,
            start: (50, 40),
            velocity: (3, 2),
            background: 26,
            bright: 230,
            dark: 150,
        }
    }
}

fn bounce(pos: i64, vel: i64, max: i64) -> (i64, i64) {
    let mut p = pos + vel;
    let mut v = vel;
    if p < 0 {
        p = -p;
        v = -v;
    }
    if p > max {
        p = 2 * max - p;
        v = -v;
    }
    (p, v)
}

fn render(spec: &SyntheticSpec, x: i64, y: i64) -> FeatureMap {
    let bg = spec.background as f32 / 255.0;
    let bright = spec.bright as f32 / 255.0;
    let dark = spec.dark as f32 / 255.0;
    let half = (spec.side / 2) as i64;
    FeatureMap::from_fn(3, spec.height, spec.width, |_, row, col| {
        let (r, c) = (row as i64, col as i64);
        if r >= y && r < y + spec.side as i64 && c >= x && c < x + spec.side as i64 {
            let quad = (usize::from(r - y >= half) + usize::from(c - x >= half)) % 2;
            if quad == 0 {
                bright
            } else {
                dark
            }
        } else {
            bg
        }
    })
}

/// Generate frames and exact ground-truth boxes.
pub fn generate(spec: &SyntheticSpec) -> (Vec<FeatureMap>, Vec<BBox>) {
    assert!(spec.frames >= 1 && spec.side >= 2);
    assert!(spec.width > spec.side && spec.height > spec.side);
    let max_x = (spec.width - spec.side) as i64;
    let max_y = (spec.height - spec.side) as i64;
    let (mut x, mut y) = spec.start;
    let (mut vx, mut vy) = spec.velocity;
    x = x.clamp(0, max_x);
    y = y.clamp(0, max_y);

    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = Vec::with_capacity(spec.frames);
    for _ in 0..spec.frames {
        frames.push(render(spec, x, y));
        gt.push(BBox::from_xywh(x as f64, y as f64, spec.side as f64, spec.side as f64).unwrap());
        let (nx, nvx) = bounce(x, vx, max_x);
        let (ny, nvy) = bounce(y, vy, max_y);
        x = nx;
        vx = nvx;
        y = ny;
        vy = nvy;
    }
    (frames, gt)
}

/// Write a generated sequence to disk: zero-padded `.pgm` frames plus a
/// `groundtruth_rect.txt` in `x,y,w,h` convention.
pub fn write_sequence(dir: &Path, spec: &SyntheticSpec) -> Result<(), PnmError> {
    std::fs::create_dir_all(dir).map_err(|source| PnmError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let (frames, gt) = generate(spec);
    for (i, frame) in frames.iter().enumerate() {
        write_pnm(&dir.join(format!("{i:08}.pgm")), frame, true)?;
    }
    let mut lines = String::new();
    for b in &gt {
        let [x, y, w, h] = b.to_xywh();
        lines.push_str(&format!("{},{},{},{}\n", x as i64, y as i64, w as i64, h as i64));
    }
    let gt_path = dir.join("groundtruth_rect.txt");
    std::fs::write(&gt_path, lines).map_err(|source| PnmError::Io {
        path: gt_path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_matches_ground_truth() {
        let spec = SyntheticSpec {
            frames: 5,
            ..Default::default()
        };
        let (frames, gt) = generate(&spec);
        assert_eq!(frames.len(), 5);
        assert_eq!(gt.len(), 5);
        for (frame, b) in frames.iter().zip(&gt) {
            // Center pixel belongs to the square, a far corner to the background.
            let (cx, cy) = b.center();
            let inside = frame.get(0, cy as usize, cx as usize);
            assert!(inside > 0.4);
            let corner = frame.get(0, spec.height - 1, spec.width - 1);
            assert!((corner - spec.background as f32 / 255.0).abs() < 1e-6);
        }
        // Motion between consecutive frames matches velocity away from walls.
        assert_eq!(gt[1].x1 - gt[0].x1, spec.velocity.0 as f64);
        assert_eq!(gt[1].y1 - gt[0].y1, spec.velocity.1 as f64);
    }

    #[test]
    fn square_interior_is_checkered() {
        let spec = SyntheticSpec::default();
        let (frames, gt) = generate(&spec);
        let b = &gt[0];
        let q = spec.side / 4;
        let tl = frames[0].get(0, b.y1 as usize + q, b.x1 as usize + q);
        let tr = frames[0].get(0, b.y1 as usize + q, b.x1 as usize + 3 * q);
        assert!((tl - spec.bright as f32 / 255.0).abs() < 1e-6);
        assert!((tr - spec.dark as f32 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn bouncing_keeps_square_in_frame() {
        let spec = SyntheticSpec {
            frames: 300,
            velocity: (7, 5),
            ..Default::default()
        };
        let (_, gt) = generate(&spec);
        for b in &gt {
            assert!(b.x1 >= 0.0 && b.y1 >= 0.0);
            assert!(b.x2 <= spec.width as f64 && b.y2 <= spec.height as f64);
        }
    }
}

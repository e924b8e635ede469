//! Sequence ingestion: numbered portable-pixmap frames plus a ground-truth
//! text file, one `x,y,w,h` line per frame (comma or tab separated, top-left
//! + size convention).

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::boxes::BBox;
use crate::pnm::{read_pnm, PnmError};
use crate::tensor::FeatureMap;

/// Ground-truth file names probed inside a sequence directory, in order.
pub const GROUND_TRUTH_NAMES: [&str; 3] = ["groundtruth_rect.txt", "groundtruth.txt", "gt.txt"];

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no ground-truth file in {dir} (tried {names:?})")]
    MissingGroundTruth { dir: String, names: [&'static str; 3] },
    #[error("{path} is empty")]
    EmptyGroundTruth { path: String },
    #[error("{path}:{line}: cannot parse \"{text}\" as x,y,w,h")]
    BadLine {
        path: String,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: degenerate box (w and h must be positive)")]
    BadBox { path: String, line: usize },
    #[error("{dir}: {frames} frames but {boxes} ground-truth lines")]
    CountMismatch {
        dir: String,
        frames: usize,
        boxes: usize,
    },
    #[error("no .pgm/.ppm frames in {dir}")]
    NoFrames { dir: String },
    #[error(transparent)]
    Pnm(#[from] PnmError),
}

/// An ordered tracking sequence: frame image paths and one ground-truth box
/// per frame, in corner form.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frame_paths: Vec<PathBuf>,
    pub ground_truth: Vec<BBox>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    /// Load every frame into memory.
    pub fn load_frames(&self) -> Result<Vec<FeatureMap>, SequenceError> {
        self.frame_paths.iter().map(|p| Ok(read_pnm(p)?)).collect()
    }
}

fn parse_gt_line(path: &Path, index: usize, line: &str) -> Result<BBox, SequenceError> {
    let fields: Vec<&str> = line
        .split(|c| c == ',' || c == '\t')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let bad = || SequenceError::BadLine {
        path: path.display().to_string(),
        line: index + 1,
        text: line.to_string(),
    };
    if fields.len() != 4 {
        return Err(bad());
    }
    let mut vals = [0.0f64; 4];
    for (v, f) in vals.iter_mut().zip(&fields) {
        *v = f.parse().map_err(|_| bad())?;
    }
    BBox::from_xywh(vals[0], vals[1], vals[2], vals[3]).map_err(|_| SequenceError::BadBox {
        path: path.display().to_string(),
        line: index + 1,
    })
}

/// Load a sequence directory: frames are `*.pgm`/`*.ppm` files sorted by
/// file name, ground truth is the first of [`GROUND_TRUTH_NAMES`] present.
pub fn load_sequence(dir: &Path) -> Result<Sequence, SequenceError> {
    let display = dir.display().to_string();
    let gt_path = GROUND_TRUTH_NAMES
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
        .ok_or_else(|| SequenceError::MissingGroundTruth {
            dir: display.clone(),
            names: GROUND_TRUTH_NAMES,
        })?;

    let text = std::fs::read_to_string(&gt_path).map_err(|source| SequenceError::Io {
        path: gt_path.display().to_string(),
        source,
    })?;
    let mut ground_truth = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        ground_truth.push(parse_gt_line(&gt_path, i, line)?);
    }
    if ground_truth.is_empty() {
        return Err(SequenceError::EmptyGroundTruth {
            path: gt_path.display().to_string(),
        });
    }

    let mut frame_paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| SequenceError::Io {
            path: display.clone(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    frame_paths.sort();
    if frame_paths.is_empty() {
        return Err(SequenceError::NoFrames { dir: display });
    }
    if frame_paths.len() != ground_truth.len() {
        return Err(SequenceError::CountMismatch {
            dir: display,
            frames: frame_paths.len(),
            boxes: ground_truth.len(),
        });
    }

    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".to_string());
    Ok(Sequence {
        name,
        frame_paths,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{write_sequence, SyntheticSpec};

    #[test]
    fn gt_line_conventions() {
        let p = Path::new("gt.txt");
        let b = parse_gt_line(p, 0, "10,20,30,40").unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (10.0, 20.0, 40.0, 60.0));

        let tabbed = parse_gt_line(p, 0, "10\t20\t30\t40").unwrap();
        assert_eq!(tabbed, b);

        match parse_gt_line(p, 4, "10,20,thirty,40") {
            Err(SequenceError::BadLine { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_gt_line(p, 0, "10,20,30"),
            Err(SequenceError::BadLine { .. })
        ));
        assert!(matches!(
            parse_gt_line(p, 0, "10,20,0,40"),
            Err(SequenceError::BadBox { .. })
        ));
    }

    #[test]
    fn loads_written_synthetic_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            frames: 4,
            ..Default::default()
        };
        write_sequence(dir.path(), &spec).unwrap();
        let seq = load_sequence(dir.path()).unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(seq.ground_truth.len(), 4);
        let frames = seq.load_frames().unwrap();
        assert_eq!(frames[0].shape(), (3, spec.height, spec.width));
    }

    #[test]
    fn missing_and_empty_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        match load_sequence(dir.path()) {
            Err(SequenceError::MissingGroundTruth { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(dir.path().join("groundtruth_rect.txt"), "").unwrap();
        match load_sequence(dir.path()) {
            Err(SequenceError::EmptyGroundTruth { path }) => {
                assert!(path.contains("groundtruth_rect.txt"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frame_count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            frames: 3,
            ..Default::default()
        };
        write_sequence(dir.path(), &spec).unwrap();
        std::fs::remove_file(dir.path().join("00000002.pgm")).unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(SequenceError::CountMismatch { frames: 2, boxes: 3, .. })
        ));
    }
}

//! Tracking result files (JSON, one record per frame) and metric curve files
//! (CSV rows `metric,threshold,value`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::BBox;
use crate::metrics::{PrecisionCurve, SuccessCurve};

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: box on frame {frame} has non-positive size")]
    BadBox { path: String, frame: usize },
}

/// One tracked frame: box in `[x, y, w, h]` top-left + size convention,
/// fused score, and wall-clock milliseconds spent on the frame.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    pub ms: f64,
}

/// Results of tracking one sequence. Frame 0 is the initialization box.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrackResult {
    pub sequence: String,
    pub frames: Vec<FrameRecord>,
}

impl TrackResult {
    pub fn boxes(&self) -> Result<Vec<BBox>, ResultsError> {
        self.frames
            .iter()
            .map(|f| {
                BBox::from_xywh(f.bbox[0], f.bbox[1], f.bbox[2], f.bbox[3]).map_err(|_| {
                    ResultsError::BadBox {
                        path: self.sequence.clone(),
                        frame: f.frame,
                    }
                })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ResultsError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| ResultsError::Json {
            path: path.display().to_string(),
            source,
        })?;
        std::fs::write(path, text).map_err(|source| ResultsError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ResultsError> {
        let text = std::fs::read_to_string(path).map_err(|source| ResultsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ResultsError::Json {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Write success and precision curves as `metric,threshold,value` rows with
/// trailing `auc` and `precision_at_20` summary rows.
pub fn write_curves(
    path: &Path,
    success: &SuccessCurve,
    precision: &PrecisionCurve,
) -> Result<(), ResultsError> {
    let mut text = String::from("metric,threshold,value\n");
    for p in &success.points {
        text.push_str(&format!("success,{:.2},{:.6}\n", p.threshold, p.value));
    }
    for p in &precision.points {
        text.push_str(&format!("precision,{},{:.6}\n", p.threshold, p.value));
    }
    text.push_str(&format!("auc,,{:.6}\n", success.auc));
    text.push_str(&format!("precision_at_20,,{:.6}\n", precision.at_20));
    std::fs::write(path, text).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_roundtrip_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.json");
        let result = TrackResult {
            sequence: "synthetic".into(),
            frames: vec![
                FrameRecord {
                    frame: 0,
                    bbox: [50.0, 40.0, 36.0, 36.0],
                    score: 1.0,
                    ms: 0.0,
                },
                FrameRecord {
                    frame: 1,
                    bbox: [53.119, 42.0001, 36.25, 36.5],
                    score: 0.73250001,
                    ms: 12.5,
                },
            ],
        };
        result.save(&path).unwrap();
        let back = TrackResult::load(&path).unwrap();
        assert_eq!(back, result);
        let boxes = back.boxes().unwrap();
        assert_eq!(boxes[1].x1, 53.119);
    }

    #[test]
    fn load_reports_path_on_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{not json").unwrap();
        match TrackResult::load(&path) {
            Err(ResultsError::Json { path: p, .. }) => assert!(p.contains("broken.json")),
            other => panic!("unexpected {other:?}"),
        }
    }
}

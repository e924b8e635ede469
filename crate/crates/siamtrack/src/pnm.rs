//! Binary portable-pixmap image I/O (P5 grayscale, P6 RGB), maxval 255.
//!
//! Images load as 3-channel maps with values in `[0, 1]`; grayscale frames
//! replicate their single channel.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::FeatureMap;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a binary PGM/PPM (magic {found:?})")]
    BadMagic { path: String, found: String },
    #[error("{path}: malformed header")]
    BadHeader { path: String },
    #[error("{path}: only maxval 255 is supported, found {maxval}")]
    BadMaxval { path: String, maxval: u32 },
    #[error("{path}: expected {expected} pixel bytes, found {got}")]
    Truncated {
        path: String,
        expected: usize,
        got: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PnmError + '_ {
    move |source| PnmError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Read a binary P5/P6 file into a 3-channel map scaled to `[0, 1]`.
pub fn read_pnm(path: &Path) -> Result<FeatureMap, PnmError> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let display = path.display().to_string();

    if bytes.len() < 2 {
        return Err(PnmError::BadHeader { path: display });
    }
    let channels = match &bytes[..2] {
        b"P5" => 1usize,
        b"P6" => 3usize,
        other => {
            return Err(PnmError::BadMagic {
                path: display,
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };

    // Header: magic, width, height, maxval as whitespace-separated tokens,
    // with `#` comments allowed; a single whitespace byte ends the header.
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // Skip whitespace and comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(PnmError::BadHeader { path: display });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PnmError::BadHeader {
                path: path.display().to_string(),
            })?;
    }
    let [width, height, maxval] = fields.map(|v| v as usize);
    if width == 0 || height == 0 {
        return Err(PnmError::BadHeader { path: display });
    }
    if maxval != 255 {
        return Err(PnmError::BadMaxval {
            path: display,
            maxval: maxval as u32,
        });
    }
    pos += 1; // single whitespace byte after maxval

    let expected = width * height * channels;
    if bytes.len() < pos + expected {
        return Err(PnmError::Truncated {
            path: display,
            expected,
            got: bytes.len().saturating_sub(pos),
        });
    }
    let pixels = &bytes[pos..pos + expected];
    let map = FeatureMap::from_fn(3, height, width, |c, y, x| {
        let src = if channels == 1 { 0 } else { c };
        pixels[(y * width + x) * channels + src] as f32 / 255.0
    });
    Ok(map)
}

/// Write a map as binary P5 (grayscale, first channel) or P6 (first three
/// channels). Values are clamped to `[0, 1]` and quantized to 8 bits.
pub fn write_pnm(path: &Path, map: &FeatureMap, grayscale: bool) -> Result<(), PnmError> {
    let channels = if grayscale { 1 } else { 3 };
    assert!(map.channels() >= channels, "map has too few channels");
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let magic = if grayscale { "P5" } else { "P6" };
    write!(w, "{magic}\n{} {}\n255\n", map.width(), map.height()).map_err(io_err(path))?;
    let mut row = Vec::with_capacity(map.width() * channels);
    for y in 0..map.height() {
        row.clear();
        for x in 0..map.width() {
            for c in 0..channels {
                let v = (map.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                row.push(v);
            }
        }
        w.write_all(&row).map_err(io_err(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let map = FeatureMap::from_fn(3, 4, 5, |_, y, x| ((y * 5 + x) as f32) / 255.0);
        write_pnm(&path, &map, true).unwrap();
        let back = read_pnm(&path).unwrap();
        assert_eq!(back.shape(), (3, 4, 5));
        for y in 0..4 {
            for x in 0..5 {
                assert!((back.get(0, y, x) - map.get(0, y, x)).abs() < 1e-6);
                // Grayscale replicates channels.
                assert_eq!(back.get(0, y, x), back.get(2, y, x));
            }
        }
    }

    #[test]
    fn ppm_roundtrip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ppm");
        let map = FeatureMap::from_fn(3, 2, 2, |c, y, x| ((c * 50 + y * 20 + x * 10) as f32) / 255.0);
        write_pnm(&path, &map, false).unwrap();

        // Inject a comment into the header; the reader must skip it.
        let bytes = std::fs::read(&path).unwrap();
        let mut with_comment = b"P6\n# synthetic frame\n".to_vec();
        with_comment.extend_from_slice(&bytes[3..]);
        std::fs::write(&path, with_comment).unwrap();

        let back = read_pnm(&path).unwrap();
        assert_eq!(back.shape(), (3, 2, 2));
        assert!((back.get(2, 1, 1) - map.get(2, 1, 1)).abs() < 1e-6);
    }

    #[test]
    fn reader_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.pgm");
        std::fs::write(&bad, b"P4\n2 2\n255\n....").unwrap();
        assert!(matches!(read_pnm(&bad), Err(PnmError::BadMagic { .. })));

        let cut = dir.path().join("cut.pgm");
        std::fs::write(&cut, b"P5\n4 4\n255\nxx").unwrap();
        assert!(matches!(read_pnm(&cut), Err(PnmError::Truncated { .. })));

        let maxval = dir.path().join("m.pgm");
        std::fs::write(&maxval, b"P5\n1 1\n65535\n\x00\x00").unwrap();
        assert!(matches!(read_pnm(&maxval), Err(PnmError::BadMaxval { .. })));
    }
}

//! Named weight arrays and their bit-exact binary file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "TRKW"
//! version 1 byte   0x01
//! count   u32      number of entries
//! entry:  name_len u32, name bytes (UTF-8),
//!         rank u32, dims rank * u32,
//!         values (product of dims) * f32 (IEEE-754 bits)
//! ```
//!
//! `load(save(w))` reproduces `w` exactly, bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"TRKW";
pub const WEIGHTS_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"TRKW\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported weight file version {0}")]
    BadVersion(u8),
    #[error("truncated weight file while reading {context}")]
    Truncated { context: &'static str },
    #[error("entry \"{name}\": shape {shape:?} implies {expected} values, found {got}")]
    CountMismatch {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("duplicate entry name \"{0}\"")]
    DuplicateName(String),
    #[error("entry name is not valid UTF-8")]
    BadName,
    #[error("missing entry \"{0}\"")]
    MissingEntry(String),
    #[error("entry \"{name}\": expected shape {expected:?}, found {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Ordered collection of uniquely named real arrays.
#[derive(Debug, Clone, Default)]
pub struct ModelWeights {
    entries: Vec<WeightEntry>,
    by_name: HashMap<String, usize>,
}

impl ModelWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, values: Vec<f32>) -> Result<(), WeightsError> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(WeightsError::CountMismatch {
                name: name.to_string(),
                shape,
                expected,
                got: values.len(),
            });
        }
        if self.by_name.contains_key(name) {
            return Err(WeightsError::DuplicateName(name.to_string()));
        }
        self.by_name.insert(name.to_string(), self.entries.len());
        self.entries.push(WeightEntry {
            name: name.to_string(),
            shape,
            values,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&WeightEntry, WeightsError> {
        self.by_name
            .get(name)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| WeightsError::MissingEntry(name.to_string()))
    }

    /// Fetch an entry and check its shape against the model configuration.
    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> Result<&WeightEntry, WeightsError> {
        let e = self.get(name)?;
        if e.shape != shape {
            return Err(WeightsError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                got: e.shape.clone(),
            });
        }
        Ok(e)
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serialize into the documented byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.push(WEIGHTS_VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightsError> {
        let mut cursor = ByteCursor { bytes, pos: 0 };
        let magic = cursor.take::<4>("magic")?;
        if magic != WEIGHTS_MAGIC {
            return Err(WeightsError::BadMagic { found: magic });
        }
        let version = cursor.take::<1>("version")?[0];
        if version != WEIGHTS_VERSION {
            return Err(WeightsError::BadVersion(version));
        }
        let count = cursor.u32("entry count")? as usize;
        let mut weights = ModelWeights::new();
        for _ in 0..count {
            let name_len = cursor.u32("name length")? as usize;
            let name_bytes = cursor.slice(name_len, "name")?;
            let name = std::str::from_utf8(name_bytes).map_err(|_| WeightsError::BadName)?.to_string();
            let rank = cursor.u32("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cursor.u32("dimension")? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = cursor.slice(n * 4, "values")?;
            let mut values = Vec::with_capacity(n);
            for chunk in raw.chunks_exact(4) {
                values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
            }
            weights.insert(&name, shape, values)?;
        }
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<(), WeightsError> {
        let file = File::create(path).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, WeightsError> {
        let file = File::open(path).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|source| WeightsError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_bytes(&bytes)
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn slice(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], WeightsError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightsError::Truncated { context });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn take<const N: usize>(&mut self, context: &'static str) -> Result<[u8; N], WeightsError> {
        let s = self.slice(N, context)?;
        let mut out = [0u8; N];
        out.copy_from_slice(s);
        Ok(out)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take::<4>(context)?))
    }
}

//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "VTAN"
//! version      u8       1
//! config_len   u32      followed by that many bytes of UTF-8 `key=value` lines
//! features     u32
//! emb_rows     u32      0 when the embedding is disabled
//! emb_dim      u32
//! hidden       3 × u32
//! flags        u8       bit 0: feature min/max follow; bit 1: BMI range follows
//! tensors      for each: u64 element count, then f64 values
//! ```
//!
//! Tensor order: feature min, feature max (if present), BMI min/max pair
//! (if present), then the network tensors in [`NetworkParams::tensor_names`]
//! order.

use std::fs;
use std::path::Path;

use super::{NetworkParams, NetworkShape};
use crate::error::{Error, Result};
use crate::features::Standardizer;

pub const MAGIC: [u8; 4] = *b"VTAN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub params: NetworkParams,
    pub scaler: Option<Standardizer>,
    /// Training-set (min, max) of BMI.
    pub bmi_range: Option<(f64, f64)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.config_echo.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_echo.as_bytes());
        let shape = &self.params.shape;
        for v in [
            shape.features,
            shape.embedding_rows.unwrap_or(0),
            shape.embedding_dim,
            shape.hidden[0],
            shape.hidden[1],
            shape.hidden[2],
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let flags = u8::from(self.scaler.is_some()) | (u8::from(self.bmi_range.is_some()) << 1);
        out.push(flags);

        let mut put = |t: &[f64]| {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        if let Some(s) = &self.scaler {
            put(&s.min);
            put(&s.max);
        }
        if let Some((lo, hi)) = self.bmi_range {
            put(&[lo, hi]);
        }
        for t in self.params.tensors() {
            put(t);
        }
        out
    }

    /// Parses a checkpoint. When `expected_input_dim` is given, a network
    /// with a different input width is rejected.
    pub fn from_bytes(bytes: &[u8], expected_input_dim: Option<usize>) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config_len = r.u32()? as usize;
        let config_echo = String::from_utf8(r.take(config_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config echo is not UTF-8".into()))?;
        let features = r.u32()? as usize;
        let rows = r.u32()? as usize;
        let embedding_dim = r.u32()? as usize;
        let hidden = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let shape = NetworkShape {
            features,
            embedding_rows: (rows > 0).then_some(rows),
            embedding_dim,
            hidden,
        };
        if let Some(expected) = expected_input_dim {
            if shape.input_dim() != expected {
                return Err(Error::Checkpoint(format!(
                    "input_dim {} does not match expected {expected}",
                    shape.input_dim()
                )));
            }
        }
        let flags = r.take(1)?[0];

        let scaler = if flags & 1 != 0 {
            let min = r.tensor(Some(features))?;
            let max = r.tensor(Some(features))?;
            Some(Standardizer { min, max })
        } else {
            None
        };
        let bmi_range = if flags & 2 != 0 {
            let t = r.tensor(Some(2))?;
            Some((t[0], t[1]))
        } else {
            None
        };

        let mut params = NetworkParams::zeros(shape);
        for t in params.tensors_mut() {
            let values = r.tensor(Some(t.len()))?;
            t.copy_from_slice(&values);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            config_echo,
            params,
            scaler,
            bmi_range,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_input_dim: Option<usize>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected_input_dim)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self, expected: Option<usize>) -> Result<Vec<f64>> {
        let len = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize;
        if expected.is_some_and(|e| e != len) {
            return Err(Error::Checkpoint(format!(
                "tensor length {len}, expected {}",
                expected.unwrap_or(0)
            )));
        }
        let raw = self.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("bad length".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes   "ULCK"
//! version      u32       1
//! input_dim    u32
//! n_hidden     u32
//! hidden dims  u32 × n_hidden
//! num_classes  u32
//! seed         u64
//! activation   u8        0 = ReLU
//! parameters   f64 × P   per layer: weights (fan_in × fan_out, row-major), then bias
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a write/read cycle is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::model::{Activation, Dense, Model};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ULCK";
const VERSION: u32 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let hidden = model.hidden_dims();
    let mut out = Vec::with_capacity(32 + 4 * hidden.len() + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(hidden.len() as u32).to_le_bytes());
    for h in &hidden {
        out.extend_from_slice(&(*h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&model.seed().to_le_bytes());
    out.push(model.activation().tag());
    for p in model.params() {
        out.extend_from_slice(&p.to_bits().to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            what: "checkpoint",
            reason: format!("truncated at byte {}", self.pos),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        reason: reason.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let input_dim = c.u32()? as usize;
    let n_hidden = c.u32()? as usize;
    if n_hidden > 1024 {
        return Err(bad(format!("implausible hidden layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden)
        .map(|_| c.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let num_classes = c.u32()? as usize;
    let seed = c.u64()?;
    let activation = Activation::from_tag(c.take(1)?[0]).ok_or_else(|| bad("unknown activation"))?;

    let mut dims = vec![input_dim];
    dims.extend(&hidden);
    dims.push(num_classes);
    if dims.contains(&0) {
        return Err(bad("zero dimension in header"));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut read = |n: usize| -> Result<Vec<f64>> {
            let raw = c.take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
            Ok(raw
                .chunks_exact(8)
                .map(|b| f64::from_bits(u64::from_le_bytes(b.try_into().unwrap())))
                .collect())
        };
        let weights = Matrix::from_vec(fan_in, fan_out, read(fan_in * fan_out)?)?;
        let bias = read(fan_out)?;
        layers.push(Dense { weights, bias });
    }
    if c.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Model::from_layers(layers, activation, seed)
}

pub fn write_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

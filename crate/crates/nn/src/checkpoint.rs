//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TENPROJ\0"
//! version   u32
//! layers    u32
//! per layer: kind u8, blocks u32, then per block: len u64
//! data      f64 per parameter, layer by layer, block by block
//! ```

use std::fs;
use std::path::Path;

use crate::error::{NnError, Result};
use crate::layers::Layer;
use crate::model::Network;

pub const MAGIC: &[u8; 8] = b"TENPROJ\0";
pub const VERSION: u32 = 1;

fn kind_code(layer: &Layer) -> u8 {
    match layer {
        Layer::Conv2d(_) => 1,
        Layer::AvgPool2d(_) => 2,
        Layer::Projection(_) => 3,
        Layer::Flatten(_) => 4,
        Layer::Dense(_) => 5,
        Layer::Relu(_) => 6,
        Layer::Dropout(_) => 7,
    }
}

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        let blocks = layer.params();
        out.push(kind_code(layer));
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for b in &blocks {
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
        }
    }
    for layer in net.layers() {
        for b in layer.params() {
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Loads parameters into `net`, which must have been built from the same
/// model spec.
pub fn decode_into(bytes: &[u8], net: &mut Network, path: &Path) -> Result<()> {
    let err = |m: String| NnError::format(path, m);
    let truncated = || NnError::format(path, "truncated checkpoint");
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(err("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != VERSION {
        return Err(err(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32().ok_or_else(truncated)? as usize;
    if count != net.layers().len() {
        return Err(err(format!(
            "checkpoint has {count} layers, model has {}",
            net.layers().len()
        )));
    }
    for (i, layer) in net.layers().iter().enumerate() {
        let kind = r.u8().ok_or_else(truncated)?;
        if kind != kind_code(layer) {
            return Err(err(format!("layer {}: kind code {kind} does not match {}", i + 1, layer.kind())));
        }
        let blocks = layer.params();
        let n = r.u32().ok_or_else(truncated)? as usize;
        if n != blocks.len() {
            return Err(err(format!("layer {}: {n} parameter blocks, expected {}", i + 1, blocks.len())));
        }
        for (j, b) in blocks.iter().enumerate() {
            let len = r.u64().ok_or_else(truncated)? as usize;
            if len != b.len() {
                return Err(err(format!(
                    "layer {} block {}: {len} values, expected {}",
                    i + 1,
                    j + 1,
                    b.len()
                )));
            }
        }
    }
    for layer in net.layers_mut() {
        for block in layer.params_mut() {
            for v in block.iter_mut() {
                *v = f64::from_le_bytes(r.take(8).ok_or_else(truncated)?.try_into().unwrap());
            }
        }
        layer.clear_cache();
    }
    if r.pos != bytes.len() {
        return Err(err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(())
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(net)).map_err(|e| NnError::io(path, e))
}

pub fn load_into(net: &mut Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NnError::io(path, e))?;
    decode_into(&bytes, net, path)
}

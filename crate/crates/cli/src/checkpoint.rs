//! Bit-exact weight serialization.
//!
//! Format, all little-endian:
//!   8 bytes  magic "RONETCK1"
//!   u32      format version (1)
//!   u32      tensor count
//! then per tensor, in store order:
//!   u32      name byte length, followed by that many UTF-8 bytes
//!   u8       rank
//!   u32 * rank   dims
//!   f32 * prod(dims)   values, row-major

use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ronet_core::{ModelWeights, Tensor};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 8] = b"RONETCK1";
pub const VERSION: u32 = 1;

pub fn to_bytes(weights: &ModelWeights<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    for (name, tensor) in weights.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.rank() as u8);
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            bail!(
                "truncated checkpoint: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            );
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelWeights<f32>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(8)?;
    if magic != MAGIC {
        bail!("bad checkpoint magic {magic:02x?}");
    }
    let version = cur.u32()?;
    if version != VERSION {
        bail!("unsupported checkpoint version {version} (expected {VERSION})");
    }
    let count = cur.u32()? as usize;
    let mut weights = ModelWeights::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .context("checkpoint name is not UTF-8")?
            .to_string();
        let rank = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        weights.insert(name, Tensor::new(shape, data)?)?;
    }
    if cur.pos != bytes.len() {
        bail!(
            "checkpoint has {} trailing bytes after {count} tensors",
            bytes.len() - cur.pos
        );
    }
    Ok(weights)
}

pub fn save(weights: &ModelWeights<f32>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, to_bytes(weights)).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<ModelWeights<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .with_context(|| format!("reading {}", path.display()))?;
    from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Hex SHA-256 of the serialized weights; the content hash recorded in run
/// manifests.
pub fn content_hash(weights: &ModelWeights<f32>) -> String {
    let digest = Sha256::digest(to_bytes(weights));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

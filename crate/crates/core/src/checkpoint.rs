//! Binary weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MLSN"  u32 version
//! u32 config length, UTF-8 network config (`net.key = value` lines)
//! u32 entry count
//! per entry: u32 name length, UTF-8 name, u32 rank, rank × u64 extents, f32 values
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! Entries hold the trainable parameters in layout order followed by the
//! batch-norm running statistics.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::config::{network_from_text, network_to_text};
use crate::error::{Error, Result};
use crate::net::{Buffer, ModelParams};
use crate::Tensor;

pub const MAGIC: &[u8; 4] = b"MLSN";
pub const VERSION: u32 = 1;
const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let config = network_to_text(params.config());
    put_u32(&mut out, config.len());
    out.extend_from_slice(config.as_bytes());
    put_u32(&mut out, params.params().len() + params.buffers().len());
    for p in params.params() {
        put_entry(&mut out, &p.name, p.tensor.shape(), p.tensor.data());
    }
    for b in params.buffers() {
        put_entry(&mut out, &b.name, &[b.data.len()], &b.data);
    }
    let sum = CHECKSUM.checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Checkpoint(format!("file of {} bytes is too short", bytes.len())));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
    let actual = CHECKSUM.checksum(body);
    if stored != actual {
        return Err(Error::Checkpoint(format!("checksum mismatch: stored {stored:016x}, computed {actual:016x}")));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != &MAGIC[..] {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()?;
    let config = network_from_text(r.text(n)?)?;
    let (want_params, _) = ModelParams::expected_layout(&config);
    let count = r.u32()?;
    let mut params = Vec::new();
    let mut buffers = Vec::new();
    for _ in 0..count {
        let n = r.u32()?;
        let name = r.text(n)?.to_string();
        let rank = r.u32()?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("extent overflow".into()))?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|l| l.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: extents overflow")))?;
        let data: Vec<f32> = r
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if want_params.iter().any(|(n, _)| *n == name) {
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            params.push((name, t));
        } else {
            if shape.len() != 1 {
                return Err(Error::Checkpoint(format!("{name}: buffers are rank 1")));
            }
            buffers.push(Buffer { name, data });
        }
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }
    ModelParams::from_parts(&config, params, buffers)
}

/// Writes through a temporary sibling file so a failed write never leaves a partial checkpoint.
pub fn save(path: &Path, params: &ModelParams) -> Result<()> {
    let tmp = path.with_extension("ckpt.partial");
    std::fs::write(&tmp, encode(params)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkConfig;

    fn small() -> ModelParams {
        ModelParams::init(&NetworkConfig::small(), 5).unwrap()
    }

    #[test]
    fn encode_decode_encode_is_identical() {
        let p = small();
        let bytes = encode(&p);
        let q = decode(&bytes).unwrap();
        assert_eq!(encode(&q), bytes);
        assert_eq!(q.config(), p.config());
        for (a, b) in p.params().iter().zip(q.params()) {
            assert_eq!(a.name, b.name);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.tensor), bits(&b.tensor));
        }
        assert_eq!(p.buffers(), q.buffers());
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&small());
        assert_eq!(&bytes[..4], b"MLSN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert!(std::str::from_utf8(&bytes[12..12 + n]).unwrap().starts_with("net.base_channels = 8\n"));
    }

    #[test]
    fn every_single_byte_flip_is_rejected() {
        let bytes = encode(&ModelParams::init(&NetworkConfig { base_channels: 4, cbam_reduction: 2, heads: 2, ..NetworkConfig::small() }, 1).unwrap());
        for i in (0..bytes.len()).step_by(97).chain([bytes.len() - 1]) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))), "byte {i}");
        }
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = encode(&small());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&bytes[..10]).is_err());
        assert!(decode(&[]).is_err());
    }
}

//! Binary checkpoint format.
//!
//! ```text
//! "CKPT" | version: u16 | count: u32
//! per tensor: name_len: u16 | name (UTF-8) | rank: u8 | dims: u32 * rank | f32 * prod(dims)
//! ```
//! All integers and floats are little-endian. Values are stored as `f32`.

use std::path::Path;

use crate::error::{NumError, Result};
use crate::module::ParamMap;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CKPT";
pub const VERSION: u16 = 1;

pub fn encode_checkpoint(tensors: &ParamMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(bad(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn bad(msg: String) -> NumError {
    NumError::Checkpoint(msg)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamMap> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u32("count")?;
    let mut map = ParamMap::new();
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| bad("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        if rank == 0 {
            return Err(bad(format!("tensor {name} has rank 0")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut elems: usize = 1;
        for _ in 0..rank {
            let d = r.u32("dim")? as usize;
            if d == 0 {
                return Err(bad(format!("tensor {name} has a zero dimension")));
            }
            elems = elems
                .checked_mul(d)
                .filter(|&e| e <= r.remaining() / 4)
                .ok_or_else(|| bad(format!("tensor {name} larger than remaining payload")))?;
            shape.push(d);
        }
        let payload = r.take(elems * 4, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let t = Tensor::from_vec(&shape, data)?;
        if map.insert(name.clone(), t).is_some() {
            return Err(bad(format!("duplicate tensor name {name}")));
        }
    }
    if r.remaining() != 0 {
        return Err(bad(format!("{} trailing bytes", r.remaining())));
    }
    Ok(map)
}

fn io_err(path: &Path, source: std::io::Error) -> NumError {
    NumError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, tensors: &ParamMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(tensors)).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamMap> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| io_err(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamMap {
        let mut m = ParamMap::new();
        m.insert("enc.w".into(), Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 2.25, 0.0, 3.0, -0.125]).unwrap());
        m.insert("b".into(), Tensor::vector(vec![1.0]));
        m
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = encode_checkpoint(&sample());
        assert_eq!(&bytes[..4], b"CKPT");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..12], &[5, 0]);
        assert_eq!(&bytes[12..17], b"enc.w");
        assert_eq!(bytes[17], 2);
        assert_eq!(&bytes[18..22], &[2, 0, 0, 0]);
        assert_eq!(&bytes[22..26], &[3, 0, 0, 0]);
        assert_eq!(&bytes[26..30], &0.5f32.to_le_bytes());
        // header 10 + (2+5+1+8+24) + (2+1+1+4+4)
        assert_eq!(bytes.len(), 10 + 40 + 12);
    }

    #[test]
    fn decode_inverts_encode() {
        let m = sample();
        assert_eq!(decode_checkpoint(&encode_checkpoint(&m)).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_input() {
        let good = encode_checkpoint(&sample());
        assert!(decode_checkpoint(b"NOPE").is_err());
        assert!(decode_checkpoint(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut v2 = good.clone();
        v2[4] = 2;
        assert!(decode_checkpoint(&v2).is_err());
        // Absurd dimension must not allocate.
        let mut huge = b"CKPT\x01\x00\x01\x00\x00\x00\x01\x00a\x02".to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_checkpoint(&huge).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut bytes = b"CKPT\x01\x00\x02\x00\x00\x00".to_vec();
        for _ in 0..2 {
            bytes.extend_from_slice(&[1, 0, b'x', 1, 1, 0, 0, 0]);
            bytes.extend_from_slice(&1f32.to_le_bytes());
        }
        assert!(decode_checkpoint(&bytes).is_err());
    }
}

//! Versioned binary checkpoints of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LCKP" | version u32 | dtype u8 | count u32
//! per tensor: name_len u32 | name utf8 | ndim u32 | dims u64 × ndim | values
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

const MAGIC: &[u8; 4] = b"LCKP";
const VERSION: u32 = 1;

fn fail(reason: impl Into<String>) -> Error {
    Error::Decode {
        what: "checkpoint",
        reason: reason.into(),
    }
}

pub fn encode<T: Scalar>(params: &[(String, Tensor<T>)]) -> Vec<u8> {
    let payload: usize = params.iter().map(|(_, t)| t.len() * T::BYTES).sum();
    let mut out = Vec::with_capacity(payload + 64 * params.len() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| fail(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(fail("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let dtype = r.take(1)?[0];
    if dtype != T::DTYPE {
        return Err(fail(format!("dtype tag {dtype}, expected {}", T::DTYPE)));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| fail("name is not utf-8"))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("shape overflow"))?;
        let raw = r.take(n.checked_mul(T::BYTES).ok_or_else(|| fail("shape overflow"))?)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn save<T: Scalar>(path: impl AsRef<Path>, params: &[(String, Tensor<T>)]) -> Result<()> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    decode(&std::fs::read(path)?)
}

/// Hex SHA-256 of the encoded checkpoint.
pub fn hash<T: Scalar>(params: &[(String, Tensor<T>)]) -> String {
    hex::encode(Sha256::digest(encode(params)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor<f32>)> {
        vec![
            ("a.weight".into(), Tensor::from_fn(vec![2, 3], |i| i as f32 * 0.5 - 1.0)),
            ("a.bias".into(), Tensor::from_fn(vec![2], |i| i as f32)),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let params = sample();
        let bytes = encode(&params);
        assert_eq!(decode::<f32>(&bytes).unwrap(), params);
        assert_eq!(hash(&params), hash(&decode::<f32>(&bytes).unwrap()));
    }

    #[test]
    fn rejects_truncation_and_wrong_dtype() {
        let bytes = encode(&sample());
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode::<f64>(&bytes).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode::<f32>(&extra).is_err());
    }
}

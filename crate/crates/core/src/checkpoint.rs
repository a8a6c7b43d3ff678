//! Binary checkpoint container. All integers and floats little-endian:
//!
//! ```text
//! offset  size        field
//! 0       8           magic "DOMINOCK"
//! 8       4   u32     format version (1)
//! 12      8   u64     init seed
//! 20      8   u64     config fingerprint (FNV-1a 64 of the canonical config)
//! 28      4   u32     L = number of layer sizes
//! 32      4*L u32     layer sizes [d_in, h_1, ..., N]
//! ...     per layer l: out*in f64 weights (row-major, out x in), then out f64 biases
//! ```
//! No trailing bytes are allowed.

use std::path::Path;

use crate::matrix::Matrix;
use crate::net::{ModelParams, NetError};

pub const MAGIC: &[u8; 8] = b"DOMINOCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated or has trailing bytes")]
    Truncated,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config_fingerprint: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(32 + 8 * p.num_parameters());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&p.seed().to_le_bytes());
        out.extend_from_slice(&self.config_fingerprint.to_le_bytes());
        out.extend_from_slice(&(p.layer_sizes().len() as u32).to_le_bytes());
        for &s in p.layer_sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for (w, b) in p.weights().iter().zip(p.biases()) {
            for v in w.as_slice().iter().chain(b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let seed = r.u64()?;
        let config_fingerprint = r.u64()?;
        let num_sizes = r.u32()? as usize;
        // each size takes 4 bytes, so a bogus count fails here instead of allocating
        if num_sizes.saturating_mul(4) > bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let sizes = (0..num_sizes)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if sizes.len() < 2 {
            return Err(NetError::BadArchitecture(format!("layer sizes {sizes:?}")).into());
        }
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let data = r.f64s(
                fan_out
                    .checked_mul(fan_in)
                    .ok_or(CheckpointError::Truncated)?,
            )?;
            weights.push(Matrix::from_vec(fan_out, fan_in, data).expect("sized read"));
            biases.push(r.f64s(fan_out)?);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        Ok(Self {
            params: ModelParams::from_layers(weights, biases, seed)?,
            config_fingerprint,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;

    fn sample() -> Checkpoint {
        Checkpoint {
            params: init_params(&[5, 4, 3], 77).unwrap(),
            config_fingerprint: 0xDEAD_BEEF_0123_4567,
        }
    }

    #[test]
    fn byte_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(bytes.len(), 32 + 3 * 4 + 8 * (5 * 4 + 4 + 4 * 3 + 3));
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(b"nope"),
            Err(CheckpointError::BadMagic)
        ));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&wrong),
            Err(CheckpointError::BadMagic)
        ));
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&ver),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated)
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&extra),
            Err(CheckpointError::Truncated)
        ));
        let mut huge = bytes;
        huge[28..32].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&huge),
            Err(CheckpointError::Truncated)
        ));
    }
}

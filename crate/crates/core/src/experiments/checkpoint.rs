//! Binary checkpoints: a fixed header, the SHA-256 of the resolved configuration, and a
//! hashed payload of raw little-endian words.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::integrator::StateSnapshot;

pub const MAGIC: &[u8; 8] = b"FADDCKPT";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 32 + 8 + 32;

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn snapshot(&mut self, s: &StateSnapshot) {
        self.f64(s.t);
        for a in [&s.theta, &s.theta_t, &s.phi, &s.phi_t] {
            self.f64s(a);
        }
    }

    /// The complete file: header, configuration hash, payload hash, payload.
    pub fn finish(self, config_hash: &[u8; 32]) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + self.buf.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(config_hash);
        out.extend_from_slice(&(self.buf.len() as u64).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&self.buf));
        out.extend_from_slice(&self.buf);
        out
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Validates the header and both hashes, then reads from the payload.
    pub fn open(bytes: &'a [u8], config_hash: &[u8; 32]) -> Result<Self> {
        if bytes.len() < HEADER || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".to_string()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "version {version}, this build reads version {VERSION}"
            )));
        }
        let stored_cfg = &bytes[12..44];
        if stored_cfg != config_hash {
            return Err(Error::Checkpoint(format!(
                "written for configuration {}, current configuration is {}",
                hex(stored_cfg),
                hex(config_hash)
            )));
        }
        let len = u64::from_le_bytes(bytes[44..52].try_into().unwrap()) as usize;
        let stored = &bytes[52..84];
        let payload = &bytes[HEADER..];
        if payload.len() != len {
            return Err(Error::Checkpoint(format!(
                "payload is {} bytes, header says {len}",
                payload.len()
            )));
        }
        let computed = Sha256::digest(payload);
        if computed.as_slice() != stored {
            return Err(Error::Checkpoint(format!(
                "payload hash mismatch: stored {}, computed {}",
                hex(stored),
                hex(&computed)
            )));
        }
        Ok(Decoder { buf: payload, pos: 0 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("payload ends early".to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Checkpoint(format!("array of {n} values exceeds the payload")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn snapshot(&mut self, grid: UniformGrid) -> Result<StateSnapshot> {
        let t = self.f64()?;
        let mut s = StateSnapshot::zeros(grid, t);
        for a in [&mut s.theta, &mut s.theta_t, &mut s.phi, &mut s.phi_t] {
            let v = self.f64s()?;
            if v.len() != grid.len() {
                return Err(Error::Checkpoint(format!(
                    "snapshot has {} nodes, grid has {}",
                    v.len(),
                    grid.len()
                )));
            }
            *a = v;
        }
        Ok(s)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes in payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Writes via a temporary file and a rename so a crash never leaves a torn checkpoint.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StateSnapshot {
        let g = UniformGrid::cartesian(2, 1.0, 0.25).unwrap();
        let mut s = StateSnapshot::zeros(g, 0.1 + 0.2);
        for (k, v) in s.theta.iter_mut().enumerate() {
            *v = (k as f64).sin() / 3.0;
        }
        s.phi_t[3] = -0.0;
        s.phi[4] = f64::MIN_POSITIVE / 7.0;
        s
    }

    #[test]
    fn snapshot_roundtrip_is_bitwise() {
        let s = sample();
        let mut e = Encoder::new();
        e.snapshot(&s);
        let bytes = e.finish(&[7; 32]);
        let mut d = Decoder::open(&bytes, &[7; 32]).unwrap();
        let back = d.snapshot(s.grid).unwrap();
        d.finish().unwrap();
        assert_eq!(back.t.to_bits(), s.t.to_bits());
        for (a, b) in [(&back.theta, &s.theta), (&back.phi, &s.phi), (&back.phi_t, &s.phi_t)] {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corruption_and_mismatch_are_refused() {
        let mut e = Encoder::new();
        e.snapshot(&sample());
        let bytes = e.finish(&[1; 32]);
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() ^= 1;
        let err = Decoder::open(&bad, &[1; 32]).err().unwrap().to_string();
        assert!(err.contains("payload hash mismatch"), "{err}");
        let err = Decoder::open(&bytes, &[2; 32]).err().unwrap().to_string();
        assert!(err.contains("configuration"), "{err}");
        let mut old = bytes.clone();
        old[8] = 9;
        assert!(Decoder::open(&old, &[1; 32])
            .err()
            .unwrap()
            .to_string()
            .contains("version 9"));
    }
}

//! Versioned binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "RGYMCKPT"
//! version    u32      1
//! kind       u8       0 sorting, 1 pressing, 2 monolithic
//! masked     u8       0 | 1
//! reserved   u16      0
//! obs_len    u32
//! n_actions  u32
//! n_hidden   u32      followed by n_hidden u32 layer widths
//! seed       u64
//! n_params   u32
//! checksum   32 bytes SHA-256 of the parameter block
//! params     n_params little-endian f32
//! ```
//!
//! All integers are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::nn::MlpPolicy;
use crate::error::{Error, Result};
use crate::spaces::AgentKind;

pub const MAGIC: &[u8; 8] = b"RGYMCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: AgentKind,
    pub masked: bool,
    pub seed: u64,
    pub net: MlpPolicy<f32>,
}

fn param_block(net: &MlpPolicy<f32>) -> Vec<u8> {
    net.params().iter().flat_map(|p| p.to_le_bytes()).collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    /// Hex SHA-256 of the parameter block.
    pub fn checksum(&self) -> String {
        hex(&Sha256::digest(param_block(&self.net)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = param_block(&self.net);
        let mut out = Vec::with_capacity(64 + params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.push(self.masked as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.net.obs_len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.net.n_actions() as u32).to_le_bytes());
        out.extend_from_slice(&(self.net.hidden().len() as u32).to_le_bytes());
        for &h in self.net.hidden() {
            out.extend_from_slice(&(h as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.net.param_count() as u32).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&params));
        out.extend_from_slice(&params);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let kind = AgentKind::from_code(r.u8()?).ok_or("unknown agent kind")?;
        let masked = match r.u8()? {
            0 => false,
            1 => true,
            m => return Err(format!("bad masked flag {m}")),
        };
        r.u16()?;
        let obs_len = r.u32()? as usize;
        let n_actions = r.u32()? as usize;
        let spec = kind.spec();
        if obs_len != spec.obs_len || n_actions != spec.n_actions {
            return Err(format!(
                "{kind} checkpoint has shape ({n_actions}, {obs_len}), expected ({}, {})",
                spec.n_actions, spec.obs_len
            ));
        }
        let n_hidden = r.u32()? as usize;
        if n_hidden > 64 {
            return Err(format!("implausible hidden layer count {n_hidden}"));
        }
        let hidden = (0..n_hidden)
            .map(|_| r.u32().map(|h| h as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let seed = r.u64()?;
        let n_params = r.u32()? as usize;
        let checksum = r.take(32)?.to_vec();
        let block = r.take(n_params * 4)?;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        if Sha256::digest(block).as_slice() != checksum.as_slice() {
            return Err("parameter checksum mismatch".into());
        }
        let params = block
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let net = MlpPolicy::from_params(obs_len, n_actions, &hidden, params).map_err(|e| e.to_string())?;
        Ok(Checkpoint {
            kind,
            masked,
            seed,
            net,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::nn::DEFAULT_HIDDEN;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ckpt(kind: AgentKind, seed: u64) -> Checkpoint {
        let spec = kind.spec();
        Checkpoint {
            kind,
            masked: seed.is_multiple_of(2),
            seed,
            net: MlpPolicy::new(spec.obs_len, spec.n_actions, &DEFAULT_HIDDEN, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    proptest! {
        #[test]
        fn roundtrip(seed in any::<u64>(), k in 0u8..3) {
            let c = ckpt(AgentKind::from_code(k).unwrap(), seed);
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.checksum(), c.checksum());
        }
    }

    #[test]
    fn header_layout() {
        let c = ckpt(AgentKind::Pressing, 4);
        let b = c.to_bytes();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(b[12], 1);
        assert_eq!(b[13], 1);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 16);
        assert_eq!(u32::from_le_bytes(b[20..24].try_into().unwrap()), 11);
        let header = 8 + 4 + 4 + 4 + 4 + 4 + 8 + 8 + 4 + 32;
        assert_eq!(b.len(), header + 4 * c.net.param_count());
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = ckpt(AgentKind::Sorting, 1).to_bytes();
        let last = b.len() - 1;
        b[last] ^= 0x40;
        assert_eq!(Checkpoint::from_bytes(&b).unwrap_err(), "parameter checksum mismatch");
        assert!(Checkpoint::from_bytes(&b[..20]).is_err());
        let mut bad_magic = ckpt(AgentKind::Sorting, 1).to_bytes();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
    }
}

//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "KZNN"
//! 4       4     format version (u32 LE), currently 1
//! 8       4     item count n (u32 LE)
//! 12      4     hidden width N (u32 LE)
//! 16      8     parameter count P (u64 LE)
//! 24      8*P   parameters, IEEE-754 f64 LE, flat layout of `Mlp`
//! ..      8     seed (u64 LE)
//! ..      8     games played (u64 LE)
//! ..      8     evaluation score (f64 LE, NaN when never evaluated)
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{param_count, Mlp};

pub const MAGIC: &[u8; 4] = b"KZNN";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;
const META_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated checkpoint: {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub games_played: u64,
    pub eval_score: f64,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self { seed: 0, games_played: 0, eval_score: f64::NAN }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self.net.params();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len() + META_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.net.n() as u32).to_le_bytes());
        out.extend_from_slice(&(self.net.hidden_width() as u32).to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&self.meta.games_played.to_le_bytes());
        out.extend_from_slice(&self.meta.eval_score.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                return Err(CheckpointError::BadMagic);
            }
            return Err(CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        let n = u32_at(8) as usize;
        let hidden = u32_at(12) as usize;
        let count = u64_at(16) as usize;
        if hidden == 0 || count != param_count(n, hidden) {
            return Err(CheckpointError::DimensionMismatch(format!(
                "{count} parameters stored for n = {n}, N = {hidden}"
            )));
        }
        let expected = HEADER_LEN + 8 * count + META_LEN;
        if bytes.len() < expected {
            return Err(CheckpointError::Truncated { expected, found: bytes.len() });
        }
        let params = (0..count)
            .map(|k| f64::from_bits(u64_at(HEADER_LEN + 8 * k)))
            .collect();
        let m = HEADER_LEN + 8 * count;
        let meta = CheckpointMeta {
            seed: u64_at(m),
            games_played: u64_at(m + 8),
            eval_score: f64::from_bits(u64_at(m + 16)),
        };
        let net = Mlp::from_params(n, hidden, params)
            .map_err(|e| CheckpointError::DimensionMismatch(e.to_string()))?;
        Ok(Self { net, meta })
    }

    /// Fail unless the stored network plays `n`-item games.
    pub fn ensure_items(&self, n: usize) -> Result<(), CheckpointError> {
        if self.net.n() != n {
            return Err(CheckpointError::DimensionMismatch(format!(
                "checkpoint is for {} items, arena uses {n}",
                self.net.n()
            )));
        }
        Ok(())
    }
}

/// Write atomically: a temporary sibling file is renamed into place.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, ckpt.to_bytes())?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

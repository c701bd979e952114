//! Resumable training state.
//!
//! Little-endian binary: magic `KZTS`, u32 version, u64 config
//! fingerprint, then the phase counter, network, optimizer moments, best
//! checkpoint, replay buffer and metrics rows. Checkpoints are embedded as
//! length-prefixed byte strings in the regular checkpoint format.

use std::fs;
use std::path::Path;

use crate::nn::{Adam, AdamConfig, Checkpoint, TrainingSample};

use super::{MetricsRow, ReplayBuffer, TrainError};

const MAGIC: &[u8; 4] = b"KZTS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SavedState {
    pub fingerprint: u64,
    pub phase: u64,
    pub games_played: u64,
    pub wall_time: f64,
    pub current: Checkpoint,
    pub best: Option<Checkpoint>,
    pub adam: Adam,
    pub buffer: ReplayBuffer,
    pub metrics: Vec<MetricsRow>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64s(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        xs.iter().for_each(|&x| self.f64(x));
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(what: &str) -> TrainError {
    TrainError::CorruptState(what.to_string())
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, TrainError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize, TrainError> {
        let k = self.u64()? as usize;
        if k > self.buf.len() {
            return Err(corrupt("length field out of range"));
        }
        Ok(k)
    }
    fn f64s(&mut self) -> Result<Vec<f64>, TrainError> {
        let k = self.len()?;
        (0..k).map(|_| self.f64()).collect()
    }
    fn bytes(&mut self) -> Result<&'a [u8], TrainError> {
        let k = self.len()?;
        self.take(k)
    }
}

fn mask_bits(legal: &[bool]) -> u64 {
    legal.iter().enumerate().filter(|(_, &b)| b).fold(0, |m, (i, _)| m | 1 << i)
}

impl SavedState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.u64(self.fingerprint);
        w.u64(self.phase);
        w.u64(self.games_played);
        w.f64(self.wall_time);
        w.bytes(&self.current.to_bytes());
        w.bytes(&self.best.as_ref().map_or(Vec::new(), |b| b.to_bytes()));
        let (m, v) = self.adam.moments();
        w.u64(self.adam.steps());
        w.f64s(m);
        w.f64s(v);
        w.u64(self.buffer.capacity() as u64);
        w.u64(self.buffer.len() as u64);
        for s in self.buffer.iter() {
            w.f64s(&s.state);
            w.f64s(&s.policy);
            w.f64(s.outcome);
            w.u64(s.legal.len() as u64);
            w.u64(mask_bits(&s.legal));
        }
        w.u64(self.metrics.len() as u64);
        for r in &self.metrics {
            w.u64(r.phase);
            w.u64(r.games_played);
            w.f64(r.mean_loss);
            w.f64(r.eval_win_rate.unwrap_or(f64::NAN));
            w.f64(r.wall_time);
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8], adam_cfg: AdamConfig) -> Result<Self, TrainError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(&format!("unsupported state version {version}")));
        }
        let fingerprint = r.u64()?;
        let phase = r.u64()?;
        let games_played = r.u64()?;
        let wall_time = r.f64()?;
        let current = Checkpoint::from_bytes(r.bytes()?)?;
        let best_bytes = r.bytes()?;
        let best = if best_bytes.is_empty() { None } else { Some(Checkpoint::from_bytes(best_bytes)?) };
        let steps = r.u64()?;
        let m = r.f64s()?;
        let v = r.f64s()?;
        if m.len() != current.net.params().len() || v.len() != m.len() {
            return Err(corrupt("optimizer shape does not match network"));
        }
        let adam = Adam::from_parts(adam_cfg, m, v, steps);
        let cap = r.u64()? as usize;
        if cap == 0 {
            return Err(corrupt("zero buffer capacity"));
        }
        let mut buffer = ReplayBuffer::new(cap);
        let count = r.len()?;
        for _ in 0..count {
            let state = r.f64s()?;
            let policy = r.f64s()?;
            let outcome = r.f64()?;
            let k = r.u64()? as usize;
            let bits = r.u64()?;
            if k > 64 {
                return Err(corrupt("legal mask too long"));
            }
            buffer.push(TrainingSample { state, policy, outcome, legal: (0..k).map(|i| bits >> i & 1 == 1).collect() });
        }
        let rows = r.len()?;
        let mut metrics = Vec::with_capacity(rows);
        for _ in 0..rows {
            let phase = r.u64()?;
            let games_played = r.u64()?;
            let mean_loss = r.f64()?;
            let eval = r.f64()?;
            let wall_time = r.f64()?;
            metrics.push(MetricsRow {
                phase,
                games_played,
                mean_loss,
                eval_win_rate: (!eval.is_nan()).then_some(eval),
                wall_time,
            });
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { fingerprint, phase, games_played, wall_time, current, best, adam, buffer, metrics })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).and_then(|_| fs::rename(&tmp, path)).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path, adam_cfg: AdamConfig) -> Result<Self, TrainError> {
        let bytes = fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_bytes(&bytes, adam_cfg)
    }
}

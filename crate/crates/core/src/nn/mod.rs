//! Fully connected policy/value network with two equal-width ReLU layers.
//!
//! Input is the `4n` state encoding from [`crate::game::GameState::encode`].
//! The policy head emits one logit per item, normalized by a softmax over
//! legal items only; the value head is a single sigmoid unit estimating the
//! mover's expected score.
//!
//! All parameters live in one flat `Vec<f64>` so gradients and optimizer
//! moments share the same layout.

mod adam;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta};

use rand::Rng as _;
use thiserror::Error;

use crate::rng;

/// Floor applied to probabilities inside the log of the policy loss.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("no legal move in mask")]
    EmptyMask,
    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("hidden width must be at least 1")]
    ZeroWidth,
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    /// Probability per item; zero on illegal items.
    pub policy: Vec<f64>,
    pub value: f64,
}

/// One position from self-play together with its search and game targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub state: Vec<f64>,
    /// Improved policy from the search, supported on legal items.
    pub policy: Vec<f64>,
    /// Final score of the player to move in `state`.
    pub outcome: f64,
    pub legal: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    n: usize,
    hidden: usize,
    params: Vec<f64>,
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    len: usize,
}

impl Layout {
    fn new(n: usize, hidden: usize) -> Self {
        let input = 4 * n;
        let w1 = 0;
        let b1 = w1 + hidden * input;
        let w2 = b1 + hidden;
        let b2 = w2 + hidden * hidden;
        let wp = b2 + hidden;
        let bp = wp + n * hidden;
        let wv = bp + n;
        let bv = wv + hidden;
        Self { w1, b1, w2, b2, wp, bp, wv, bv, len: bv + 1 }
    }
}

/// Intermediate activations kept for backpropagation.
struct Trace {
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    out: NetOutput,
}

pub fn param_count(n: usize, hidden: usize) -> usize {
    Layout::new(n, hidden).len
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out[r] = bias[r] + sum_c w[r * cols + c] * x[c]`
fn affine(w: &[f64], bias: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    out.clear();
    out.extend(bias.iter().enumerate().map(|(r, &b)| {
        let row = &w[r * cols..(r + 1) * cols];
        b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// Softmax restricted to legal entries; illegal entries get exactly zero.
pub fn masked_softmax(logits: &[f64], legal: &[bool]) -> Result<Vec<f64>, NetError> {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NetError::EmptyMask);
    }
    let mut p: Vec<f64> = logits
        .iter()
        .zip(legal)
        .map(|(&l, &ok)| if ok { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// `(z - v)^2 - sum_i pi_i ln max(p_i, 1e-12)`, with `0 ln 0 = 0`.
pub fn loss(out: &NetOutput, sample: &TrainingSample) -> f64 {
    let value_term = (sample.outcome - out.value).powi(2);
    let policy_term: f64 = sample
        .policy
        .iter()
        .zip(&out.policy)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &p)| -t * p.max(LOG_CLAMP).ln())
        .sum();
    value_term + policy_term
}

impl Mlp {
    /// He-uniform hidden layers, small uniform heads, zero biases.
    pub fn new(n: usize, hidden: usize, seed: u64) -> Result<Self, NetError> {
        if hidden == 0 {
            return Err(NetError::ZeroWidth);
        }
        let lay = Layout::new(n, hidden);
        let mut params = vec![0.0; lay.len];
        let mut rng = rng::seeded(seed);
        let mut fill = |slice: &mut [f64], limit: f64| {
            for p in slice {
                *p = rng.random_range(-limit..limit);
            }
        };
        let input = 4 * n;
        fill(&mut params[lay.w1..lay.b1], (6.0 / input as f64).sqrt());
        fill(&mut params[lay.w2..lay.b2], (6.0 / hidden as f64).sqrt());
        let head = 0.1 / (hidden as f64).sqrt();
        fill(&mut params[lay.wp..lay.bp], head);
        fill(&mut params[lay.wv..lay.bv], head);
        Ok(Self { n, hidden, params })
    }

    /// Wrap an existing flat parameter vector.
    pub fn from_params(n: usize, hidden: usize, params: Vec<f64>) -> Result<Self, NetError> {
        if hidden == 0 {
            return Err(NetError::ZeroWidth);
        }
        let expected = param_count(n, hidden);
        if params.len() != expected {
            return Err(NetError::Dimension { what: "parameters", expected, found: params.len() });
        }
        Ok(Self { n, hidden, params })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(self.n, self.hidden)
    }

    fn check_dims(&self, state: &[f64], legal: &[bool]) -> Result<(), NetError> {
        if state.len() != 4 * self.n {
            return Err(NetError::Dimension { what: "state", expected: 4 * self.n, found: state.len() });
        }
        if legal.len() != self.n {
            return Err(NetError::Dimension { what: "legal mask", expected: self.n, found: legal.len() });
        }
        Ok(())
    }

    fn trace(&self, state: &[f64], legal: &[bool]) -> Result<Trace, NetError> {
        self.check_dims(state, legal)?;
        let lay = self.layout();
        let p = &self.params;
        let mut a1 = Vec::with_capacity(self.hidden);
        affine(&p[lay.w1..lay.b1], &p[lay.b1..lay.w2], state, &mut a1);
        let h1: Vec<f64> = a1.iter().map(|&x| x.max(0.0)).collect();
        let mut a2 = Vec::with_capacity(self.hidden);
        affine(&p[lay.w2..lay.b2], &p[lay.b2..lay.wp], &h1, &mut a2);
        let h2: Vec<f64> = a2.iter().map(|&x| x.max(0.0)).collect();
        let mut logits = Vec::with_capacity(self.n);
        affine(&p[lay.wp..lay.bp], &p[lay.bp..lay.wv], &h2, &mut logits);
        let policy = masked_softmax(&logits, legal)?;
        let zv = p[lay.bv] + p[lay.wv..lay.bv].iter().zip(&h2).map(|(a, b)| a * b).sum::<f64>();
        let out = NetOutput { policy, value: sigmoid(zv) };
        Ok(Trace { a1, h1, a2, h2, out })
    }

    pub fn forward(&self, state: &[f64], legal: &[bool]) -> Result<NetOutput, NetError> {
        self.trace(state, legal).map(|t| t.out)
    }

    /// Gradient of the mean batch loss, and the mean loss itself.
    pub fn gradient(&self, batch: &[TrainingSample]) -> Result<(Vec<f64>, f64), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let lay = self.layout();
        let (n, h) = (self.n, self.hidden);
        let input = 4 * n;
        let p = &self.params;
        let mut g = vec![0.0; lay.len];
        let mut total_loss = 0.0;
        let mut dh2 = vec![0.0; h];
        let mut da2 = vec![0.0; h];
        let mut da1 = vec![0.0; h];
        for sample in batch {
            if sample.policy.len() != n {
                return Err(NetError::Dimension { what: "target policy", expected: n, found: sample.policy.len() });
            }
            let t = self.trace(&sample.state, &sample.legal)?;
            total_loss += loss(&t.out, sample);

            // Value head: d/dz (z_t - sigmoid(z))^2
            let v = t.out.value;
            let dzv = 2.0 * (v - sample.outcome) * v * (1.0 - v);

            // Policy head through the masked softmax. Entries whose
            // probability is under the log clamp contribute a constant.
            let live_mass: f64 = sample
                .policy
                .iter()
                .zip(&t.out.policy)
                .filter(|(_, &q)| q >= LOG_CLAMP)
                .map(|(&pi, _)| pi)
                .sum();
            let dlogit: Vec<f64> = (0..n)
                .map(|i| {
                    if !sample.legal[i] {
                        return 0.0;
                    }
                    let q = t.out.policy[i];
                    let own = if q >= LOG_CLAMP { sample.policy[i] } else { 0.0 };
                    q * live_mass - own
                })
                .collect();

            for (j, d) in dh2.iter_mut().enumerate() {
                *d = p[lay.wv + j] * dzv;
            }
            for i in 0..n {
                if dlogit[i] == 0.0 {
                    continue;
                }
                g[lay.bp + i] += dlogit[i];
                let row = lay.wp + i * h;
                for j in 0..h {
                    g[row + j] += dlogit[i] * t.h2[j];
                    dh2[j] += p[row + j] * dlogit[i];
                }
            }
            g[lay.bv] += dzv;
            for j in 0..h {
                g[lay.wv + j] += dzv * t.h2[j];
                da2[j] = if t.a2[j] > 0.0 { dh2[j] } else { 0.0 };
            }

            da1.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..h {
                if da2[r] == 0.0 {
                    continue;
                }
                g[lay.b2 + r] += da2[r];
                let row = lay.w2 + r * h;
                for c in 0..h {
                    g[row + c] += da2[r] * t.h1[c];
                    da1[c] += p[row + c] * da2[r];
                }
            }
            for r in 0..h {
                if t.a1[r] <= 0.0 || da1[r] == 0.0 {
                    continue;
                }
                g[lay.b1 + r] += da1[r];
                let row = lay.w1 + r * input;
                for (c, &x) in sample.state.iter().enumerate() {
                    g[row + c] += da1[r] * x;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        g.iter_mut().for_each(|x| *x *= scale);
        Ok((g, total_loss * scale))
    }

    /// Mean loss over a batch without computing gradients.
    pub fn batch_loss(&self, batch: &[TrainingSample]) -> Result<f64, NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let mut total = 0.0;
        for s in batch {
            total += loss(&self.forward(&s.state, &s.legal)?, s);
        }
        Ok(total / batch.len() as f64)
    }
}

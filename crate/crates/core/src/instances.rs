//! Weakly correlated knapsack instances shared by both players.

use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Half-width of the value band around each weight.
pub const CORRELATION_BAND: f64 = 0.1;
/// Weights below this are redrawn so value/weight ratios stay finite.
pub const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: {values} values vs {weights} weights")]
    LengthMismatch { values: usize, weights: usize },
    #[error("non-finite or out-of-range number at item {0}")]
    BadNumber(usize),
    #[error("duplicate values at items {0} and {1}")]
    DuplicateValues(usize, usize),
    #[error("items not in strictly descending value/weight order at item {0}")]
    NotSorted(usize),
    #[error("correlation band violated at item {0}")]
    BandViolated(usize),
    #[error("capacity {0} is negative or not finite")]
    BadCapacity(f64),
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Item pool and the per-player weight limit.
///
/// Items are always stored in strictly descending order of value/weight,
/// so index 0 is the item a greedy player would take first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    values: Vec<f64>,
    weights: Vec<f64>,
    capacity: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    n: usize,
    capacity: f64,
    seed: u64,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Instance {
    /// Build an instance from items already in ratio order. Checks the
    /// structural invariants (positive finite weights, non-negative values,
    /// distinct values, strictly descending ratio) but not the weakly
    /// correlated band, so hand-built test positions are allowed.
    pub fn new(
        values: Vec<f64>,
        weights: Vec<f64>,
        capacity: f64,
        seed: u64,
    ) -> Result<Self, InstanceError> {
        if values.len() != weights.len() {
            return Err(InstanceError::LengthMismatch {
                values: values.len(),
                weights: weights.len(),
            });
        }
        if values.is_empty() {
            return Err(InstanceError::InvalidConfig("n must be at least 1".into()));
        }
        if !capacity.is_finite() || capacity < 0.0 {
            return Err(InstanceError::BadCapacity(capacity));
        }
        for (i, (&v, &w)) in values.iter().zip(&weights).enumerate() {
            if !v.is_finite() || v < 0.0 || !w.is_finite() || w <= 0.0 {
                return Err(InstanceError::BadNumber(i));
            }
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        for pair in order.windows(2) {
            if values[pair[0]] == values[pair[1]] {
                let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                return Err(InstanceError::DuplicateValues(a, b));
            }
        }
        for i in 1..values.len() {
            if values[i - 1] / weights[i - 1] <= values[i] / weights[i] {
                return Err(InstanceError::NotSorted(i));
            }
        }
        Ok(Self { values, weights, capacity, seed })
    }

    /// Like [`Instance::new`] but sorts the items by descending ratio first.
    pub fn from_items(items: &[(f64, f64)], capacity: f64, seed: u64) -> Result<Self, InstanceError> {
        let mut items = items.to_vec();
        items.sort_by(|a, b| (b.0 / b.1).total_cmp(&(a.0 / a.1)));
        let (values, weights) = items.into_iter().unzip();
        Self::new(values, weights, capacity, seed)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ratio(&self, i: usize) -> f64 {
        self.values[i] / self.weights[i]
    }

    /// Check the generator's distributional constraints: weights in
    /// (0, 1], values in [0, 1] and within the band around their weight.
    pub fn check_weakly_correlated(&self) -> Result<(), InstanceError> {
        for (i, (&v, &w)) in self.values.iter().zip(&self.weights).enumerate() {
            if w > 1.0 || v > 1.0 {
                return Err(InstanceError::BadNumber(i));
            }
            let lo = (w - CORRELATION_BAND).max(0.0);
            let hi = (w + CORRELATION_BAND).min(1.0);
            if v < lo || v > hi {
                return Err(InstanceError::BandViolated(i));
            }
        }
        Ok(())
    }

    /// One-line JSON record. Floats are written in shortest round-trip form.
    pub fn to_record(&self) -> String {
        let rec = InstanceRecord {
            n: self.n(),
            capacity: self.capacity,
            seed: self.seed,
            values: self.values.clone(),
            weights: self.weights.clone(),
        };
        serde_json::to_string(&rec).expect("instance record serializes")
    }

    pub fn parse_record(line: &str) -> Result<Self, InstanceError> {
        let rec: InstanceRecord =
            serde_json::from_str(line.trim()).map_err(|e| InstanceError::Malformed(e.to_string()))?;
        if rec.values.len() != rec.n {
            return Err(InstanceError::Malformed(format!(
                "n = {} but {} values",
                rec.n,
                rec.values.len()
            )));
        }
        let inst = Self::new(rec.values, rec.weights, rec.capacity, rec.seed)?;
        inst.check_weakly_correlated()?;
        Ok(inst)
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, capacity = {}", self.n(), self.capacity)?;
        for i in 0..self.n() {
            writeln!(
                f,
                "{:>3}  value {:.4}  weight {:.4}  ratio {:.4}",
                i,
                self.values[i],
                self.weights[i],
                self.ratio(i)
            )?;
        }
        Ok(())
    }
}

/// Draw an `n`-item weakly correlated instance with capacity `n / 4`.
///
/// Weights are uniform on [0, 1) (redrawn below [`MIN_WEIGHT`]); each value
/// is uniform on `[max(0, w - 0.1), min(1, w + 0.1)]`. An item whose value or
/// ratio collides with an earlier item is redrawn on its own.
pub fn generate_weakly_correlated(n: usize, seed: u64) -> Result<Instance, InstanceError> {
    if n == 0 {
        return Err(InstanceError::InvalidConfig("n must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut items: Vec<(f64, f64)> = Vec::with_capacity(n);
    while items.len() < n {
        let w: f64 = rng.random();
        if w < MIN_WEIGHT {
            continue;
        }
        let lo = (w - CORRELATION_BAND).max(0.0);
        let hi = (w + CORRELATION_BAND).min(1.0);
        let v = lo + (hi - lo) * rng.random::<f64>();
        let clash = items.iter().any(|&(ov, ow)| ov == v || ov / ow == v / w);
        if clash || v <= 0.0 {
            continue;
        }
        items.push((v, w));
    }
    Instance::from_items(&items, n as f64 / 4.0, seed)
}

pub fn write_instances<W: Write>(mut out: W, insts: &[Instance]) -> std::io::Result<()> {
    for inst in insts {
        writeln!(out, "{}", inst.to_record())?;
    }
    Ok(())
}

/// Parse a newline-delimited instance file; blank lines are skipped.
pub fn read_instances<R: BufRead>(input: R) -> Result<Vec<Instance>, InstanceError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| InstanceError::Malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Instance::parse_record(&line)?);
    }
    Ok(out)
}

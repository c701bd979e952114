use std::collections::VecDeque;

use rand::Rng as _;

use crate::nn::TrainingSample;
use crate::rng::Rng;

/// Bounded FIFO of training positions; the oldest are dropped first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: VecDeque<TrainingSample>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { capacity, samples: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, s: TrainingSample) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(s);
    }

    pub fn extend(&mut self, it: impl IntoIterator<Item = TrainingSample>) {
        for s in it {
            self.push(s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainingSample> {
        self.samples.iter()
    }

    /// `size` positions drawn uniformly with replacement.
    pub fn sample(&self, size: usize, rng: &mut Rng) -> Vec<TrainingSample> {
        if self.samples.is_empty() {
            return Vec::new();
        }
        (0..size).map(|_| self.samples[rng.random_range(0..self.samples.len())].clone()).collect()
    }
}

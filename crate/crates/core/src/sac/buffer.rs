//! Fixed-capacity experience replay with uniform batch sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Ring buffer of transitions; pushing past capacity evicts the oldest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, data: Vec::with_capacity(capacity.min(4096)), write: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(t.reward >= 0.0, "covert-rate rewards are nonnegative");
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.write] = t;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform sample of `k` distinct indices (partial Fisher-Yates).
    pub fn sample_indices(&self, k: usize, min_size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.data.len() < min_size {
            return Err(Error::BufferNotReady { have: self.data.len(), need: min_size });
        }
        let n = self.data.len();
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }
}

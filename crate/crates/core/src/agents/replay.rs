//! Uniform experience replay.

use rand::Rng;

use crate::env::OBS_DIM;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub z: usize,
    pub action: usize,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    /// Regime hypothesis the bidder conditions on at the next slot.
    pub next_z: usize,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest transitions are overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Samples `n` transitions with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

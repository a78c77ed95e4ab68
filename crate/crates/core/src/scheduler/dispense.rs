//! Dispensing disciplines used when a worker asks for work.

use super::balancer::rotate_pick;

/// Plain round-robin over the queues that currently hold work.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    cursor: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next(&mut self, n: usize, has_work: impl Fn(usize) -> bool) -> Option<usize> {
        if n == 0 {
            return None;
        }
        let idx = rotate_pick(n, self.cursor, has_work)?;
        self.cursor = (idx + 1) % n;
        Some(idx)
    }
}

/// Weighted round-robin: queue `i` is served up to `weights[i]` times in a
/// row before the turn passes on. Queues without work are skipped and lose
/// the remainder of their turn.
#[derive(Clone, Debug)]
pub struct WeightedRoundRobin {
    weights: Vec<u32>,
    cursor: usize,
    served: u32,
}

impl WeightedRoundRobin {
    /// All weights must be positive.
    pub fn new(weights: Vec<u32>) -> Self {
        debug_assert!(weights.iter().all(|&w| w > 0));
        Self { weights, cursor: 0, served: 0 }
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn next(&mut self, has_work: impl Fn(usize) -> bool) -> Option<usize> {
        let n = self.weights.len();
        if !(0..n).any(&has_work) {
            return None;
        }
        loop {
            let i = self.cursor;
            if self.served < self.weights[i] && has_work(i) {
                self.served += 1;
                return Some(i);
            }
            self.cursor = (i + 1) % n;
            self.served = 0;
        }
    }
}

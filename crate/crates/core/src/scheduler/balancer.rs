//! Per-bank load balancer.
//!
//! A new transaction goes to an idle (empty) queue when one exists, picked
//! round-robin over the idle set. Otherwise every queue is scored by
//!
//! ```text
//! score_i = w_v * (1 - V_i) + w_d * (D_i / max_j D_j)
//! ```
//!
//! and the best score wins. The rate term is zero for all queues when no
//! queue processed anything in the last window, so selection falls back to
//! least-loaded. Normalising `D` by the bank maximum makes the decision
//! independent of the unit (and any positive scale) of the processing rates.

use serde::{Deserialize, Serialize};

use super::Bank;

/// Scores closer than this are treated as tied.
pub const TIE_EPSILON: f64 = 1e-9;

/// Balancer input for one queue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueView {
    pub backlog_bytes: u64,
    /// `V_i`, in `[0, 1]`.
    pub load_rate: f64,
    /// `D_i` from the last sample window, bytes per second.
    pub processing_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionReason {
    EmptyPreference,
    ScoredSelection,
    TieBreak,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentDecision {
    pub bank: Bank,
    pub queue_index: usize,
    pub reason: DecisionReason,
}

#[derive(Clone, Debug)]
pub struct Balancer {
    weight_load: f64,
    weight_rate: f64,
    empty_cursor: usize,
    tie_cursor: usize,
}

impl Balancer {
    pub fn new(weight_load: f64, weight_rate: f64) -> Self {
        Self::with_cursors(weight_load, weight_rate, 0, 0)
    }

    /// Starts the idle-queue and tie-break rotations at the given positions.
    pub fn with_cursors(weight_load: f64, weight_rate: f64, empty_cursor: usize, tie_cursor: usize) -> Self {
        Self { weight_load, weight_rate, empty_cursor, tie_cursor }
    }

    /// `(empty_cursor, tie_cursor)`.
    pub fn cursors(&self) -> (usize, usize) {
        (self.empty_cursor, self.tie_cursor)
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.weight_load, self.weight_rate)
    }

    pub fn scores(&self, queues: &[QueueView]) -> Vec<f64> {
        let max_rate = queues.iter().map(|q| q.processing_rate).fold(0.0_f64, f64::max);
        queues
            .iter()
            .map(|q| {
                let rate_term = if max_rate > 0.0 { q.processing_rate / max_rate } else { 0.0 };
                self.weight_load * (1.0 - q.load_rate) + self.weight_rate * rate_term
            })
            .collect()
    }

    /// Picks the queue for the next transaction of `bank`.
    ///
    /// Panics if `queues` is empty; a configured bank always has a queue.
    pub fn select(&mut self, bank: Bank, queues: &[QueueView]) -> AssignmentDecision {
        let n = queues.len();
        assert!(n > 0, "balancer needs at least one queue");

        if let Some(idx) = rotate_pick(n, self.empty_cursor, |i| queues[i].backlog_bytes == 0) {
            self.empty_cursor = (idx + 1) % n;
            return AssignmentDecision { bank, queue_index: idx, reason: DecisionReason::EmptyPreference };
        }

        let scores = self.scores(queues);
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied = |i: usize| scores[i] >= best - TIE_EPSILON;
        let tie_count = (0..n).filter(|&i| tied(i)).count();
        if tie_count == 1 {
            let idx = (0..n).find(|&i| tied(i)).expect("one queue holds the best score");
            return AssignmentDecision { bank, queue_index: idx, reason: DecisionReason::ScoredSelection };
        }

        let idx = rotate_pick(n, self.tie_cursor, tied).expect("tie set is non-empty");
        self.tie_cursor = (idx + 1) % n;
        AssignmentDecision { bank, queue_index: idx, reason: DecisionReason::TieBreak }
    }
}

/// First index at or after `cursor` (cyclically) satisfying `pred`.
pub(crate) fn rotate_pick(n: usize, cursor: usize, pred: impl Fn(usize) -> bool) -> Option<usize> {
    let start = cursor % n;
    (0..n).map(|k| (start + k) % n).find(|&i| pred(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(backlog: u64, v: f64, d: f64) -> QueueView {
        QueueView { backlog_bytes: backlog, load_rate: v, processing_rate: d }
    }

    #[test]
    fn idle_queue_wins() {
        let mut b = Balancer::new(0.5, 0.5);
        let d = b.select(Bank::Pq, &[view(0, 0.0, 0.0), view(500, 0.5, 10.0)]);
        assert_eq!(d.queue_index, 0);
        assert_eq!(d.reason, DecisionReason::EmptyPreference);
    }

    #[test]
    fn least_loaded_wins_with_equal_rates() {
        let mut b = Balancer::new(0.5, 0.5);
        let qs = [view(20, 0.2, 100.0), view(50, 0.5, 100.0)];
        let s = b.scores(&qs);
        assert!((s[0] - 0.9).abs() < 1e-12 && (s[1] - 0.75).abs() < 1e-12);
        let d = b.select(Bank::Wrr, &qs);
        assert_eq!((d.queue_index, d.reason), (0, DecisionReason::ScoredSelection));
    }

    #[test]
    fn fast_queue_wins() {
        let mut b = Balancer::new(0.5, 0.5);
        let qs = [view(20, 0.2, 50.0), view(50, 0.5, 500.0)];
        let s = b.scores(&qs);
        assert!((s[0] - 0.45).abs() < 1e-12 && (s[1] - 0.75).abs() < 1e-12);
        assert_eq!(b.select(Bank::Wrr, &qs).queue_index, 1);
    }

    #[test]
    fn ties_rotate() {
        let mut b = Balancer::new(0.5, 0.5);
        let qs = [view(30, 0.3, 100.0), view(30, 0.3, 100.0)];
        let first = b.select(Bank::Pq, &qs);
        let second = b.select(Bank::Pq, &qs);
        assert_eq!((first.queue_index, first.reason), (0, DecisionReason::TieBreak));
        assert_eq!((second.queue_index, second.reason), (1, DecisionReason::TieBreak));
    }

    #[test]
    fn all_idle_window_is_least_loaded() {
        let mut b = Balancer::new(0.5, 0.5);
        let qs = [view(90, 0.9, 0.0), view(10, 0.1, 0.0), view(40, 0.4, 0.0)];
        assert_eq!(b.select(Bank::Pq, &qs).queue_index, 1);
    }

    #[test]
    fn empty_set_rotation_cycles() {
        let mut b = Balancer::new(0.5, 0.5);
        let qs = vec![view(0, 0.0, 0.0); 4];
        let picks: Vec<_> = (0..8).map(|_| b.select(Bank::Wrr, &qs).queue_index).collect();
        assert_eq!(picks, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }
}

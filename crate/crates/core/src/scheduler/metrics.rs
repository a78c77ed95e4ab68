//! Scheduler counters and the JSON snapshot served at `/metrics`.

use serde::{Deserialize, Serialize};

use super::Bank;
use crate::time::Timestamp;

/// Latency aggregates in seconds. Percentiles use the nearest-rank method.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
}

impl LatencySummary {
    /// Summarises latencies given in nanoseconds. Sorts `samples` in place.
    pub fn from_nanos(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let sum: u128 = samples.iter().map(|&s| s as u128).sum();
        let secs = |ns: u64| ns as f64 / 1e9;
        Self {
            count: n as u64,
            mean_s: sum as f64 / n as f64 / 1e9,
            p50_s: secs(samples[nearest_rank(n, 50.0)]),
            p95_s: secs(samples[nearest_rank(n, 95.0)]),
            max_s: secs(samples[n - 1]),
        }
    }
}

/// Zero-based index of the `pct` percentile in a sorted sample of length `n`.
pub fn nearest_rank(n: usize, pct: f64) -> usize {
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    rank.clamp(1, n) - 1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub priority: u8,
    pub submitted: u64,
    pub completed: u64,
    pub rejected: u64,
    pub in_flight: u64,
    pub latency: LatencySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueMetrics {
    pub bank: Bank,
    pub index: usize,
    pub queued: u64,
    pub backlog_bytes: u64,
    pub capacity_bytes: u64,
    pub load_rate: f64,
    pub processing_rate: f64,
    pub processed_total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub submitted: u64,
    pub completed: u64,
    pub rejected: u64,
    /// Queued plus held by a worker.
    pub in_flight: u64,
    pub queued: u64,
    pub in_service: u64,
    pub submitted_bytes: u64,
    pub completed_bytes: u64,
    pub rejected_bytes: u64,
    pub in_service_bytes: u64,
    pub backlog_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub taken_at: Timestamp,
    pub classes: Vec<ClassMetrics>,
    pub queues: Vec<QueueMetrics>,
    pub totals: Totals,
}

impl MetricsSnapshot {
    /// Checks the counting and byte conservation laws, per class and in total.
    pub fn check_conservation(&self) -> Result<(), String> {
        let t = &self.totals;
        if t.submitted != t.completed + t.in_flight + t.rejected {
            return Err(format!(
                "submitted {} != completed {} + in_flight {} + rejected {}",
                t.submitted, t.completed, t.in_flight, t.rejected
            ));
        }
        if t.in_flight != t.queued + t.in_service {
            return Err(format!("in_flight {} != queued {} + in_service {}", t.in_flight, t.queued, t.in_service));
        }
        let expected_backlog = t
            .submitted_bytes
            .checked_sub(t.completed_bytes + t.in_service_bytes + t.rejected_bytes);
        if expected_backlog != Some(t.backlog_bytes) {
            return Err(format!(
                "backlog {} != submitted {} - completed {} - in service {} - rejected {}",
                t.backlog_bytes, t.submitted_bytes, t.completed_bytes, t.in_service_bytes, t.rejected_bytes
            ));
        }
        let queue_backlog: u64 = self.queues.iter().map(|q| q.backlog_bytes).sum();
        if queue_backlog != t.backlog_bytes {
            return Err(format!("queue backlog sum {queue_backlog} != total backlog {}", t.backlog_bytes));
        }
        for c in &self.classes {
            if c.submitted != c.completed + c.in_flight + c.rejected {
                return Err(format!("class {} violates submitted = completed + in_flight + rejected", c.priority));
            }
        }
        let class_sum: u64 = self.classes.iter().map(|c| c.submitted).sum();
        if class_sum != t.submitted {
            return Err(format!("class submissions {class_sum} != total {}", t.submitted));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_indices() {
        assert_eq!(nearest_rank(1, 95.0), 0);
        assert_eq!(nearest_rank(20, 95.0), 18);
        assert_eq!(nearest_rank(20, 50.0), 9);
        assert_eq!(nearest_rank(100, 95.0), 94);
    }

    #[test]
    fn summary_of_known_sample() {
        let mut s: Vec<u64> = (1..=100).rev().map(|i| i * 1_000_000).collect();
        let l = LatencySummary::from_nanos(&mut s);
        assert_eq!(l.count, 100);
        assert!((l.mean_s - 0.0505).abs() < 1e-12);
        assert!((l.p50_s - 0.050).abs() < 1e-12);
        assert!((l.p95_s - 0.095).abs() < 1e-12);
        assert!((l.max_s - 0.100).abs() < 1e-12);
    }

    #[test]
    fn empty_summary_is_zero() {
        assert_eq!(LatencySummary::from_nanos(&mut []), LatencySummary::default());
    }
}

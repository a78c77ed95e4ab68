use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::scheduler::Priority;
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arrival {
    Poisson { rate_per_sec: f64 },
    Fixed { interval_ms: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayloadDist {
    Fixed { bytes: u64 },
    Uniform { min: u64, max: u64 },
}

impl PayloadDist {
    pub fn mean(&self) -> f64 {
        match *self {
            PayloadDist::Fixed { bytes } => bytes as f64,
            PayloadDist::Uniform { min, max } => (min + max) as f64 / 2.0,
        }
    }
}

/// Worker `w` serves a transaction taken from queue `q` at
/// `worker_speeds[w] * queue_factors[q % len]` bytes per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub worker_speeds: Vec<f64>,
    #[serde(default)]
    pub queue_factors: Vec<f64>,
}

impl ServiceModel {
    pub fn rate(&self, worker: usize, queue: usize) -> f64 {
        let factor = if self.queue_factors.is_empty() {
            1.0
        } else {
            self.queue_factors[queue % self.queue_factors.len()]
        };
        self.worker_speeds[worker] * factor
    }

    /// Aggregate bytes per second with every worker busy and unit queue factors.
    pub fn capacity(&self) -> f64 {
        self.worker_speeds.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub txn_count: usize,
    pub arrival: Arrival,
    /// Relative weight of each priority 0..=9.
    pub priority_mix: Vec<f64>,
    pub payload: PayloadDist,
    pub service: ServiceModel,
}

/// Base worker speed of the standard scenario, bytes per second.
pub const STANDARD_BASE_SPEED: f64 = 100_000.0;

impl WorkloadSpec {
    /// The reference scenario: `pq_share` of the traffic spread evenly over
    /// priorities `0..=threshold`, the rest evenly over the others; three
    /// workers at 1x/2x/4x speed; payloads uniform in 256..=4096 bytes;
    /// Poisson arrivals sized so that offered load is `utilization` of the
    /// aggregate worker capacity.
    pub fn standard(seed: u64, txn_count: usize, utilization: f64, pq_share: f64, threshold: u8) -> Self {
        let threshold = threshold.min(Priority::MAX) as usize;
        let high = threshold + 1;
        let low = Priority::CLASSES - high;
        let priority_mix = (0..Priority::CLASSES)
            .map(|p| {
                if p <= threshold {
                    pq_share / high as f64
                } else if low > 0 {
                    (1.0 - pq_share) / low as f64
                } else {
                    0.0
                }
            })
            .collect();
        let payload = PayloadDist::Uniform { min: 256, max: 4096 };
        let service = ServiceModel {
            worker_speeds: [1.0, 2.0, 4.0].iter().map(|m| m * STANDARD_BASE_SPEED).collect(),
            queue_factors: Vec::new(),
        };
        let rate_per_sec = utilization * service.capacity() / payload.mean();
        Self { seed, txn_count, arrival: Arrival::Poisson { rate_per_sec }, priority_mix, payload, service }
    }

    /// Offered load relative to aggregate worker capacity.
    pub fn utilization(&self) -> f64 {
        let rate = match self.arrival {
            Arrival::Poisson { rate_per_sec } => rate_per_sec,
            Arrival::Fixed { interval_ms } => 1000.0 / interval_ms,
        };
        rate * self.payload.mean() / self.service.capacity()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        match self.arrival {
            Arrival::Poisson { rate_per_sec } if !(rate_per_sec.is_finite() && rate_per_sec > 0.0) => {
                return bad("arrival rate must be positive and finite")
            }
            Arrival::Fixed { interval_ms } if !(interval_ms.is_finite() && interval_ms > 0.0) => {
                return bad("arrival interval must be positive and finite")
            }
            _ => {}
        }
        if self.priority_mix.len() != Priority::CLASSES {
            return bad("priority_mix needs exactly 10 weights");
        }
        if self.priority_mix.iter().any(|w| !w.is_finite() || *w < 0.0) || self.priority_mix.iter().sum::<f64>() <= 0.0 {
            return bad("priority_mix weights must be non-negative with a positive sum");
        }
        match self.payload {
            PayloadDist::Fixed { .. } => {}
            PayloadDist::Uniform { min, max } if min > max => return bad("payload min exceeds max"),
            _ => {}
        }
        if self.service.worker_speeds.is_empty() {
            return bad("at least one worker is required");
        }
        if self.service.worker_speeds.iter().chain(&self.service.queue_factors).any(|s| !s.is_finite() || *s <= 0.0) {
            return bad("worker speeds and queue factors must be positive");
        }
        Ok(())
    }
}

/// One generated transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTxn {
    pub id: u64,
    pub priority: Priority,
    pub payload_size: u64,
    pub arrival: Timestamp,
}

pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<SimTxn>, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = WeightedIndex::new(&spec.priority_mix).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let gaps = match spec.arrival {
        Arrival::Poisson { rate_per_sec } => Some(Exp::new(rate_per_sec).map_err(|e| SimError::InvalidSpec(e.to_string()))?),
        Arrival::Fixed { .. } => None,
    };
    let mut now_ns: u64 = 0;
    let mut out = Vec::with_capacity(spec.txn_count);
    for id in 0..spec.txn_count as u64 {
        let gap_secs = match (&gaps, &spec.arrival) {
            (Some(exp), _) => exp.sample(&mut rng),
            (None, Arrival::Fixed { interval_ms }) => interval_ms / 1000.0,
            (None, Arrival::Poisson { .. }) => unreachable!(),
        };
        now_ns += (gap_secs * 1e9).round() as u64;
        let priority = Priority::new(classes.sample(&mut rng) as u8).expect("ten classes");
        let payload_size = match spec.payload {
            PayloadDist::Fixed { bytes } => bytes,
            PayloadDist::Uniform { min, max } => rng.random_range(min..=max),
        };
        out.push(SimTxn { id, priority, payload_size, arrival: Timestamp(now_ns) });
    }
    Ok(out)
}

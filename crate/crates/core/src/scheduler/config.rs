use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};

use super::{Priority, SchedError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub queues: usize,
    /// `M_c`, shared by every queue of the bank.
    pub capacity_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// `P_c`: priorities at or below this value go to the PQ bank.
    pub priority_threshold: u8,
    #[serde(deserialize_with = "pq_bank")]
    pub pq: BankConfig,
    #[serde(deserialize_with = "wrr_bank")]
    pub wrr: BankConfig,
    /// `ΔT`, the processing-rate sampling window.
    pub sample_period_ms: u64,
    pub weight_load: f64,
    pub weight_rate: f64,
    /// Dispensing weights of the WRR bank queues. Empty means all ones.
    pub wrr_weights: Vec<u32>,
}

/// A bank section with some keys left out takes the rest from that bank's defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialBank {
    queues: Option<usize>,
    capacity_bytes: Option<u64>,
}

fn fill_bank<'de, D: Deserializer<'de>>(d: D, default: BankConfig) -> Result<BankConfig, D::Error> {
    let p = PartialBank::deserialize(d)?;
    Ok(BankConfig {
        queues: p.queues.unwrap_or(default.queues),
        capacity_bytes: p.capacity_bytes.unwrap_or(default.capacity_bytes),
    })
}

fn pq_bank<'de, D: Deserializer<'de>>(d: D) -> Result<BankConfig, D::Error> {
    fill_bank(d, SchedulerConfig::default().pq)
}

fn wrr_bank<'de, D: Deserializer<'de>>(d: D) -> Result<BankConfig, D::Error> {
    fill_bank(d, SchedulerConfig::default().wrr)
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            priority_threshold: 3,
            pq: BankConfig { queues: 2, capacity_bytes: 1 << 20 },
            wrr: BankConfig { queues: 4, capacity_bytes: 1 << 20 },
            sample_period_ms: 1000,
            weight_load: 0.5,
            weight_rate: 0.5,
            wrr_weights: Vec::new(),
        }
    }
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl SchedulerConfig {
    pub fn threshold(&self) -> Priority {
        Priority(self.priority_threshold.min(Priority::MAX))
    }

    pub fn sample_period(&self) -> Duration {
        Duration::from_millis(self.sample_period_ms)
    }

    /// WRR weights with the empty default expanded.
    pub fn effective_wrr_weights(&self) -> Vec<u32> {
        if self.wrr_weights.is_empty() {
            vec![1; self.wrr.queues]
        } else {
            self.wrr_weights.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        let bad = |key: &str, reason: String| Err(SchedError::InvalidConfig { key: key.to_string(), reason });
        if self.priority_threshold > Priority::MAX {
            return bad("priority_threshold", format!("{} is outside 0..=9", self.priority_threshold));
        }
        for (name, bank) in [("pq", &self.pq), ("wrr", &self.wrr)] {
            if bank.queues == 0 {
                return bad(&format!("{name}.queues"), "a bank needs at least one queue".into());
            }
            if bank.capacity_bytes == 0 {
                return bad(&format!("{name}.capacity_bytes"), "capacity must be positive".into());
            }
        }
        if self.sample_period_ms == 0 {
            return bad("sample_period_ms", "sample period must be positive".into());
        }
        for (key, w) in [("weight_load", self.weight_load), ("weight_rate", self.weight_rate)] {
            if !(0.0..=1.0).contains(&w) {
                return bad(key, format!("{w} is outside [0, 1]"));
            }
        }
        if (self.weight_load + self.weight_rate - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return bad(
                "weight_rate",
                format!("weight_load + weight_rate must equal 1, got {}", self.weight_load + self.weight_rate),
            );
        }
        if !self.wrr_weights.is_empty() {
            if self.wrr_weights.len() != self.wrr.queues {
                return bad(
                    "wrr_weights",
                    format!("{} weights for {} WRR queues", self.wrr_weights.len(), self.wrr.queues),
                );
            }
            if self.wrr_weights.contains(&0) {
                return bad("wrr_weights", "weights must be positive".into());
            }
        }
        Ok(())
    }
}

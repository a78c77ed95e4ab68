use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::rates::{load_rate, processing_rate};
use super::{Bank, SchedError, Transaction};
use crate::time::Timestamp;

/// One processing queue: a FIFO with a byte budget.
#[derive(Clone, Debug)]
pub struct QueueState {
    pub bank: Bank,
    pub index: usize,
    backlog_bytes: u64,
    capacity_bytes: u64,
    fifo: VecDeque<Transaction>,
}

impl QueueState {
    pub fn new(bank: Bank, index: usize, capacity_bytes: u64) -> Self {
        Self { bank, index, backlog_bytes: 0, capacity_bytes, fifo: VecDeque::new() }
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.backlog_bytes
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn fits(&self, bytes: u64) -> bool {
        self.backlog_bytes.checked_add(bytes).is_some_and(|b| b <= self.capacity_bytes)
    }

    /// Live `V_i`.
    pub fn load_rate(&self) -> f64 {
        load_rate(self.backlog_bytes, self.capacity_bytes).expect("backlog kept within capacity")
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.fifo.iter()
    }

    pub(super) fn push(&mut self, txn: Transaction) -> Result<(), SchedError> {
        let size = txn.payload_size();
        if !self.fits(size) {
            return Err(SchedError::QueueFull {
                bank: self.bank,
                queue_index: self.index,
                payload_size: size,
                free_bytes: self.capacity_bytes - self.backlog_bytes,
            });
        }
        self.backlog_bytes += size;
        self.fifo.push_back(txn);
        Ok(())
    }

    pub(super) fn pop(&mut self) -> Option<Transaction> {
        let txn = self.fifo.pop_front()?;
        self.backlog_bytes -= txn.payload_size();
        Some(txn)
    }
}

/// Counters behind the processing rate of one queue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub processed_total: u64,
    /// `M_tp`.
    pub processed_at_prev_sample: u64,
    /// `t_p`.
    pub prev_sample_time: Timestamp,
    /// `t_c` of the most recent sample.
    pub last_sample_time: Timestamp,
    /// `D_i`, bytes per second over the last window.
    pub processing_rate: f64,
    /// `V_i` as of the last sample.
    pub load_rate: f64,
}

impl QueueStats {
    pub fn new(start: Timestamp) -> Self {
        Self {
            processed_total: 0,
            processed_at_prev_sample: 0,
            prev_sample_time: start,
            last_sample_time: start,
            processing_rate: 0.0,
            load_rate: 0.0,
        }
    }

    /// The stats this queue would have after a sample at `now`.
    pub fn sampled(&self, backlog_bytes: u64, capacity_bytes: u64, now: Timestamp) -> Result<Self, SchedError> {
        let rate = processing_rate(self.processed_total, self.processed_at_prev_sample, now, self.prev_sample_time)?;
        Ok(Self {
            processed_total: self.processed_total,
            processed_at_prev_sample: self.processed_total,
            prev_sample_time: now,
            last_sample_time: now,
            processing_rate: rate,
            load_rate: load_rate(backlog_bytes, capacity_bytes)?,
        })
    }
}

//! Two-level differentiated-services transaction scheduler.
//!
//! Level one classifies each transaction by priority into the strict-priority
//! (PQ) bank or the weighted round-robin (WRR) bank. Level two is a
//! [`Balancer`] per bank that spreads work over the bank's parallel queues by
//! load rate and processing rate. Workers draw from the PQ bank whenever it
//! holds anything and from the WRR bank otherwise.
//!
//! [`Scheduler`] is a plain single-threaded state machine that never reads a
//! clock. [`SharedScheduler`] wraps it for concurrent producers and workers.

mod balancer;
mod config;
mod dispense;
mod metrics;
mod queue;
mod rates;
mod shared;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::time::Duration;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use balancer::{AssignmentDecision, Balancer, DecisionReason, QueueView, TIE_EPSILON};
pub use config::{BankConfig, SchedulerConfig};
pub use dispense::{RoundRobin, WeightedRoundRobin};
pub use metrics::{nearest_rank, ClassMetrics, LatencySummary, MetricsSnapshot, QueueMetrics, Totals};
pub use queue::{QueueState, QueueStats};
pub use rates::{classify, load_rate, processing_rate};
pub use shared::SharedScheduler;

use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedError {
    #[error("invalid scheduler config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
    #[error("priority {0} is outside 0..=9")]
    InvalidPriority(u8),
    #[error("backlog {backlog_bytes} exceeds capacity {capacity_bytes}")]
    CapacityViolated { backlog_bytes: u64, capacity_bytes: u64 },
    #[error("sample window is empty or reversed (now {now}, previous {prev})")]
    InvalidSampleWindow { now: Timestamp, prev: Timestamp },
    #[error("processed counter went backwards ({processed_prev} -> {processed_now})")]
    MonotonicityViolated { processed_now: u64, processed_prev: u64 },
    #[error("{bank} queue {queue_index} is full: {payload_size} bytes offered, {free_bytes} free")]
    QueueFull { bank: Bank, queue_index: usize, payload_size: u64, free_bytes: u64 },
    #[error("unknown or already completed transaction {0}")]
    UnknownTransaction(TxnId),
    #[error("transaction {0} is already in the scheduler")]
    DuplicateTransaction(TxnId),
}

/// Transaction priority `P_i`; 0 is the most urgent, 9 the least.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Priority(u8);

impl Priority {
    pub const MAX: u8 = 9;
    pub const CLASSES: usize = 10;

    pub fn new(value: u8) -> Result<Self, SchedError> {
        if value <= Self::MAX {
            Ok(Self(value))
        } else {
            Err(SchedError::InvalidPriority(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Priority> {
        (0..=Self::MAX).map(Priority)
    }
}

impl TryFrom<u8> for Priority {
    type Error = SchedError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Priority::new(v)
    }
}

impl From<Priority> for u8 {
    fn from(p: Priority) -> u8 {
        p.0
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bank {
    Pq,
    Wrr,
}

impl fmt::Display for Bank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bank::Pq => "pq",
            Bank::Wrr => "wrr",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u64);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "txn-{}", self.0)
    }
}

pub type WorkerId = usize;

/// A unit of schedulable work. The payload is opaque; its length is what
/// the queues account for.
#[derive(Clone, Debug, PartialEq)]
pub struct Transaction {
    pub id: TxnId,
    pub priority: Priority,
    pub payload: Bytes,
    pub submitted_at: Timestamp,
    /// Token the bus uses to route a reply back to its caller.
    pub reply_route: Option<u64>,
}

impl Transaction {
    pub fn new(id: TxnId, priority: Priority, payload: impl Into<Bytes>, submitted_at: Timestamp) -> Self {
        Self { id, priority, payload: payload.into(), submitted_at, reply_route: None }
    }

    pub fn with_reply_route(mut self, route: u64) -> Self {
        self.reply_route = Some(route);
        self
    }

    pub fn payload_size(&self) -> u64 {
        self.payload.len() as u64
    }
}

/// A transaction handed to a worker together with the queue it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispatched {
    pub txn: Transaction,
    pub bank: Bank,
    pub queue_index: usize,
}

/// What [`Scheduler::complete`] closed out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Completion {
    pub id: TxnId,
    pub bank: Bank,
    pub queue_index: usize,
    pub priority: Priority,
    pub payload_size: u64,
    pub latency: Duration,
}

struct BankQueues {
    queues: Vec<QueueState>,
    stats: Vec<QueueStats>,
    balancer: Balancer,
}

impl BankQueues {
    fn new(bank: Bank, cfg: &BankConfig, weights: (f64, f64), start: Timestamp) -> Self {
        Self {
            queues: (0..cfg.queues).map(|i| QueueState::new(bank, i, cfg.capacity_bytes)).collect(),
            stats: vec![QueueStats::new(start); cfg.queues],
            balancer: Balancer::new(weights.0, weights.1),
        }
    }

    fn views(&self) -> Vec<QueueView> {
        self.queues
            .iter()
            .zip(&self.stats)
            .map(|(q, s)| QueueView {
                backlog_bytes: q.backlog_bytes(),
                load_rate: q.load_rate(),
                processing_rate: s.processing_rate,
            })
            .collect()
    }
}

struct InService {
    bank: Bank,
    queue_index: usize,
    priority: Priority,
    payload_size: u64,
    submitted_at: Timestamp,
}

#[derive(Default, Clone)]
struct ClassCounters {
    submitted: u64,
    completed: u64,
    rejected: u64,
    latencies_ns: Vec<u64>,
}

#[derive(Default, Clone, Copy)]
struct ByteCounters {
    submitted: u64,
    completed: u64,
    rejected: u64,
}

pub struct Scheduler {
    config: SchedulerConfig,
    threshold: Priority,
    pq: BankQueues,
    wrr: BankQueues,
    pq_dispense: RoundRobin,
    wrr_dispense: WeightedRoundRobin,
    in_service: HashMap<TxnId, InService>,
    live_ids: HashSet<TxnId>,
    classes: Vec<ClassCounters>,
    bytes: ByteCounters,
}

impl Scheduler {
    /// Builds a scheduler whose first sample window opens at `start`.
    pub fn new(config: SchedulerConfig, start: Timestamp) -> Result<Self, SchedError> {
        config.validate()?;
        let weights = (config.weight_load, config.weight_rate);
        Ok(Self {
            threshold: config.threshold(),
            pq: BankQueues::new(Bank::Pq, &config.pq, weights, start),
            wrr: BankQueues::new(Bank::Wrr, &config.wrr, weights, start),
            pq_dispense: RoundRobin::new(),
            wrr_dispense: WeightedRoundRobin::new(config.effective_wrr_weights()),
            in_service: HashMap::new(),
            live_ids: HashSet::new(),
            classes: vec![ClassCounters::default(); Priority::CLASSES],
            bytes: ByteCounters::default(),
            config,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    fn bank(&self, bank: Bank) -> &BankQueues {
        match bank {
            Bank::Pq => &self.pq,
            Bank::Wrr => &self.wrr,
        }
    }

    fn bank_mut(&mut self, bank: Bank) -> &mut BankQueues {
        match bank {
            Bank::Pq => &mut self.pq,
            Bank::Wrr => &mut self.wrr,
        }
    }

    pub fn classify(&self, priority: Priority) -> Bank {
        classify(priority, self.threshold)
    }

    pub fn queues(&self, bank: Bank) -> &[QueueState] {
        &self.bank(bank).queues
    }

    pub fn stats(&self, bank: Bank) -> &[QueueStats] {
        &self.bank(bank).stats
    }

    pub fn balancer(&self, bank: Bank) -> &Balancer {
        &self.bank(bank).balancer
    }

    pub fn queue_views(&self, bank: Bank) -> Vec<QueueView> {
        self.bank(bank).views()
    }

    /// Picks the queue the next transaction of `bank` would join.
    pub fn select_queue(&mut self, bank: Bank) -> AssignmentDecision {
        let b = self.bank_mut(bank);
        let views = b.views();
        b.balancer.select(bank, &views)
    }

    /// Classifies `txn`, balances it onto a queue of its bank and enqueues it.
    ///
    /// A transaction that does not fit the chosen queue is rejected with
    /// [`SchedError::QueueFull`] and counted as submitted and rejected.
    pub fn submit(&mut self, txn: Transaction) -> Result<AssignmentDecision, SchedError> {
        if self.live_ids.contains(&txn.id) {
            return Err(SchedError::DuplicateTransaction(txn.id));
        }
        let class = txn.priority.value() as usize;
        let size = txn.payload_size();
        let id = txn.id;
        self.classes[class].submitted += 1;
        self.bytes.submitted += size;

        let decision = self.select_queue(self.classify(txn.priority));
        let queue = &mut self.bank_mut(decision.bank).queues[decision.queue_index];
        match queue.push(txn) {
            Ok(()) => {
                self.live_ids.insert(id);
                Ok(decision)
            }
            Err(e) => {
                self.classes[class].rejected += 1;
                self.bytes.rejected += size;
                Err(e)
            }
        }
    }

    /// Hands the next transaction to `worker_id`.
    pub fn next_work(&mut self, worker_id: WorkerId) -> Option<Transaction> {
        self.dispatch_next(worker_id).map(|d| d.txn)
    }

    /// Like [`Scheduler::next_work`] but also reports the source queue.
    ///
    /// Any nonempty PQ queue is served first (round-robin across PQ queues);
    /// the WRR bank is only consulted when the whole PQ bank is empty.
    pub fn dispatch_next(&mut self, _worker_id: WorkerId) -> Option<Dispatched> {
        let pq = &self.pq.queues;
        let (bank, idx) = if let Some(i) = self.pq_dispense.next(pq.len(), |i| !pq[i].is_empty()) {
            (Bank::Pq, i)
        } else {
            let wrr = &self.wrr.queues;
            (Bank::Wrr, self.wrr_dispense.next(|i| !wrr[i].is_empty())?)
        };
        let txn = self.bank_mut(bank).queues[idx].pop().expect("dispenser picked a nonempty queue");
        self.in_service.insert(
            txn.id,
            InService {
                bank,
                queue_index: idx,
                priority: txn.priority,
                payload_size: txn.payload_size(),
                submitted_at: txn.submitted_at,
            },
        );
        Some(Dispatched { txn, bank, queue_index: idx })
    }

    /// Records that a worker finished `id` at `finished_at`.
    pub fn complete(&mut self, id: TxnId, _worker_id: WorkerId, finished_at: Timestamp) -> Result<Completion, SchedError> {
        let done = self.in_service.remove(&id).ok_or(SchedError::UnknownTransaction(id))?;
        self.live_ids.remove(&id);
        self.bank_mut(done.bank).stats[done.queue_index].processed_total += done.payload_size;
        let latency = finished_at.since(done.submitted_at);
        let class = &mut self.classes[done.priority.value() as usize];
        class.completed += 1;
        class.latencies_ns.push(latency.as_nanos() as u64);
        self.bytes.completed += done.payload_size;
        Ok(Completion {
            id,
            bank: done.bank,
            queue_index: done.queue_index,
            priority: done.priority,
            payload_size: done.payload_size,
            latency,
        })
    }

    /// Recomputes `V_i` and `D_i` for every queue of `bank` and opens a new
    /// sample window at `now`. Either every queue is updated or none is.
    pub fn sample_stats(&mut self, bank: Bank, now: Timestamp) -> Result<Vec<QueueStats>, SchedError> {
        let b = self.bank_mut(bank);
        let fresh = b
            .queues
            .iter()
            .zip(&b.stats)
            .map(|(q, s)| s.sampled(q.backlog_bytes(), q.capacity_bytes(), now))
            .collect::<Result<Vec<_>, _>>()?;
        b.stats.clone_from(&fresh);
        Ok(fresh)
    }

    pub fn sample_all(&mut self, now: Timestamp) -> Result<(), SchedError> {
        self.sample_stats(Bank::Pq, now)?;
        self.sample_stats(Bank::Wrr, now)?;
        Ok(())
    }

    pub fn in_service_count(&self) -> usize {
        self.in_service.len()
    }

    pub fn queued_count(&self) -> usize {
        self.pq.queues.iter().chain(&self.wrr.queues).map(QueueState::len).sum()
    }

    /// Transactions accepted and not yet completed.
    pub fn in_flight(&self) -> usize {
        self.queued_count() + self.in_service_count()
    }

    pub fn snapshot_metrics(&self, now: Timestamp) -> MetricsSnapshot {
        let mut in_flight_by_class = [0u64; Priority::CLASSES];
        let mut in_service_bytes = 0;
        for s in self.in_service.values() {
            in_flight_by_class[s.priority.value() as usize] += 1;
            in_service_bytes += s.payload_size;
        }
        let mut queues = Vec::new();
        for bank in [Bank::Pq, Bank::Wrr] {
            let b = self.bank(bank);
            for (q, s) in b.queues.iter().zip(&b.stats) {
                for t in q.iter() {
                    in_flight_by_class[t.priority.value() as usize] += 1;
                }
                queues.push(QueueMetrics {
                    bank,
                    index: q.index,
                    queued: q.len() as u64,
                    backlog_bytes: q.backlog_bytes(),
                    capacity_bytes: q.capacity_bytes(),
                    load_rate: q.load_rate(),
                    processing_rate: s.processing_rate,
                    processed_total: s.processed_total,
                });
            }
        }
        let classes: Vec<ClassMetrics> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| ClassMetrics {
                priority: i as u8,
                submitted: c.submitted,
                completed: c.completed,
                rejected: c.rejected,
                in_flight: in_flight_by_class[i],
                latency: LatencySummary::from_nanos(&mut c.latencies_ns.clone()),
            })
            .collect();
        let queued = self.queued_count() as u64;
        let in_service = self.in_service_count() as u64;
        let totals = Totals {
            submitted: classes.iter().map(|c| c.submitted).sum(),
            completed: classes.iter().map(|c| c.completed).sum(),
            rejected: classes.iter().map(|c| c.rejected).sum(),
            in_flight: queued + in_service,
            queued,
            in_service,
            submitted_bytes: self.bytes.submitted,
            completed_bytes: self.bytes.completed,
            rejected_bytes: self.bytes.rejected,
            in_service_bytes,
            backlog_bytes: queues.iter().map(|q| q.backlog_bytes).sum(),
        };
        MetricsSnapshot { taken_at: now, classes, queues, totals }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn(id: u64, prio: u8, size: usize) -> Transaction {
        Transaction::new(TxnId(id), Priority::new(prio).unwrap(), vec![0u8; size], Timestamp(id))
    }

    fn small_config() -> SchedulerConfig {
        SchedulerConfig {
            pq: BankConfig { queues: 1, capacity_bytes: 1000 },
            wrr: BankConfig { queues: 2, capacity_bytes: 1000 },
            ..Default::default()
        }
    }

    #[test]
    fn high_priority_goes_to_pq() {
        let mut s = Scheduler::new(SchedulerConfig::default(), Timestamp::ZERO).unwrap();
        let d = s.submit(txn(1, 1, 100)).unwrap();
        assert_eq!(d.bank, Bank::Pq);
        assert_eq!(d.reason, DecisionReason::EmptyPreference);
        assert_eq!(s.queues(Bank::Pq)[d.queue_index].backlog_bytes(), 100);
    }

    #[test]
    fn oversized_payload_is_rejected() {
        let mut s = Scheduler::new(small_config(), Timestamp::ZERO).unwrap();
        assert!(matches!(s.submit(txn(1, 8, 1001)), Err(SchedError::QueueFull { .. })));
        let m = s.snapshot_metrics(Timestamp::ZERO);
        assert_eq!((m.totals.submitted, m.totals.rejected), (1, 1));
        m.check_conservation().unwrap();
    }

    #[test]
    fn duplicate_id_refused() {
        let mut s = Scheduler::new(small_config(), Timestamp::ZERO).unwrap();
        s.submit(txn(1, 8, 10)).unwrap();
        assert_eq!(s.submit(txn(1, 8, 10)), Err(SchedError::DuplicateTransaction(TxnId(1))));
    }

    #[test]
    fn pq_before_wrr() {
        let mut s = Scheduler::new(small_config(), Timestamp::ZERO).unwrap();
        s.submit(txn(1, 9, 10)).unwrap();
        s.submit(txn(2, 0, 10)).unwrap();
        assert_eq!(s.next_work(0).unwrap().id, TxnId(2));
        assert_eq!(s.next_work(0).unwrap().id, TxnId(1));
        assert_eq!(s.next_work(0), None);
    }

    #[test]
    fn wrr_bank_follows_weights() {
        let cfg = SchedulerConfig { wrr_weights: vec![2, 1], ..small_config() };
        let mut s = Scheduler::new(cfg, Timestamp::ZERO).unwrap();
        // Two per queue; the balancer alternates between the empty queues.
        for id in 0..4 {
            s.submit(txn(id, 9, 10)).unwrap();
        }
        let order: Vec<_> = (0..3).map(|w| s.dispatch_next(w).unwrap().queue_index).collect();
        assert_eq!(order, vec![0, 0, 1]);
    }

    #[test]
    fn complete_updates_counters_once() {
        let mut s = Scheduler::new(small_config(), Timestamp::ZERO).unwrap();
        s.submit(txn(7, 2, 64)).unwrap();
        let t = s.next_work(3).unwrap();
        let c = s.complete(t.id, 3, Timestamp(1_000_007)).unwrap();
        assert_eq!(c.latency, Duration::from_millis(1));
        assert_eq!(s.stats(Bank::Pq)[0].processed_total, 64);
        assert_eq!(s.complete(t.id, 3, Timestamp(2_000_000)), Err(SchedError::UnknownTransaction(TxnId(7))));
        let m = s.snapshot_metrics(Timestamp(2_000_000));
        assert_eq!((m.totals.submitted, m.totals.completed, m.totals.in_flight), (1, 1, 0));
        assert_eq!(m.classes[2].latency.count, 1);
    }

    #[test]
    fn sampling_rolls_window() {
        let mut s = Scheduler::new(small_config(), Timestamp::ZERO).unwrap();
        s.submit(txn(1, 9, 600)).unwrap();
        let t = s.next_work(0).unwrap();
        s.complete(t.id, 0, Timestamp::from_secs_f64(0.5)).unwrap();
        let stats = s.sample_stats(Bank::Wrr, Timestamp::from_secs_f64(2.0)).unwrap();
        assert_eq!(stats[0].processing_rate, 300.0);
        assert_eq!(stats[1].processing_rate, 0.0);
        let stats = s.sample_stats(Bank::Wrr, Timestamp::from_secs_f64(3.0)).unwrap();
        assert_eq!(stats[0].processing_rate, 0.0);
        assert_eq!(stats[0].processed_at_prev_sample, 600);
        assert!(matches!(
            s.sample_stats(Bank::Wrr, Timestamp::from_secs_f64(3.0)),
            Err(SchedError::InvalidSampleWindow { .. })
        ));
    }

    #[test]
    fn fresh_snapshot_is_zero() {
        let s = Scheduler::new(SchedulerConfig::default(), Timestamp::ZERO).unwrap();
        let m = s.snapshot_metrics(Timestamp::ZERO);
        assert_eq!(m.totals, Totals::default());
        assert_eq!(m.classes.len(), 10);
        assert_eq!(m.queues.len(), 6);
    }
}

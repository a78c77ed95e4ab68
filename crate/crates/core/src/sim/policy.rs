//! Scheduling policies the harness can run: the hybrid scheduler and three
//! single-discipline baselines.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scheduler::{
    Bank, Priority, RoundRobin, SchedError, Scheduler, SchedulerConfig, Transaction, TxnId, WeightedRoundRobin,
    WorkerId,
};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Round-robin assignment and round-robin service, priority-blind.
    Rr,
    /// Priority-class queues served by weighted round-robin.
    Wrr,
    /// One queue per priority, served in strict priority order.
    Pq,
    /// The two-level differentiated-services scheduler.
    Hybrid,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Rr, PolicyKind::Wrr, PolicyKind::Pq, PolicyKind::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Rr => "rr",
            PolicyKind::Wrr => "wrr",
            PolicyKind::Pq => "pq",
            PolicyKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == lower)
            .ok_or_else(|| format!("unknown policy `{s}` (expected rr, wrr, pq or hybrid)"))
    }
}

/// Common surface of every policy. Queue indices are global across banks.
pub trait Discipline {
    fn queue_count(&self) -> usize;
    fn queue_label(&self, index: usize) -> String;
    fn submit(&mut self, txn: Transaction) -> Result<usize, SchedError>;
    fn next_work(&mut self, worker: WorkerId) -> Option<(Transaction, usize)>;
    fn complete(&mut self, id: TxnId, worker: WorkerId, now: Timestamp) -> Result<(), SchedError>;
    /// Periodic statistics refresh.
    fn tick(&mut self, now: Timestamp) -> Result<(), SchedError>;
}

pub fn build(kind: PolicyKind, config: &SchedulerConfig) -> Result<Box<dyn Discipline>, SchedError> {
    config.validate()?;
    Ok(match kind {
        PolicyKind::Hybrid => Box::new(Hybrid::new(config)?),
        other => Box::new(Baseline::new(other, config)),
    })
}

struct Hybrid {
    inner: Scheduler,
    pq_len: usize,
}

impl Hybrid {
    fn new(config: &SchedulerConfig) -> Result<Self, SchedError> {
        Ok(Self { inner: Scheduler::new(config.clone(), Timestamp::ZERO)?, pq_len: config.pq.queues })
    }

    fn global(&self, bank: Bank, index: usize) -> usize {
        match bank {
            Bank::Pq => index,
            Bank::Wrr => self.pq_len + index,
        }
    }
}

impl Discipline for Hybrid {
    fn queue_count(&self) -> usize {
        self.pq_len + self.inner.queues(Bank::Wrr).len()
    }

    fn queue_label(&self, index: usize) -> String {
        if index < self.pq_len {
            format!("pq{index}")
        } else {
            format!("wrr{}", index - self.pq_len)
        }
    }

    fn submit(&mut self, txn: Transaction) -> Result<usize, SchedError> {
        let d = self.inner.submit(txn)?;
        Ok(self.global(d.bank, d.queue_index))
    }

    fn next_work(&mut self, worker: WorkerId) -> Option<(Transaction, usize)> {
        let d = self.inner.dispatch_next(worker)?;
        let q = self.global(d.bank, d.queue_index);
        Some((d.txn, q))
    }

    fn complete(&mut self, id: TxnId, worker: WorkerId, now: Timestamp) -> Result<(), SchedError> {
        self.inner.complete(id, worker, now).map(|_| ())
    }

    fn tick(&mut self, now: Timestamp) -> Result<(), SchedError> {
        self.inner.sample_all(now)
    }
}

enum Service {
    RoundRobin(RoundRobin),
    Weighted(WeightedRoundRobin),
    Strict,
}

struct Baseline {
    kind: PolicyKind,
    queues: Vec<VecDeque<Transaction>>,
    backlog: Vec<u64>,
    capacity: u64,
    assign_cursor: usize,
    service: Service,
    in_service: HashMap<TxnId, usize>,
}

impl Baseline {
    fn new(kind: PolicyKind, config: &SchedulerConfig) -> Self {
        let n = match kind {
            PolicyKind::Pq => Priority::CLASSES,
            _ => config.pq.queues + config.wrr.queues,
        };
        let service = match kind {
            PolicyKind::Rr => Service::RoundRobin(RoundRobin::new()),
            PolicyKind::Wrr => {
                let base = config.effective_wrr_weights();
                Service::Weighted(WeightedRoundRobin::new((0..n).map(|i| base[i % base.len()]).collect()))
            }
            _ => Service::Strict,
        };
        Self {
            kind,
            queues: vec![VecDeque::new(); n],
            backlog: vec![0; n],
            capacity: config.wrr.capacity_bytes,
            assign_cursor: 0,
            service,
            in_service: HashMap::new(),
        }
    }

    fn assign(&mut self, priority: Priority) -> usize {
        let n = self.queues.len();
        match self.kind {
            PolicyKind::Rr => {
                let q = self.assign_cursor;
                self.assign_cursor = (q + 1) % n;
                q
            }
            // More urgent classes land on lower-numbered queues.
            PolicyKind::Wrr => priority.value() as usize * n / Priority::CLASSES,
            _ => priority.value() as usize,
        }
    }
}

impl Discipline for Baseline {
    fn queue_count(&self) -> usize {
        self.queues.len()
    }

    fn queue_label(&self, index: usize) -> String {
        match self.kind {
            PolicyKind::Pq => format!("p{index}"),
            _ => format!("q{index}"),
        }
    }

    fn submit(&mut self, txn: Transaction) -> Result<usize, SchedError> {
        let q = self.assign(txn.priority);
        let size = txn.payload_size();
        if self.backlog[q] + size > self.capacity {
            return Err(SchedError::QueueFull {
                bank: Bank::Wrr,
                queue_index: q,
                payload_size: size,
                free_bytes: self.capacity - self.backlog[q],
            });
        }
        self.backlog[q] += size;
        self.queues[q].push_back(txn);
        Ok(q)
    }

    fn next_work(&mut self, _worker: WorkerId) -> Option<(Transaction, usize)> {
        let n = self.queues.len();
        let queues = &self.queues;
        let has_work = |i: usize| !queues[i].is_empty();
        let q = match &mut self.service {
            Service::RoundRobin(rr) => rr.next(n, has_work)?,
            Service::Weighted(w) => w.next(has_work)?,
            Service::Strict => (0..n).find(|&i| has_work(i))?,
        };
        let txn = self.queues[q].pop_front().expect("picked a nonempty queue");
        self.backlog[q] -= txn.payload_size();
        self.in_service.insert(txn.id, q);
        Some((txn, q))
    }

    fn complete(&mut self, id: TxnId, _worker: WorkerId, _now: Timestamp) -> Result<(), SchedError> {
        self.in_service.remove(&id).map(|_| ()).ok_or(SchedError::UnknownTransaction(id))
    }

    fn tick(&mut self, _now: Timestamp) -> Result<(), SchedError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn(id: u64, p: u8) -> Transaction {
        Transaction::new(TxnId(id), Priority::new(p).unwrap(), vec![0u8; 10], Timestamp::ZERO)
    }

    #[test]
    fn parse_policy_names() {
        assert_eq!("HYBRID".parse::<PolicyKind>(), Ok(PolicyKind::Hybrid));
        assert_eq!("rr".parse::<PolicyKind>(), Ok(PolicyKind::Rr));
        assert!("bogus".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn strict_baseline_serves_lowest_value_first() {
        let mut d = build(PolicyKind::Pq, &SchedulerConfig::default()).unwrap();
        for (id, p) in [(1, 7), (2, 2), (3, 9), (4, 0)] {
            d.submit(txn(id, p)).unwrap();
        }
        let order: Vec<_> = (0..4).map(|_| d.next_work(0).unwrap().0.priority.value()).collect();
        assert_eq!(order, vec![0, 2, 7, 9]);
    }

    #[test]
    fn rr_baseline_spreads_and_rotates() {
        let mut d = build(PolicyKind::Rr, &SchedulerConfig::default()).unwrap();
        let qs: Vec<_> = (0..7).map(|i| d.submit(txn(i, 0)).unwrap()).collect();
        assert_eq!(qs, vec![0, 1, 2, 3, 4, 5, 0]);
        let served: Vec<_> = (0..3).map(|_| d.next_work(0).unwrap().1).collect();
        assert_eq!(served, vec![0, 1, 2]);
    }

    #[test]
    fn hybrid_labels_are_global() {
        let mut d = build(PolicyKind::Hybrid, &SchedulerConfig::default()).unwrap();
        assert_eq!(d.queue_count(), 6);
        assert_eq!(d.submit(txn(1, 9)).unwrap(), 2);
        assert_eq!(d.queue_label(2), "wrr0");
        assert_eq!(d.queue_label(1), "pq1");
    }
}

//! Deterministic discrete-event simulation of scheduling policies.
//!
//! A run replays a generated workload against one [`PolicyKind`] on a
//! virtual clock. Workers form a shared pool; whenever a worker is idle and
//! the policy has work, the fastest idle worker takes it. Every arrival,
//! rejection, service start and completion is appended to a trace whose
//! SHA-256 digest identifies the run.

mod policy;
mod report;
mod workload;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use policy::{build as build_policy, Discipline, PolicyKind};
pub use report::{ClassReport, QueueReport, SimReport, SummaryRow, CSV_HEADER};
pub use workload::{
    generate_workload, Arrival, PayloadDist, ServiceModel, SimTxn, WorkloadSpec, STANDARD_BASE_SPEED,
};

use crate::scheduler::{Priority, SchedError, SchedulerConfig, Transaction, TxnId};
use crate::time::{Timestamp, VirtualClock, Clock};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scheduler(#[from] SchedError),
    #[error("compare needs at least two policies")]
    TooFewPolicies,
    #[error("report output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Arrive { at: Timestamp, txn: u64, priority: Priority, queue: usize },
    Reject { at: Timestamp, txn: u64, priority: Priority },
    Start { at: Timestamp, txn: u64, priority: Priority, queue: usize, worker: usize },
    Finish { at: Timestamp, txn: u64, worker: usize },
    Sample { at: Timestamp },
}

impl TraceEvent {
    pub fn at(&self) -> Timestamp {
        match *self {
            TraceEvent::Arrive { at, .. }
            | TraceEvent::Reject { at, .. }
            | TraceEvent::Start { at, .. }
            | TraceEvent::Finish { at, .. }
            | TraceEvent::Sample { at } => at,
        }
    }

    fn digest_into(&self, h: &mut Sha256) {
        let mut put = |tag: u8, words: &[u64]| {
            h.update([tag]);
            for w in words {
                h.update(w.to_le_bytes());
            }
        };
        match *self {
            TraceEvent::Arrive { at, txn, priority, queue } => put(1, &[at.0, txn, priority.value() as u64, queue as u64]),
            TraceEvent::Reject { at, txn, priority } => put(2, &[at.0, txn, priority.value() as u64]),
            TraceEvent::Start { at, txn, priority, queue, worker } => {
                put(3, &[at.0, txn, priority.value() as u64, queue as u64, worker as u64])
            }
            TraceEvent::Finish { at, txn, worker } => put(4, &[at.0, txn, worker as u64]),
            TraceEvent::Sample { at } => put(5, &[at.0]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival(usize),
    Completion(usize),
    Sample,
}

struct Busy {
    txn: u64,
    priority: Priority,
    queue: usize,
    submitted: Timestamp,
}

const ZERO_PAYLOAD: [u8; 65536] = [0; 65536];

fn payload_of(size: u64) -> Bytes {
    match usize::try_from(size) {
        Ok(n) if n <= ZERO_PAYLOAD.len() => Bytes::from_static(&ZERO_PAYLOAD[..n]),
        _ => Bytes::from(vec![0u8; size as usize]),
    }
}

/// Simulates `spec` under `policy` and returns the report.
pub fn run(spec: &WorkloadSpec, policy: PolicyKind, config: &SchedulerConfig) -> Result<SimReport, SimError> {
    run_traced(spec, policy, config).map(|(r, _)| r)
}

/// Like [`run`] but also returns the full event trace.
pub fn run_traced(
    spec: &WorkloadSpec,
    policy: PolicyKind,
    config: &SchedulerConfig,
) -> Result<(SimReport, Vec<TraceEvent>), SimError> {
    let txns = generate_workload(spec)?;
    let mut disc = build_policy(policy, config)?;
    let clock = VirtualClock::new(Timestamp::ZERO);
    let workers = spec.service.worker_speeds.len();
    let sample_period = config.sample_period().as_nanos() as u64;

    // Fastest first; ties by index.
    let mut worker_order: Vec<usize> = (0..workers).collect();
    worker_order.sort_by(|&a, &b| spec.service.worker_speeds[b].total_cmp(&spec.service.worker_speeds[a]).then(a.cmp(&b)));

    let mut heap: BinaryHeap<Reverse<(Timestamp, u64, Event)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<_>, at: Timestamp, ev: Event| {
        heap.push(Reverse((at, seq, ev)));
        seq += 1;
    };
    for (i, t) in txns.iter().enumerate() {
        push(&mut heap, t.arrival, Event::Arrival(i));
    }
    if !txns.is_empty() {
        push(&mut heap, Timestamp(sample_period), Event::Sample);
    }

    let mut busy: Vec<Option<Busy>> = (0..workers).map(|_| None).collect();
    let mut trace = Vec::with_capacity(txns.len() * 3 + 64);
    let mut builder = report::Builder::new(policy, spec, config, disc.queue_count());
    let mut arrivals_left = txns.len();
    let mut in_flight = 0usize;

    while let Some(Reverse((at, _, ev))) = heap.pop() {
        clock.advance_to(at);
        let now = clock.now();
        match ev {
            Event::Arrival(i) => {
                arrivals_left -= 1;
                let t = &txns[i];
                let txn = Transaction::new(TxnId(t.id), t.priority, payload_of(t.payload_size), t.arrival);
                match disc.submit(txn) {
                    Ok(queue) => {
                        in_flight += 1;
                        trace.push(TraceEvent::Arrive { at: now, txn: t.id, priority: t.priority, queue });
                    }
                    Err(SchedError::QueueFull { .. }) => {
                        builder.reject(t.priority);
                        trace.push(TraceEvent::Reject { at: now, txn: t.id, priority: t.priority });
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Event::Completion(w) => {
                let b = busy[w].take().expect("completion for a busy worker");
                disc.complete(TxnId(b.txn), w, now)?;
                in_flight -= 1;
                builder.complete(b.priority, b.queue, now.since(b.submitted), now);
                trace.push(TraceEvent::Finish { at: now, txn: b.txn, worker: w });
            }
            Event::Sample => {
                disc.tick(now)?;
                trace.push(TraceEvent::Sample { at: now });
                if arrivals_left > 0 || in_flight > 0 {
                    push(&mut heap, now.saturating_add(config.sample_period()), Event::Sample);
                }
                continue;
            }
        }
        // Work conservation: fill every idle worker while work remains.
        for &w in &worker_order {
            if busy[w].is_some() {
                continue;
            }
            let Some((txn, queue)) = disc.next_work(w) else { break };
            let rate = spec.service.rate(w, queue);
            let service_ns = ((txn.payload_size() as f64 / rate) * 1e9).ceil().max(1.0) as u64;
            trace.push(TraceEvent::Start { at: now, txn: txn.id.0, priority: txn.priority, queue, worker: w });
            builder.bytes(queue, txn.payload_size());
            busy[w] = Some(Busy { txn: txn.id.0, priority: txn.priority, queue, submitted: txn.submitted_at });
            push(&mut heap, Timestamp(now.0 + service_ns), Event::Completion(w));
        }
    }

    let mut hasher = Sha256::new();
    for e in &trace {
        e.digest_into(&mut hasher);
    }
    let trace_hash = hex::encode(hasher.finalize());
    let labels = (0..disc.queue_count()).map(|q| disc.queue_label(q)).collect();
    Ok((builder.finish(trace_hash, labels), trace))
}

/// Runs every policy on the same workload and writes one JSON report per
/// policy plus `summary.csv` and `summary.json` into `output_dir`.
pub fn compare(
    spec: &WorkloadSpec,
    policies: &[PolicyKind],
    config: &SchedulerConfig,
    output_dir: &Path,
) -> Result<Vec<SimReport>, SimError> {
    if policies.len() < 2 {
        return Err(SimError::TooFewPolicies);
    }
    // Independent runs; no shared state.
    let reports = std::thread::scope(|s| {
        let handles: Vec<_> = policies.iter().map(|&p| s.spawn(move || run(spec, p, config))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    report::write_all(&reports, output_dir)?;
    Ok(reports)
}

/// Writes per-run JSON reports, `summary.csv` and `summary.json`.
pub fn write_reports(reports: &[SimReport], output_dir: &Path) -> Result<(), SimError> {
    report::write_all(reports, output_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::BankConfig;

    fn one_queue_config() -> SchedulerConfig {
        SchedulerConfig {
            pq: BankConfig { queues: 1, capacity_bytes: 10_000 },
            wrr: BankConfig { queues: 1, capacity_bytes: 10_000 },
            ..Default::default()
        }
    }

    #[test]
    fn single_transaction_service_time() {
        let spec = WorkloadSpec {
            seed: 1,
            txn_count: 1,
            arrival: Arrival::Fixed { interval_ms: 1000.0 },
            priority_mix: vec![1.0; 10],
            payload: PayloadDist::Fixed { bytes: 200 },
            service: ServiceModel { worker_speeds: vec![100.0], queue_factors: vec![] },
        };
        let (report, trace) = run_traced(&spec, PolicyKind::Hybrid, &one_queue_config()).unwrap();
        let start = trace.iter().find_map(|e| matches!(e, TraceEvent::Start { .. }).then(|| e.at())).unwrap();
        let finish = trace.iter().find_map(|e| matches!(e, TraceEvent::Finish { .. }).then(|| e.at())).unwrap();
        assert_eq!(finish.since(start).as_secs_f64(), 2.0);
        let total: u64 = report.classes.iter().map(|c| c.count).sum();
        assert_eq!(total, 1);
    }

    #[test]
    fn identical_inputs_identical_hash() {
        let spec = WorkloadSpec::standard(42, 800, 0.9, 0.2, 3);
        let cfg = SchedulerConfig::default();
        for p in PolicyKind::ALL {
            assert_eq!(run(&spec, p, &cfg).unwrap().trace_hash, run(&spec, p, &cfg).unwrap().trace_hash);
        }
        let a = run(&spec, PolicyKind::Rr, &cfg).unwrap().trace_hash;
        let b = run(&spec, PolicyKind::Hybrid, &cfg).unwrap().trace_hash;
        assert_ne!(a, b);
    }

    #[test]
    fn compare_needs_two_policies() {
        let dir = tempfile::tempdir().unwrap();
        let spec = WorkloadSpec::standard(1, 10, 0.5, 0.2, 3);
        assert!(matches!(
            compare(&spec, &[PolicyKind::Rr], &SchedulerConfig::default(), dir.path()),
            Err(SimError::TooFewPolicies)
        ));
    }
}

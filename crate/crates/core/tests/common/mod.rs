//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidbus_core::scheduler::{
    classify, AssignmentDecision, Bank, BankConfig, DecisionReason, Priority, QueueState, QueueView, SchedError, Scheduler,
    SchedulerConfig, Transaction, TxnId,
};
use vidbus_core::time::Timestamp;

/// Enumerates every queue and computes the balancer decision from scratch.
/// Returns the decision and the cursors after it.
pub fn brute_force_select(
    bank: Bank,
    views: &[QueueView],
    weight_load: f64,
    weight_rate: f64,
    empty_cursor: usize,
    tie_cursor: usize,
) -> (AssignmentDecision, usize, usize) {
    let n = views.len();
    let distance = |i: usize, from: usize| (i + n - from % n) % n;

    let empties: Vec<usize> = (0..n).filter(|&i| views[i].backlog_bytes == 0).collect();
    if !empties.is_empty() {
        let pick = *empties.iter().min_by_key(|&&i| distance(i, empty_cursor)).unwrap();
        let d = AssignmentDecision { bank, queue_index: pick, reason: DecisionReason::EmptyPreference };
        return (d, (pick + 1) % n, tie_cursor);
    }

    let mut max_rate = 0.0f64;
    for v in views {
        if v.processing_rate > max_rate {
            max_rate = v.processing_rate;
        }
    }
    let mut scores = Vec::new();
    for v in views {
        let rate_term = if max_rate > 0.0 { v.processing_rate / max_rate } else { 0.0 };
        scores.push(weight_load * (1.0 - v.load_rate) + weight_rate * rate_term);
    }
    let mut best = f64::NEG_INFINITY;
    for &s in &scores {
        if s > best {
            best = s;
        }
    }
    let tied: Vec<usize> = (0..n).filter(|&i| scores[i] >= best - 1e-9).collect();
    if tied.len() == 1 {
        let d = AssignmentDecision { bank, queue_index: tied[0], reason: DecisionReason::ScoredSelection };
        return (d, empty_cursor, tie_cursor);
    }
    let pick = *tied.iter().min_by_key(|&&i| distance(i, tie_cursor)).unwrap();
    let d = AssignmentDecision { bank, queue_index: pick, reason: DecisionReason::TieBreak };
    (d, empty_cursor, (pick + 1) % n)
}

/// Model state rebuilt purely from the operations the audit performs.
#[derive(Default)]
struct Replay {
    fifo: BTreeMap<(Bank, usize), VecDeque<(TxnId, u64)>>,
    in_service: HashMap<TxnId, (u8, u64)>,
    class_submitted: [u64; 10],
    class_completed: [u64; 10],
    class_rejected: [u64; 10],
    submitted_bytes: u64,
    completed_bytes: u64,
    rejected_bytes: u64,
}

#[derive(Debug, Default)]
pub struct TraceAudit {
    pub events: usize,
    pub violations: Vec<String>,
    pub completed: u64,
    pub rejected: u64,
}

/// Drives a scheduler with `events` random submit / dispatch / complete /
/// sample operations and checks after each one: empty-queue preference,
/// FIFO order within a queue, strict PQ-over-WRR dispensing, and the
/// counting and byte conservation laws against an independent replay.
pub fn audit_random_trace(seed: u64, events: usize) -> TraceAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SchedulerConfig {
        pq: BankConfig { queues: 3, capacity_bytes: 20_000 },
        wrr: BankConfig { queues: 4, capacity_bytes: 20_000 },
        wrr_weights: vec![3, 2, 1, 1],
        ..Default::default()
    };
    let mut s = Scheduler::new(config, Timestamp::ZERO).unwrap();
    let threshold = s.config().threshold();
    let mut model = Replay::default();
    let mut audit = TraceAudit { events, ..Default::default() };
    let mut now = 0u64;
    let mut next_id = 0u64;

    for step in 0..events {
        let mut fail = |what: String| audit.violations.push(format!("step {step}: {what}"));
        now += rng.random_range(0..1_000_000);
        match rng.random_range(0..10) {
            0..=4 => {
                let prio = Priority::new(rng.random_range(0..10)).unwrap();
                let size = rng.random_range(0..3000u64);
                next_id += 1;
                let bank = classify(prio, threshold);
                let had_empty = s.queues(bank).iter().any(QueueState::is_empty);
                let txn = Transaction::new(TxnId(next_id), prio, vec![0u8; size as usize], Timestamp(now));
                model.class_submitted[prio.value() as usize] += 1;
                model.submitted_bytes += size;
                match s.submit(txn) {
                    Ok(d) => {
                        if had_empty && d.reason != DecisionReason::EmptyPreference {
                            fail(format!("empty queue available but {:?} chosen", d.reason));
                        }
                        if d.bank != bank {
                            fail(format!("priority {prio} placed in {:?}", d.bank));
                        }
                        model.fifo.entry((d.bank, d.queue_index)).or_default().push_back((TxnId(next_id), size));
                    }
                    Err(SchedError::QueueFull { .. }) => {
                        model.class_rejected[prio.value() as usize] += 1;
                        model.rejected_bytes += size;
                    }
                    Err(e) => fail(format!("unexpected error {e}")),
                }
            }
            5..=7 => {
                let pq_waiting = model.fifo.iter().any(|((b, _), q)| *b == Bank::Pq && !q.is_empty());
                match s.dispatch_next(0) {
                    Some(d) => {
                        if pq_waiting && d.bank != Bank::Pq {
                            fail("WRR dispensed while PQ work waited".into());
                        }
                        let expected = model.fifo.get_mut(&(d.bank, d.queue_index)).and_then(VecDeque::pop_front);
                        if expected.map(|e| e.0) != Some(d.txn.id) {
                            fail(format!("FIFO broken in {:?}[{}]", d.bank, d.queue_index));
                        }
                        model.in_service.insert(d.txn.id, (d.txn.priority.value(), d.txn.payload_size()));
                    }
                    None => {
                        if model.fifo.values().any(|q| !q.is_empty()) {
                            fail("nothing dispensed while work was queued".into());
                        }
                    }
                }
            }
            8 => {
                if let Some(&id) = model.in_service.keys().min() {
                    let (p, size) = model.in_service.remove(&id).unwrap();
                    if let Err(e) = s.complete(id, 0, Timestamp(now)) {
                        fail(format!("completion refused: {e}"));
                    }
                    model.class_completed[p as usize] += 1;
                    model.completed_bytes += size;
                }
            }
            _ => {
                now += 1;
                if let Err(e) = s.sample_all(Timestamp(now)) {
                    fail(format!("sampling failed: {e}"));
                }
            }
        }

        let snap = s.snapshot_metrics(Timestamp(now));
        if let Err(e) = snap.check_conservation() {
            fail(e);
        }
        for c in &snap.classes {
            let p = c.priority as usize;
            if (c.submitted, c.completed, c.rejected)
                != (model.class_submitted[p], model.class_completed[p], model.class_rejected[p])
            {
                fail(format!("class {p} counters differ from replay"));
            }
        }
        let queued: u64 = model.fifo.values().map(|q| q.len() as u64).sum();
        let backlog: u64 = model.fifo.values().flat_map(|q| q.iter().map(|e| e.1)).sum();
        let t = &snap.totals;
        if t.queued != queued || t.backlog_bytes != backlog || t.in_service != model.in_service.len() as u64 {
            fail("queue totals differ from replay".into());
        }
        if (t.submitted_bytes, t.completed_bytes, t.rejected_bytes)
            != (model.submitted_bytes, model.completed_bytes, model.rejected_bytes)
        {
            fail("byte totals differ from replay".into());
        }
    }
    audit.completed = model.class_completed.iter().sum();
    audit.rejected = model.class_rejected.iter().sum();
    audit
}

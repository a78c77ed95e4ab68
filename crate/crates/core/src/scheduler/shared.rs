use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};

use super::{AssignmentDecision, Completion, Dispatched, MetricsSnapshot, SchedError, Scheduler, Transaction, TxnId, WorkerId};
use crate::time::Timestamp;

/// Thread-safe handle to a [`Scheduler`]. Every operation takes the single
/// state lock, so operations are linearizable.
#[derive(Clone)]
pub struct SharedScheduler {
    inner: Arc<Inner>,
}

struct Inner {
    state: Mutex<State>,
    work_ready: Condvar,
}

struct State {
    scheduler: Scheduler,
    closed: bool,
}

impl SharedScheduler {
    pub fn new(scheduler: Scheduler) -> Self {
        Self {
            inner: Arc::new(Inner {
                state: Mutex::new(State { scheduler, closed: false }),
                work_ready: Condvar::new(),
            }),
        }
    }

    pub fn submit(&self, txn: Transaction) -> Result<AssignmentDecision, SchedError> {
        let decision = self.inner.state.lock().scheduler.submit(txn)?;
        self.inner.work_ready.notify_one();
        Ok(decision)
    }

    pub fn next_work(&self, worker_id: WorkerId) -> Option<Transaction> {
        self.inner.state.lock().scheduler.next_work(worker_id)
    }

    /// Waits up to `timeout` for work. Returns `None` on timeout, or at once
    /// when the scheduler is closed and drained.
    pub fn next_work_blocking(&self, worker_id: WorkerId, timeout: Duration) -> Option<Dispatched> {
        let mut state = self.inner.state.lock();
        loop {
            if let Some(d) = state.scheduler.dispatch_next(worker_id) {
                return Some(d);
            }
            if state.closed {
                return None;
            }
            if self.inner.work_ready.wait_for(&mut state, timeout).timed_out() {
                return state.scheduler.dispatch_next(worker_id);
            }
        }
    }

    pub fn complete(&self, id: TxnId, worker_id: WorkerId, finished_at: Timestamp) -> Result<Completion, SchedError> {
        let done = self.inner.state.lock().scheduler.complete(id, worker_id, finished_at);
        // Drain waiters watch for in-flight reaching zero.
        self.inner.work_ready.notify_all();
        done
    }

    pub fn sample_all(&self, now: Timestamp) -> Result<(), SchedError> {
        self.inner.state.lock().scheduler.sample_all(now)
    }

    pub fn snapshot_metrics(&self, now: Timestamp) -> MetricsSnapshot {
        self.inner.state.lock().scheduler.snapshot_metrics(now)
    }

    pub fn in_flight(&self) -> usize {
        self.inner.state.lock().scheduler.in_flight()
    }

    /// Runs `f` with exclusive access to the scheduler.
    pub fn with<R>(&self, f: impl FnOnce(&mut Scheduler) -> R) -> R {
        f(&mut self.inner.state.lock().scheduler)
    }

    /// Wakes every waiting worker; they exit once the queues are empty.
    pub fn close(&self) {
        self.inner.state.lock().closed = true;
        self.inner.work_ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.state.lock().closed
    }

    /// Blocks until nothing is queued or in service, or `timeout` elapses.
    /// Returns whether the scheduler drained.
    pub fn wait_drained(&self, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        let mut state = self.inner.state.lock();
        while state.scheduler.in_flight() > 0 {
            if self.inner.work_ready.wait_until(&mut state, deadline).timed_out() {
                return state.scheduler.in_flight() == 0;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{Priority, SchedulerConfig};
    use std::thread;

    #[test]
    fn workers_drain_concurrent_producers() {
        let shared = SharedScheduler::new(Scheduler::new(SchedulerConfig::default(), Timestamp::ZERO).unwrap());
        let producers: Vec<_> = (0..4u64)
            .map(|p| {
                let s = shared.clone();
                thread::spawn(move || {
                    for i in 0..250u64 {
                        let id = TxnId(p * 1000 + i);
                        let prio = Priority::new((i % 10) as u8).unwrap();
                        s.submit(Transaction::new(id, prio, vec![1u8; 16], Timestamp::ZERO)).unwrap();
                    }
                })
            })
            .collect();
        let workers: Vec<_> = (0..3)
            .map(|w| {
                let s = shared.clone();
                thread::spawn(move || {
                    let mut done = 0;
                    while let Some(d) = s.next_work_blocking(w, Duration::from_millis(50)) {
                        s.complete(d.txn.id, w, Timestamp(1)).unwrap();
                        done += 1;
                    }
                    done
                })
            })
            .collect();
        for p in producers {
            p.join().unwrap();
        }
        assert!(shared.wait_drained(Duration::from_secs(10)));
        shared.close();
        let total: usize = workers.into_iter().map(|w| w.join().unwrap()).sum();
        assert_eq!(total, 1000);
        let m = shared.snapshot_metrics(Timestamp(2));
        assert_eq!(m.totals.completed, 1000);
        m.check_conservation().unwrap();
    }
}

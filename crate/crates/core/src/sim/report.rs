use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PolicyKind, SimError, WorkloadSpec};
use crate::scheduler::{LatencySummary, Priority, SchedulerConfig};
use crate::time::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub priority: u8,
    /// Completed transactions.
    pub count: u64,
    pub rejected: u64,
    pub latency: LatencySummary,
    /// Completions per simulated second.
    pub throughput_tps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueReport {
    pub index: usize,
    pub label: String,
    pub processed_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: PolicyKind,
    pub seed: u64,
    pub txn_count: usize,
    pub offered_utilization: f64,
    /// Priorities at or below this are the PQ class.
    pub priority_threshold: u8,
    pub makespan_s: f64,
    pub completed: u64,
    pub rejected: u64,
    pub classes: Vec<ClassReport>,
    pub pq_class: LatencySummary,
    pub wrr_class: LatencySummary,
    pub queues: Vec<QueueReport>,
    pub trace_hash: String,
}

pub(super) struct Builder {
    policy: PolicyKind,
    seed: u64,
    txn_count: usize,
    utilization: f64,
    threshold: u8,
    latencies: Vec<Vec<u64>>,
    rejected: Vec<u64>,
    processed: Vec<u64>,
    last_completion: Timestamp,
}

impl Builder {
    pub(super) fn new(policy: PolicyKind, spec: &WorkloadSpec, config: &SchedulerConfig, queues: usize) -> Self {
        Self {
            policy,
            seed: spec.seed,
            txn_count: spec.txn_count,
            utilization: spec.utilization(),
            threshold: config.priority_threshold,
            latencies: vec![Vec::new(); Priority::CLASSES],
            rejected: vec![0; Priority::CLASSES],
            processed: vec![0; queues],
            last_completion: Timestamp::ZERO,
        }
    }

    pub(super) fn reject(&mut self, p: Priority) {
        self.rejected[p.value() as usize] += 1;
    }

    pub(super) fn complete(&mut self, p: Priority, _queue: usize, latency: Duration, at: Timestamp) {
        self.latencies[p.value() as usize].push(latency.as_nanos() as u64);
        self.last_completion = self.last_completion.max(at);
    }

    pub(super) fn bytes(&mut self, queue: usize, bytes: u64) {
        self.processed[queue] += bytes;
    }

    pub(super) fn finish(mut self, trace_hash: String, labels: Vec<String>) -> SimReport {
        let makespan_s = self.last_completion.as_secs_f64();
        let split = self.threshold as usize + 1;
        let mut pq: Vec<u64> = self.latencies[..split.min(Priority::CLASSES)].concat();
        let mut wrr: Vec<u64> = self.latencies[split.min(Priority::CLASSES)..].concat();
        let classes: Vec<ClassReport> = self
            .latencies
            .iter_mut()
            .enumerate()
            .map(|(p, lat)| {
                let count = lat.len() as u64;
                ClassReport {
                    priority: p as u8,
                    count,
                    rejected: self.rejected[p],
                    latency: LatencySummary::from_nanos(lat),
                    throughput_tps: if makespan_s > 0.0 { count as f64 / makespan_s } else { 0.0 },
                }
            })
            .collect();
        SimReport {
            policy: self.policy,
            seed: self.seed,
            txn_count: self.txn_count,
            offered_utilization: self.utilization,
            priority_threshold: self.threshold,
            makespan_s,
            completed: classes.iter().map(|c| c.count).sum(),
            rejected: self.rejected.iter().sum(),
            classes,
            pq_class: LatencySummary::from_nanos(&mut pq),
            wrr_class: LatencySummary::from_nanos(&mut wrr),
            queues: labels
                .into_iter()
                .zip(&self.processed)
                .enumerate()
                .map(|(index, (label, &processed_bytes))| QueueReport { index, label, processed_bytes })
                .collect(),
            trace_hash,
        }
    }
}

/// Column order of `summary.csv`.
pub const CSV_HEADER: [&str; 11] = [
    "run",
    "policy",
    "priority",
    "completed",
    "rejected",
    "mean_latency_s",
    "p50_latency_s",
    "p95_latency_s",
    "max_latency_s",
    "throughput_tps",
    "trace_hash",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: usize,
    pub policy: PolicyKind,
    pub priority: u8,
    pub completed: u64,
    pub rejected: u64,
    pub mean_latency_s: f64,
    pub p50_latency_s: f64,
    pub p95_latency_s: f64,
    pub max_latency_s: f64,
    pub throughput_tps: f64,
    pub trace_hash: String,
}

impl SimReport {
    pub fn rows(&self, run: usize) -> Vec<SummaryRow> {
        self.classes
            .iter()
            .map(|c| SummaryRow {
                run,
                policy: self.policy,
                priority: c.priority,
                completed: c.count,
                rejected: c.rejected,
                mean_latency_s: c.latency.mean_s,
                p50_latency_s: c.latency.p50_s,
                p95_latency_s: c.latency.p95_s,
                max_latency_s: c.latency.max_s,
                throughput_tps: c.throughput_tps,
                trace_hash: self.trace_hash.clone(),
            })
            .collect()
    }
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    run: usize,
    policy: PolicyKind,
    trace_hash: &'a str,
    completed: u64,
    rejected: u64,
    pq_class: &'a LatencySummary,
    wrr_class: &'a LatencySummary,
}

pub(super) fn write_all(reports: &[SimReport], dir: &Path) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    for (i, r) in reports.iter().enumerate() {
        let json = serde_json::to_vec_pretty(r).expect("report serializes");
        fs::write(dir.join(format!("{i:02}-{}.json", r.policy)), json)?;
    }
    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_io)?;
    for (i, r) in reports.iter().enumerate() {
        for row in r.rows(i) {
            w.serialize(row).map_err(csv_io)?;
        }
    }
    w.flush()?;
    let entries: Vec<_> = reports
        .iter()
        .enumerate()
        .map(|(run, r)| SummaryEntry {
            run,
            policy: r.policy,
            trace_hash: &r.trace_hash,
            completed: r.completed,
            rejected: r.rejected,
            pq_class: &r.pq_class,
            wrr_class: &r.wrr_class,
        })
        .collect();
    fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&entries).expect("summary serializes"))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

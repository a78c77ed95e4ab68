use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};
use vidbus_core::scheduler::{LatencySummary, SchedulerConfig};
use vidbus_core::sim::{self, PolicyKind, SimReport, WorkloadSpec};

use crate::{CliError, Exit};

#[derive(Clone, Debug)]
pub struct SimulateArgs {
    pub policies: Vec<PolicyKind>,
    pub seed: u64,
    pub txns: usize,
    pub utilization: f64,
    pub pq_share: f64,
    pub scheduler: SchedulerConfig,
    pub report_dir: PathBuf,
}

#[derive(Serialize)]
struct RunLine<'a> {
    policy: PolicyKind,
    trace_hash: &'a str,
    completed: u64,
    rejected: u64,
    makespan_s: f64,
    pq_class: &'a LatencySummary,
    wrr_class: &'a LatencySummary,
}

#[derive(Serialize)]
struct Summary<'a> {
    digest: String,
    report_dir: String,
    runs: Vec<RunLine<'a>>,
}

/// A single run's digest is its trace hash; several runs hash the
/// `policy:trace_hash` lines in run order.
pub fn digest(reports: &[SimReport]) -> String {
    if let [only] = reports {
        return only.trace_hash.clone();
    }
    let mut h = Sha256::new();
    for r in reports {
        h.update(format!("{}:{}\n", r.policy, r.trace_hash));
    }
    hex::encode(h.finalize())
}

pub fn parse_policies(s: &str) -> Result<Vec<PolicyKind>, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(PolicyKind::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse::<PolicyKind>().map_err(|e| e.to_string())).collect()
}

/// `W` sets the WRR bank size; `P,W` sets both banks.
pub fn parse_queues(s: &str) -> Result<(Option<usize>, usize), String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("{t:?} is not a queue count"));
    match s.split_once(',') {
        Some((p, w)) => Ok((Some(num(p)?), num(w)?)),
        None => Ok((None, num(s)?)),
    }
}

fn validate(args: &SimulateArgs) -> Result<(), CliError> {
    let usage = |m: &str| Err(CliError::new(Exit::Usage, m.to_string()));
    if args.policies.is_empty() {
        return usage("--policy: at least one policy is required");
    }
    if args.txns == 0 {
        return usage("--txns: must be at least 1");
    }
    if !(args.utilization.is_finite() && args.utilization > 0.0 && args.utilization <= 10.0) {
        return usage("--util: must be in (0, 10]");
    }
    if !(0.0..=1.0).contains(&args.pq_share) {
        return usage("--pq-share: must be in [0, 1]");
    }
    args.scheduler.validate().map_err(|e| CliError::new(Exit::Usage, e.to_string()))
}

/// Runs the simulations, writes the reports and returns them.
pub fn simulate(args: &SimulateArgs) -> Result<Vec<SimReport>, CliError> {
    validate(args)?;
    let spec = WorkloadSpec::standard(args.seed, args.txns, args.utilization, args.pq_share, args.scheduler.priority_threshold);
    let fail = |e: sim::SimError| match e {
        sim::SimError::InvalidSpec(_) => CliError::new(Exit::Usage, e.to_string()),
        other => CliError::new(Exit::Failure, other.to_string()),
    };
    if args.policies.len() == 1 {
        let report = sim::run(&spec, args.policies[0], &args.scheduler).map_err(fail)?;
        let reports = vec![report];
        sim::write_reports(&reports, &args.report_dir).map_err(fail)?;
        Ok(reports)
    } else {
        sim::compare(&spec, &args.policies, &args.scheduler, &args.report_dir).map_err(fail)
    }
}

pub fn render(reports: &[SimReport], args: &SimulateArgs, json: bool) -> String {
    if json {
        let summary = Summary {
            digest: digest(reports),
            report_dir: args.report_dir.display().to_string(),
            runs: reports
                .iter()
                .map(|r| RunLine {
                    policy: r.policy,
                    trace_hash: &r.trace_hash,
                    completed: r.completed,
                    rejected: r.rejected,
                    makespan_s: r.makespan_s,
                    pq_class: &r.pq_class,
                    wrr_class: &r.wrr_class,
                })
                .collect(),
        };
        return serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    }
    let mut out = format!(
        "{:<7} {:<64} {:>9} {:>8} {:>11} {:>11} {:>11}\n",
        "POLICY", "TRACE_HASH", "COMPLETED", "REJECTED", "PQ_MEAN_S", "PQ_P95_S", "WRR_MEAN_S"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<7} {:<64} {:>9} {:>8} {:>11.6} {:>11.6} {:>11.6}",
            r.policy.to_string(),
            r.trace_hash,
            r.completed,
            r.rejected,
            r.pq_class.mean_s,
            r.pq_class.p95_s,
            r.wrr_class.mean_s
        );
    }
    let _ = writeln!(out, "digest {}", digest(reports));
    let _ = writeln!(out, "report {}", args.report_dir.display());
    out
}

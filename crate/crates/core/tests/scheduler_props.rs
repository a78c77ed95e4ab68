mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::brute_force_select;
use vidbus_core::scheduler::*;
use vidbus_core::time::Timestamp;

fn view_strategy() -> impl Strategy<Value = QueueView> {
    let backlog = prop_oneof![Just(0u64), 1u64..10_000];
    let load = prop_oneof![prop::sample::select(vec![0.1, 0.25, 0.5, 0.75]), 0.0f64..=1.0];
    let rate = prop_oneof![prop::sample::select(vec![0.0, 50.0, 100.0, 500.0]), 0.0f64..1e6];
    (backlog, load, rate).prop_map(|(backlog_bytes, load_rate, processing_rate)| QueueView {
        backlog_bytes,
        load_rate,
        processing_rate,
    })
}

fn weights_strategy() -> impl Strategy<Value = (f64, f64)> {
    prop_oneof![Just(0.5), Just(0.0), Just(1.0), 0.0f64..=1.0].prop_map(|w| (w, 1.0 - w))
}

proptest! {
    #[test]
    fn load_rate_in_unit_interval(cap in 1u64..u64::MAX / 2, frac in 0.0f64..=1.0) {
        let backlog = ((cap as f64) * frac) as u64;
        let v = load_rate(backlog.min(cap), cap).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn processing_rate_non_negative(prev in 0u64..1 << 40, delta in 0u64..1 << 40, t0 in 0u64..1 << 50, dt in 1u64..1 << 40) {
        let d = processing_rate(prev + delta, prev, Timestamp(t0 + dt), Timestamp(t0)).unwrap();
        prop_assert!(d >= 0.0);
    }

    #[test]
    fn balancer_matches_brute_force(
        views in prop::collection::vec(view_strategy(), 1..=8),
        (wl, wr) in weights_strategy(),
        ec in 0usize..16,
        tc in 0usize..16,
    ) {
        let mut b = Balancer::with_cursors(wl, wr, ec, tc);
        let got = b.select(Bank::Wrr, &views);
        let (want, e2, t2) = brute_force_select(Bank::Wrr, &views, wl, wr, ec, tc);
        prop_assert_eq!(got, want);
        // Cursors are compared modulo the bank size; the balancer may keep an
        // untouched cursor out of range.
        let n = views.len();
        prop_assert_eq!((b.cursors().0 % n, b.cursors().1 % n), (e2 % n, t2 % n));
    }

    #[test]
    fn decision_is_scale_invariant(
        views in prop::collection::vec(view_strategy(), 1..=8),
        (wl, wr) in weights_strategy(),
        c in prop::sample::select(vec![0.01, 1.0, 100.0, 3.7]),
    ) {
        let scaled: Vec<_> = views.iter().map(|v| QueueView { processing_rate: v.processing_rate * c, ..*v }).collect();
        let a = Balancer::new(wl, wr).select(Bank::Pq, &views);
        let b = Balancer::new(wl, wr).select(Bank::Pq, &scaled);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn empty_preference_holds(views in prop::collection::vec(view_strategy(), 1..=8), ec in 0usize..8) {
        let mut b = Balancer::with_cursors(0.5, 0.5, ec, 0);
        let d = b.select(Bank::Pq, &views);
        if views.iter().any(|v| v.backlog_bytes == 0) {
            prop_assert_eq!(d.reason, DecisionReason::EmptyPreference);
            prop_assert_eq!(views[d.queue_index].backlog_bytes, 0);
        }
    }
}

#[test]
fn classify_is_total_and_exact() {
    for p in Priority::all() {
        for c in Priority::all() {
            let bank = classify(p, c);
            assert_eq!(bank == Bank::Pq, p.value() <= c.value(), "P_i={p} P_c={c}");
        }
    }
}

#[test]
fn rotation_cycles_over_all_empty_queues() {
    for n in 1..=8 {
        let views = vec![QueueView { backlog_bytes: 0, load_rate: 0.0, processing_rate: 0.0 }; n];
        let mut b = Balancer::new(0.5, 0.5);
        let picks: Vec<_> = (0..2 * n).map(|_| b.select(Bank::Wrr, &views).queue_index).collect();
        let expected: Vec<_> = (0..2 * n).map(|k| k % n).collect();
        assert_eq!(picks, expected);
    }
}

fn config(pq: usize, wrr: usize, cap: u64, weights: Vec<u32>) -> SchedulerConfig {
    SchedulerConfig {
        pq: BankConfig { queues: pq, capacity_bytes: cap },
        wrr: BankConfig { queues: wrr, capacity_bytes: cap },
        wrr_weights: weights,
        ..Default::default()
    }
}

#[test]
fn wrr_dispense_is_weighted_cycle() {
    let mut s = Scheduler::new(config(1, 2, 10_000, vec![2, 1]), Timestamp::ZERO).unwrap();
    for id in 0..6 {
        s.submit(Transaction::new(TxnId(id), Priority::new(9).unwrap(), vec![0u8; 10], Timestamp::ZERO)).unwrap();
    }
    let order: Vec<_> = (0..3).map(|w| s.dispatch_next(w).unwrap().queue_index).collect();
    assert_eq!(order, vec![0, 0, 1]);
}

#[test]
fn sample_stats_matches_scalar_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cap = 50_000;
    let mut s = Scheduler::new(config(1, 4, cap, vec![]), Timestamp::ZERO).unwrap();
    let mut processed = [0u64; 4];
    let mut prev_processed = [0u64; 4];
    let mut prev_t = Timestamp::ZERO;
    let mut id = 0;
    for round in 1..=20u64 {
        for _ in 0..rng.random_range(0..12) {
            let size = rng.random_range(1..2000);
            id += 1;
            let _ = s.submit(Transaction::new(TxnId(id), Priority::new(9).unwrap(), vec![0u8; size], Timestamp::ZERO));
        }
        for _ in 0..rng.random_range(0..10) {
            if let Some(d) = s.dispatch_next(0) {
                s.complete(d.txn.id, 0, Timestamp(round)).unwrap();
                processed[d.queue_index] += d.txn.payload_size();
            }
        }
        let now = Timestamp(prev_t.0 + rng.random_range(1..3_000_000_000u64));
        let stats = s.sample_stats(Bank::Wrr, now).unwrap();
        for q in 0..4 {
            let backlog = s.queues(Bank::Wrr)[q].backlog_bytes();
            let expected_v = backlog as f64 / cap as f64;
            let expected_d = (processed[q] - prev_processed[q]) as f64 / ((now.0 - prev_t.0) as f64 / 1e9);
            assert_eq!(stats[q].load_rate, expected_v);
            assert_eq!(stats[q].processing_rate, expected_d);
            assert_eq!(stats[q].processed_total, processed[q]);
        }
        prev_processed = processed;
        prev_t = now;
    }
}

#[test]
fn two_samples_one_period_apart() {
    let mut s = Scheduler::new(config(1, 1, 10_000, vec![]), Timestamp::ZERO).unwrap();
    let period = s.config().sample_period();
    s.sample_all(Timestamp::ZERO.saturating_add(period)).unwrap();
    s.submit(Transaction::new(TxnId(1), Priority::new(0).unwrap(), vec![0u8; 600], Timestamp::ZERO)).unwrap();
    let t = s.next_work(0).unwrap();
    s.complete(t.id, 0, Timestamp::ZERO.saturating_add(period)).unwrap();
    let stats = s.sample_stats(Bank::Pq, Timestamp::ZERO.saturating_add(period * 2)).unwrap();
    assert_eq!(stats[0].processing_rate, 600.0 / period.as_secs_f64());
    assert_eq!(stats[0].load_rate, 0.0);
}

#[test]
fn randomized_trace_invariants() {
    let audit = common::audit_random_trace(2024, 10_000);
    assert!(audit.violations.is_empty(), "{:?}", &audit.violations[..audit.violations.len().min(5)]);
    assert!(audit.rejected > 0, "trace should exercise rejections");
    assert!(audit.completed > 0);
}

#[test]
fn thousand_mixed_submissions_conserve_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = Scheduler::new(config(2, 3, 200_000, vec![]), Timestamp::ZERO).unwrap();
    let mut submitted_bytes = 0;
    let mut completed_bytes = 0;
    let mut accepted = Vec::new();
    for id in 0..1000u64 {
        let size = rng.random_range(0..500u64);
        let prio = Priority::new(rng.random_range(0..10)).unwrap();
        if s.submit(Transaction::new(TxnId(id), prio, vec![0u8; size as usize], Timestamp::ZERO)).is_ok() {
            submitted_bytes += size;
            accepted.push(id);
        }
        if id % 3 == 0 {
            if let Some(t) = s.next_work(1) {
                completed_bytes += t.payload_size();
                s.complete(t.id, 1, Timestamp(1)).unwrap();
            }
        }
    }
    // Each accepted transaction sits in exactly one queue.
    let mut seen: Vec<u64> = [Bank::Pq, Bank::Wrr]
        .iter()
        .flat_map(|&b| s.queues(b).iter().flat_map(|q| q.iter().map(|t| t.id.0)).collect::<Vec<_>>())
        .collect();
    let backlog: u64 = [Bank::Pq, Bank::Wrr].iter().flat_map(|&b| s.queues(b).iter().map(|q| q.backlog_bytes())).sum();
    assert_eq!(backlog + completed_bytes, submitted_bytes);
    let done = s.snapshot_metrics(Timestamp(1)).totals.completed as usize;
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len() + done, accepted.len());

    // Drain; completions per class add up to the total.
    while let Some(t) = s.next_work(0) {
        s.complete(t.id, 0, Timestamp(2)).unwrap();
    }
    let m = s.snapshot_metrics(Timestamp(2));
    assert_eq!(m.classes.iter().map(|c| c.completed).sum::<u64>(), accepted.len() as u64);
    assert_eq!(m.totals.in_flight, 0);
}

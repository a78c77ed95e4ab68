//! Classification and the two per-queue rates the balancer works from.

use super::{Bank, Priority, SchedError};
use crate::time::Timestamp;

/// Priority classifier. Smaller priority values are more urgent; everything
/// at or below the threshold goes to the strict-priority bank.
pub fn classify(priority: Priority, threshold: Priority) -> Bank {
    if priority <= threshold {
        Bank::Pq
    } else {
        Bank::Wrr
    }
}

/// Load rate `V = M_i / M_c`: pending payload bytes over queue capacity.
pub fn load_rate(backlog_bytes: u64, capacity_bytes: u64) -> Result<f64, SchedError> {
    if capacity_bytes == 0 {
        return Err(SchedError::InvalidConfig {
            key: "capacity_bytes".into(),
            reason: "queue capacity must be positive".into(),
        });
    }
    if backlog_bytes > capacity_bytes {
        return Err(SchedError::CapacityViolated { backlog_bytes, capacity_bytes });
    }
    Ok(backlog_bytes as f64 / capacity_bytes as f64)
}

/// Processing rate `D = (M_tc - M_tp) / (t_c - t_p)` in bytes per second.
pub fn processing_rate(
    processed_now: u64,
    processed_prev: u64,
    now: Timestamp,
    prev: Timestamp,
) -> Result<f64, SchedError> {
    if now <= prev {
        return Err(SchedError::InvalidSampleWindow { now, prev });
    }
    if processed_now < processed_prev {
        return Err(SchedError::MonotonicityViolated { processed_now, processed_prev });
    }
    let window_secs = (now.as_nanos() - prev.as_nanos()) as f64 / 1e9;
    Ok((processed_now - processed_prev) as f64 / window_secs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: u8) -> Priority {
        Priority::new(v).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(p(0), p(3)), Bank::Pq);
        assert_eq!(classify(p(3), p(3)), Bank::Pq);
        assert_eq!(classify(p(9), p(3)), Bank::Wrr);
    }

    #[test]
    fn load_rate_examples() {
        assert_eq!(load_rate(0, 100).unwrap(), 0.0);
        assert_eq!(load_rate(100, 100).unwrap(), 1.0);
        assert_eq!(load_rate(25, 200).unwrap(), 0.125);
        assert!(matches!(load_rate(1, 0), Err(SchedError::InvalidConfig { .. })));
        assert!(matches!(load_rate(101, 100), Err(SchedError::CapacityViolated { .. })));
    }

    #[test]
    fn processing_rate_examples() {
        let t = Timestamp::from_secs_f64(5.0);
        let two_later = Timestamp::from_secs_f64(7.0);
        let one_later = Timestamp::from_secs_f64(6.0);
        assert_eq!(processing_rate(1000, 400, two_later, t).unwrap(), 300.0);
        assert_eq!(processing_rate(500, 500, one_later, t).unwrap(), 0.0);
        assert!(matches!(
            processing_rate(400, 500, one_later, t),
            Err(SchedError::MonotonicityViolated { .. })
        ));
        assert!(matches!(
            processing_rate(500, 400, t, t),
            Err(SchedError::InvalidSampleWindow { .. })
        ));
    }
}

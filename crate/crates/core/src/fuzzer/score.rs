//! Performance and trace scores. Higher performance scores mean worse
//! behaviour of the algorithm under test, which is what the search rewards.

use crate::cca::CcaKind;
use crate::sim::{run_sim, windowed_throughput, SimConfig, SimResult};
use crate::tracegen::{PacketTrace, TraceMode};
use crate::Result;

/// Share of windows averaged by [`score_low_utilization`].
pub const LOW_WINDOW_SHARE: f64 = 0.2;

/// Negated mean of the lowest 20% of throughput windows (Mbit/s).
pub fn score_low_utilization(result: &SimResult, window_us: u64) -> f64 {
    -lowest_share_mean(&windowed_throughput(result, window_us), LOW_WINDOW_SHARE)
}

/// Mean of the lowest `ceil(share * n)` values; 0 for an empty series.
pub fn lowest_share_mean(values: &[f64], share: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((share * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[..k].iter().sum::<f64>() / k as f64
}

/// Tenth percentile of one-way delay in microseconds, 0 without samples.
pub fn score_high_delay(result: &SimResult) -> f64 {
    nearest_rank(&result.delay_samples_us, 0.10).map_or(0.0, |d| d as f64)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p * n)`.
pub fn nearest_rank(values: &[u64], p: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

/// `-(cross sent + w_drop * cross dropped)`; 0 for link traces.
pub fn score_trace(trace: &PacketTrace, result: &SimResult, w_drop: f64) -> f64 {
    if trace.mode == TraceMode::Link {
        return 0.0;
    }
    -(result.cross.sent as f64 + w_drop * result.cross.dropped as f64)
}

/// Best utilization any reference algorithm reaches on `trace`. A trace
/// on which no algorithm does well is unrealistic.
pub fn score_realism(trace: &PacketTrace, sim: &SimConfig, reference: &[CcaKind]) -> Result<f64> {
    let mut best = 0.0f64;
    for &cca in reference {
        let cfg = SimConfig {
            cca,
            event_log: false,
            ..sim.clone()
        };
        best = best.max(run_sim(&cfg, trace)?.utilization());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_share_of_constant_series() {
        assert_eq!(lowest_share_mean(&[12.0; 60], 0.2), 12.0);
    }

    #[test]
    fn lowest_share_rounds_count_up() {
        // 11 windows: ceil(2.2) = 3 lowest
        let mut v = vec![12.0; 8];
        v.extend([1.0, 2.0, 3.0]);
        assert_eq!(lowest_share_mean(&v, 0.2), 2.0);
    }

    #[test]
    fn nearest_rank_small_sets() {
        assert_eq!(nearest_rank(&[], 0.1), None);
        assert_eq!(nearest_rank(&[7], 0.1), Some(7));
        // rank ceil(0.1 * 20) = 2
        let v: Vec<u64> = (1..=20).rev().collect();
        assert_eq!(nearest_rank(&v, 0.1), Some(2));
    }
}

//! Discrete-event dumbbell simulator.
//!
//! One TCP sender and (in traffic mode) an open-loop cross-traffic source
//! share a drop-tail FIFO at the gateway. The bottleneck either serves one
//! packet per slot at a fixed rate ([`TraceMode::Traffic`]) or one packet
//! per trace timestamp ([`TraceMode::Link`]); a slot that finds the queue
//! empty is lost. Delivered packets reach the sink one propagation delay
//! later and ACKs return over an ideal reverse path of the same delay.

mod engine;
mod export;
mod log;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cca::CcaKind;
use crate::error::invalid;
use crate::tcp::{TcpStats, DEFAULT_DELAYED_ACK_US, DEFAULT_MIN_RTO_US};
use crate::tracegen::TraceMode;
use crate::Result;

pub use engine::{run_sim, run_sim_with};
pub use export::{delay_csv, queue_csv, throughput_csv};
pub use log::{rows_to_csv, EventLog, LogRow, EVENT_LOG_HEADER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub mode: TraceMode,
    /// Fixed service rate in traffic mode.
    pub bottleneck_rate_pps: f64,
    pub prop_delay_us: u64,
    pub queue_capacity_pkts: usize,
    pub duration_us: u64,
    pub mtu_bytes: u64,
    pub cca: CcaKind,
    pub sender_start_us: u64,
    pub rng_seed: u64,
    pub delayed_ack_us: u64,
    pub min_rto_us: u64,
    pub init_cwnd_segments: u64,
    /// Throughput window used by scoring.
    pub window_us: u64,
    pub event_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mode: TraceMode::Traffic,
            bottleneck_rate_pps: 1000.0,
            prop_delay_us: 20_000,
            queue_capacity_pkts: 50,
            duration_us: 30_000_000,
            mtu_bytes: 1500,
            cca: CcaKind::Reno,
            sender_start_us: 0,
            rng_seed: 0,
            delayed_ack_us: DEFAULT_DELAYED_ACK_US,
            min_rto_us: DEFAULT_MIN_RTO_US,
            init_cwnd_segments: 10,
            window_us: 500_000,
            event_log: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queue_capacity_pkts < 1 {
            return Err(invalid("sim.queue_capacity_pkts must be at least 1"));
        }
        if !(self.bottleneck_rate_pps.is_finite() && self.bottleneck_rate_pps > 0.0) {
            return Err(invalid("sim.bottleneck_rate_pps must be positive"));
        }
        if self.duration_us == 0 {
            return Err(invalid("sim.duration_us must be positive"));
        }
        if self.mtu_bytes == 0 {
            return Err(invalid("sim.mtu_bytes must be positive"));
        }
        if self.window_us == 0 {
            return Err(invalid("sim.window_us must be positive"));
        }
        if self.min_rto_us == 0 {
            return Err(invalid("sim.min_rto_us must be positive"));
        }
        Ok(())
    }

    /// Bottleneck capacity in Mbit/s for a fixed-rate link.
    pub fn fixed_capacity_mbps(&self) -> f64 {
        self.bottleneck_rate_pps * self.mtu_bytes as f64 * 8.0 / 1e6
    }
}

/// Per-flow packet accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Queued or propagating when the run ended.
    pub in_flight_at_end: u64,
}

impl FlowCounters {
    pub fn conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight_at_end
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimResult {
    pub duration_us: u64,
    pub mtu_bytes: u64,
    /// Average bottleneck capacity over the run in Mbit/s.
    pub capacity_mbps: f64,
    pub sender: FlowCounters,
    pub cross: FlowCounters,
    /// Arrival time of every sender packet at the sink.
    pub sink_arrivals_us: Vec<u64>,
    /// One-way delay of the packet at the same index of `sink_arrivals_us`.
    pub delay_samples_us: Vec<u64>,
    /// `(time, queue length)` at every change.
    pub queue_series: Vec<(u64, u32)>,
    pub max_queue_len: usize,
    pub tcp: TcpStats,
    pub receiver_duplicates: u64,
    pub bbr_rounds: Option<u64>,
    pub events: Vec<LogRow>,
}

impl SimResult {
    pub fn delivered_pkts(&self) -> u64 {
        self.sender.delivered
    }

    /// Mean sender throughput over the run in Mbit/s.
    pub fn mean_throughput_mbps(&self) -> f64 {
        self.sender.delivered as f64 * self.mtu_bytes as f64 * 8.0 / self.duration_us as f64
    }

    /// Sender throughput over `[from_us, to_us)` in Mbit/s.
    pub fn throughput_between_mbps(&self, from_us: u64, to_us: u64) -> f64 {
        if to_us <= from_us {
            return 0.0;
        }
        let lo = self.sink_arrivals_us.partition_point(|&t| t < from_us);
        let hi = self.sink_arrivals_us.partition_point(|&t| t < to_us);
        (hi - lo) as f64 * self.mtu_bytes as f64 * 8.0 / (to_us - from_us) as f64
    }

    pub fn utilization(&self) -> f64 {
        if self.capacity_mbps <= 0.0 {
            return 0.0;
        }
        self.mean_throughput_mbps() / self.capacity_mbps
    }

    /// SHA-256 over every measured quantity, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in [
            self.duration_us,
            self.mtu_bytes,
            self.capacity_mbps.to_bits(),
        ] {
            h.update(v.to_le_bytes());
        }
        for f in [self.sender, self.cross] {
            for v in [f.sent, f.delivered, f.dropped, f.in_flight_at_end] {
                h.update(v.to_le_bytes());
            }
        }
        for v in [
            self.tcp.transmissions,
            self.tcp.retransmissions,
            self.tcp.fast_recoveries,
            self.tcp.rto_count,
            self.receiver_duplicates,
        ] {
            h.update(v.to_le_bytes());
        }
        for v in self.sink_arrivals_us.iter().chain(&self.delay_samples_us) {
            h.update(v.to_le_bytes());
        }
        for (t, q) in &self.queue_series {
            h.update(t.to_le_bytes());
            h.update(q.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sender throughput per tumbling window, in Mbit/s. The last window is
/// shortened to end at the run duration.
pub fn windowed_throughput(result: &SimResult, window_us: u64) -> Vec<f64> {
    if window_us == 0 || result.duration_us == 0 {
        return Vec::new();
    }
    let n = result.duration_us.div_ceil(window_us) as usize;
    let mut counts = vec![0u64; n];
    for &t in &result.sink_arrivals_us {
        let idx = ((t / window_us) as usize).min(n - 1);
        counts[idx] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let start = i as u64 * window_us;
            let len = (start + window_us).min(result.duration_us) - start;
            c as f64 * result.mtu_bytes as f64 * 8.0 / len as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result_with(arrivals: Vec<u64>, duration_us: u64) -> SimResult {
        SimResult {
            duration_us,
            mtu_bytes: 1500,
            capacity_mbps: 12.0,
            sender: FlowCounters::default(),
            cross: FlowCounters::default(),
            delay_samples_us: vec![0; arrivals.len()],
            sink_arrivals_us: arrivals,
            queue_series: Vec::new(),
            max_queue_len: 0,
            tcp: TcpStats::default(),
            receiver_duplicates: 0,
            bbr_rounds: None,
            events: Vec::new(),
        }
    }

    #[test]
    fn constant_rate_windows() {
        // 1000 pkt/s of 1500 B is 12 Mbit/s
        let arrivals: Vec<u64> = (0..30_000).map(|k| k * 1000).collect();
        let w = windowed_throughput(&result_with(arrivals, 30_000_000), 500_000);
        assert_eq!(w.len(), 60);
        assert!(w.iter().all(|&x| (x - 12.0).abs() < 1e-9));
    }

    #[test]
    fn zero_deliveries() {
        let w = windowed_throughput(&result_with(Vec::new(), 30_000_000), 500_000);
        assert_eq!(w.len(), 60);
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn half_rate_windows() {
        let arrivals: Vec<u64> = (0..15_000).map(|k| k * 2000).collect();
        let w = windowed_throughput(&result_with(arrivals, 30_000_000), 500_000);
        assert_eq!(w.len(), 60);
        assert!(w.iter().all(|&x| (x - 6.0).abs() < 1e-9));
    }

    #[test]
    fn partial_last_window() {
        let arrivals: Vec<u64> = (0..1_200).map(|k| k * 1000).collect();
        let w = windowed_throughput(&result_with(arrivals, 1_200_000), 500_000);
        assert_eq!(w.len(), 3);
        assert!((w[2] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            queue_capacity_pkts: 0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

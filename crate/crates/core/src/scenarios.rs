//! Hand-constructed cross-traffic traces that exercise known failure modes.

use crate::error::invalid;
use crate::sim::{run_sim, SimConfig};
use crate::tracegen::{PacketTrace, TraceMode};
use crate::Result;

/// Periodic bursts timed against the minimum RTO.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseParams {
    pub period_us: u64,
    /// Offset of the first burst.
    pub phase_us: u64,
    /// Packets injected at once at the start of every period.
    pub burst_pkts: usize,
    /// How long a trickle keeps the queue full after each burst.
    pub tail_us: u64,
    pub tail_gap_us: u64,
}

impl Default for PulseParams {
    fn default() -> Self {
        PulseParams {
            period_us: 1_000_000,
            phase_us: 500_000,
            burst_pkts: 50,
            tail_us: 150_000,
            tail_gap_us: 1_000,
        }
    }
}

/// A burst of `burst_pkts` every period, each followed by one packet per
/// `tail_gap_us` for `tail_us`. Any RTO retransmission that lands in the
/// pulse is dropped, so the backoff doubles until the sender gives up.
pub fn pulse_trace(
    duration_us: u64,
    p: &PulseParams,
    budget: Option<usize>,
) -> Result<PacketTrace> {
    if p.period_us == 0 || p.tail_gap_us == 0 {
        return Err(invalid("pulse period and tail gap must be positive"));
    }
    let mut ts = Vec::new();
    let mut start = p.phase_us;
    while start < duration_us {
        ts.extend(std::iter::repeat_n(start, p.burst_pkts));
        let mut t = start + p.tail_gap_us;
        while t < (start + p.tail_us).min(duration_us) {
            ts.push(t);
            t += p.tail_gap_us;
        }
        start += p.period_us;
    }
    PacketTrace::from_timestamps(TraceMode::Traffic, duration_us, budget, ts)
}

/// Packets in the burst that overflows the queue.
const SPURIOUS_RTO_BURST: usize = 50;
/// Trickle after the first burst, keeping losses spread over a few packets.
const SPURIOUS_RTO_TAIL: u64 = 10;

/// Cross traffic that makes the sender lose a packet, then lose its fast
/// retransmission while new data keeps flowing, so the RTO fires with a
/// full window in flight and the retransmissions that follow are
/// spurious.
///
/// Every episode is built in two passes against `sim`: a first burst at
/// `start` causes the loss, the trace is simulated to find when the fast
/// retransmission goes out, and a second burst placed at that instant
/// drops it. Episodes are added in order, each simulated with the
/// previous ones in place.
pub fn spurious_rto_trace(
    sim: &SimConfig,
    starts_us: &[u64],
    budget: Option<usize>,
) -> Result<PacketTrace> {
    let cfg = SimConfig {
        mode: TraceMode::Traffic,
        event_log: true,
        ..sim.clone()
    };
    let build = |ts: &[u64]| {
        PacketTrace::from_timestamps(TraceMode::Traffic, sim.duration_us, budget, ts.to_vec())
    };
    let mut ts: Vec<u64> = Vec::new();
    for &start in starts_us {
        ts.extend(std::iter::repeat_n(start, SPURIOUS_RTO_BURST));
        ts.extend((1..=SPURIOUS_RTO_TAIL).map(|k| start + k * 1_000));
        let result = run_sim(&cfg, &build(&ts)?)?;
        let retransmit = result
            .events
            .iter()
            .find(|e| e.event == "fast_retransmit" && e.time_us > start)
            .ok_or_else(|| invalid(format!("no fast retransmission after {start} us")))?;
        ts.extend(std::iter::repeat_n(retransmit.time_us, SPURIOUS_RTO_BURST));
    }
    build(&ts)
}

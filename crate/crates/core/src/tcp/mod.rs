//! TCP endpoint machinery shared by every congestion controller.
//!
//! Sequence numbers count whole segments. The sender keeps a per-segment
//! scoreboard with the delivery bookkeeping needed for rate sampling: each
//! (re)transmission stamps the segment with the connection's delivered count
//! and delivery time at that instant.

mod receiver;
mod sender;

pub use receiver::{TcpReceiver, MAX_SACK_BLOCKS};
pub use sender::{AckOutcome, RtoOutcome, SegmentRecord, TcpSender, TcpState, TcpStats};

use serde::{Deserialize, Serialize};

pub const DEFAULT_MIN_RTO_US: u64 = 1_000_000;
pub const MAX_RTO_US: u64 = 60_000_000;
pub const DEFAULT_DELAYED_ACK_US: u64 = 200_000;
pub const DUP_THRESH: usize = 3;

/// A data segment on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataSegment {
    pub seq: u64,
    pub sent_time_us: u64,
    pub retransmission: bool,
}

/// A cumulative acknowledgement with up to three SACK blocks, each a
/// half-open `[start, end)` segment range above the cumulative point.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AckSegment {
    pub cum_ack: u64,
    pub sack_blocks: Vec<(u64, u64)>,
}

/// One delivery-rate observation, produced per ACK that delivers data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    /// Bytes delivered between the sampled segment's (re)transmission and now.
    pub delivered_delta_bytes: u64,
    pub interval_us: u64,
    /// The sampled segment's delivered count at its latest transmission.
    pub prior_delivered_bytes: u64,
    pub prior_delivered_time_us: u64,
    pub is_app_limited: bool,
    /// Bytes newly delivered by this ACK (cumulative or SACKed).
    pub newly_delivered_bytes: u64,
    /// Connection total after this ACK.
    pub delivered_total_bytes: u64,
    /// Whether the sampled segment had been retransmitted.
    pub is_retransmission: bool,
    /// Interval long enough to trust: positive and not shorter than the
    /// minimum RTT observed so far.
    pub valid: bool,
}

impl RateSample {
    /// Sampled delivery rate in bytes per second (0 for invalid samples).
    pub fn rate_bytes_per_sec(&self) -> f64 {
        if !self.valid || self.interval_us == 0 {
            return 0.0;
        }
        self.delivered_delta_bytes as f64 * 1e6 / self.interval_us as f64
    }
}

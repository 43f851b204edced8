//! Congestion control algorithms behind a single hook interface.
//!
//! The simulator calls, per ACK: [`CcaState::on_recovery_exit`] if the ACK
//! ended loss recovery, [`CcaState::on_loss_detected`] if it started fast
//! recovery, then [`CcaState::on_ack`]. Timeouts go to [`CcaState::on_rto`].

mod bbr;
mod cubic;
mod reno;

use serde::{Deserialize, Serialize};

pub use bbr::{Bbr, BbrMode, GAIN_CYCLE, MIN_CWND_SEGMENTS, STARTUP_GAIN};
pub use cubic::{Cubic, CUBIC_BETA, CUBIC_C};
pub use reno::Reno;

use crate::error::invalid;
use crate::sim::EventLog;
use crate::tcp::RateSample;

/// Everything a controller may look at when an ACK is processed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AckEvent {
    pub now_us: u64,
    pub sample: Option<RateSample>,
    /// Advance of the cumulative ACK point, in segments.
    pub cum_acked_segments: u64,
    /// Segments delivered for the first time (cumulative or SACK).
    pub newly_delivered_segments: u64,
    pub rtt_us: Option<u64>,
    pub srtt_us: Option<f64>,
    pub min_rtt_us: Option<u64>,
    /// Bytes in the network after the ACK was processed.
    pub pipe_bytes: u64,
    pub delivered_bytes: u64,
    /// Sender is in fast recovery or post-timeout loss recovery.
    pub in_recovery: bool,
    pub snd_una: u64,
    pub snd_nxt: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CcaKind {
    #[serde(rename = "reno")]
    Reno,
    #[serde(rename = "cubic")]
    Cubic,
    /// CUBIC without the slow-start clamp.
    #[serde(rename = "cubic-buggy")]
    CubicBuggy,
    #[serde(rename = "bbr")]
    Bbr,
    /// BBR that enters ProbeRTT on every retransmission timeout.
    #[serde(rename = "bbr-patched")]
    BbrPatched,
}

impl CcaKind {
    pub const ALL: [CcaKind; 5] = [
        CcaKind::Reno,
        CcaKind::Cubic,
        CcaKind::CubicBuggy,
        CcaKind::Bbr,
        CcaKind::BbrPatched,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CcaKind::Reno => "reno",
            CcaKind::Cubic => "cubic",
            CcaKind::CubicBuggy => "cubic-buggy",
            CcaKind::Bbr => "bbr",
            CcaKind::BbrPatched => "bbr-patched",
        }
    }
}

impl std::fmt::Display for CcaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CcaKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        CcaKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown cca `{s}` (expected reno, cubic, cubic-buggy, bbr, bbr-patched)"
                ))
            })
    }
}

#[derive(Clone, Debug)]
pub enum CcaState {
    Reno(Reno),
    Cubic(Cubic),
    Bbr(Bbr),
}

impl CcaState {
    pub fn new(kind: CcaKind, mss: u64, init_cwnd_segments: u64) -> Self {
        match kind {
            CcaKind::Reno => CcaState::Reno(Reno::new(mss, init_cwnd_segments)),
            CcaKind::Cubic => CcaState::Cubic(Cubic::new(mss, init_cwnd_segments, false)),
            CcaKind::CubicBuggy => CcaState::Cubic(Cubic::new(mss, init_cwnd_segments, true)),
            CcaKind::Bbr => CcaState::Bbr(Bbr::new(mss, init_cwnd_segments, false)),
            CcaKind::BbrPatched => CcaState::Bbr(Bbr::new(mss, init_cwnd_segments, true)),
        }
    }

    pub fn kind(&self) -> CcaKind {
        match self {
            CcaState::Reno(_) => CcaKind::Reno,
            CcaState::Cubic(c) if c.buggy() => CcaKind::CubicBuggy,
            CcaState::Cubic(_) => CcaKind::Cubic,
            CcaState::Bbr(b) if b.patched() => CcaKind::BbrPatched,
            CcaState::Bbr(_) => CcaKind::Bbr,
        }
    }

    pub fn on_ack(&mut self, ev: &AckEvent, log: &mut EventLog) {
        match self {
            CcaState::Reno(c) => c.on_ack(ev),
            CcaState::Cubic(c) => c.on_ack(ev),
            CcaState::Bbr(c) => c.on_ack(ev, log),
        }
    }

    /// Fast recovery begins.
    pub fn on_loss_detected(
        &mut self,
        now_us: u64,
        pipe_bytes: u64,
        delivered_bytes: u64,
        log: &mut EventLog,
    ) {
        match self {
            CcaState::Reno(c) => c.on_loss_detected(),
            CcaState::Cubic(c) => c.on_loss_detected(),
            CcaState::Bbr(c) => c.on_loss_detected(pipe_bytes, delivered_bytes),
        }
        log.push(now_us, "cca", "loss_cwnd", None, self.cwnd_bytes() as f64);
    }

    pub fn on_recovery_exit(&mut self, now_us: u64, log: &mut EventLog) {
        match self {
            CcaState::Reno(c) => c.on_recovery_exit(),
            CcaState::Cubic(_) => {}
            CcaState::Bbr(c) => c.on_recovery_exit(),
        }
        log.push(
            now_us,
            "cca",
            "recovery_exit_cwnd",
            None,
            self.cwnd_bytes() as f64,
        );
    }

    /// Retransmission timeout. `flight_bytes` is the data in the network
    /// just before the timeout.
    pub fn on_rto(
        &mut self,
        now_us: u64,
        flight_bytes: u64,
        delivered_bytes: u64,
        log: &mut EventLog,
    ) {
        match self {
            CcaState::Reno(c) => c.on_rto(flight_bytes),
            CcaState::Cubic(c) => c.on_rto(),
            CcaState::Bbr(c) => c.on_rto(now_us, delivered_bytes, log),
        }
        log.push(now_us, "cca", "rto_cwnd", None, self.cwnd_bytes() as f64);
    }

    pub fn cwnd_bytes(&self) -> u64 {
        match self {
            CcaState::Reno(c) => c.cwnd_bytes(),
            CcaState::Cubic(c) => c.cwnd_bytes(),
            CcaState::Bbr(c) => c.cwnd_bytes(),
        }
    }

    /// Pacing rate in bits per second; `None` means unpaced.
    pub fn pacing_rate_bps(&self) -> Option<f64> {
        match self {
            CcaState::Bbr(c) => Some(c.pacing_rate_bps()),
            _ => None,
        }
    }

    pub fn as_bbr(&self) -> Option<&Bbr> {
        match self {
            CcaState::Bbr(b) => Some(b),
            _ => None,
        }
    }
}

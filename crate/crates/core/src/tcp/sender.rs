use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AckSegment, DataSegment, RateSample, DEFAULT_MIN_RTO_US, DUP_THRESH, MAX_RTO_US};

/// Scoreboard entry for one outstanding segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SegmentRecord {
    /// Time of the latest (re)transmission.
    pub sent_time_us: u64,
    /// Start of the send interval this transmission belongs to.
    pub first_tx_time_us: u64,
    pub prior_delivered_bytes: u64,
    pub prior_delivered_time_us: u64,
    pub sacked: bool,
    /// Marked lost and waiting for retransmission.
    pub lost: bool,
    pub retransmitted_count: u32,
    pub is_app_limited: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TcpState {
    Open,
    /// SACK/dupACK-driven fast recovery.
    Recovery,
    /// After a retransmission timeout.
    Loss,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpStats {
    pub transmissions: u64,
    pub retransmissions: u64,
    pub fast_recoveries: u64,
    pub rto_count: u64,
    pub max_backoff: u32,
}

/// What an ACK did to the sender, and which congestion-control hooks the
/// caller must run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AckOutcome {
    /// ACK beyond anything sent; dropped.
    pub ignored: bool,
    pub sample: Option<RateSample>,
    /// Segments newly covered by the cumulative point, including ones that
    /// were SACKed earlier.
    pub cum_acked_segments: u64,
    /// Segments delivered for the first time by this ACK.
    pub newly_delivered: Vec<u64>,
    pub rtt_us: Option<u64>,
    pub dupack: bool,
    /// Segments newly marked lost by SACK or duplicate-ACK inference.
    pub newly_lost: u64,
    /// The duplicate-ACK threshold was crossed on this ACK.
    pub fast_retransmit: bool,
    pub entered_recovery: bool,
    pub exited_recovery: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RtoOutcome {
    pub pipe_before_segments: u64,
    pub marked_lost: u64,
    pub rto_us: u64,
}

/// Proportional rate reduction state for one fast-recovery episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Prr {
    ssthresh: u64,
    recover_fs: u64,
    delivered: u64,
    out: u64,
    /// Segments the current ACK allows.
    budget: u64,
}

/// Bulk-data TCP sender with a SACK scoreboard.
#[derive(Clone, Debug)]
pub struct TcpSender {
    mss: u64,
    snd_una: u64,
    snd_nxt: u64,
    /// `segs[i]` describes segment `snd_una + i`.
    segs: VecDeque<SegmentRecord>,
    lost: BTreeSet<u64>,
    pipe: u64,
    delivered_bytes: u64,
    delivered_time_us: u64,
    first_tx_time_us: u64,
    srtt_us: Option<f64>,
    rttvar_us: f64,
    min_rtt_us: Option<u64>,
    min_rto_us: u64,
    backoff: u32,
    rto_deadline: Option<u64>,
    dupacks: u32,
    state: TcpState,
    recovery_point: u64,
    next_send_time_us: u64,
    prr: Option<Prr>,
    stats: TcpStats,
}

impl TcpSender {
    pub fn new(mss: u64, min_rto_us: u64) -> Self {
        TcpSender {
            mss,
            snd_una: 0,
            snd_nxt: 0,
            segs: VecDeque::new(),
            lost: BTreeSet::new(),
            pipe: 0,
            delivered_bytes: 0,
            delivered_time_us: 0,
            first_tx_time_us: 0,
            srtt_us: None,
            rttvar_us: 0.0,
            min_rtt_us: None,
            min_rto_us: min_rto_us.max(1),
            backoff: 0,
            rto_deadline: None,
            dupacks: 0,
            state: TcpState::Open,
            recovery_point: 0,
            next_send_time_us: 0,
            prr: None,
            stats: TcpStats::default(),
        }
    }

    pub fn mss(&self) -> u64 {
        self.mss
    }
    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }
    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }
    /// Segments believed to be in the network.
    pub fn pipe(&self) -> u64 {
        self.pipe
    }
    pub fn pipe_bytes(&self) -> u64 {
        self.pipe * self.mss
    }
    pub fn outstanding(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }
    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }
    pub fn srtt_us(&self) -> Option<f64> {
        self.srtt_us
    }
    pub fn rttvar_us(&self) -> f64 {
        self.rttvar_us
    }
    pub fn min_rtt_us(&self) -> Option<u64> {
        self.min_rtt_us
    }
    pub fn backoff(&self) -> u32 {
        self.backoff
    }
    pub fn state(&self) -> TcpState {
        self.state
    }
    pub fn rto_deadline(&self) -> Option<u64> {
        self.rto_deadline
    }
    pub fn stats(&self) -> TcpStats {
        self.stats
    }
    pub fn lost_count(&self) -> usize {
        self.lost.len()
    }
    pub fn next_send_time_us(&self) -> u64 {
        self.next_send_time_us
    }
    pub fn set_next_send_time_us(&mut self, t: u64) {
        self.next_send_time_us = t;
    }

    pub fn record(&self, seq: u64) -> Option<&SegmentRecord> {
        seq.checked_sub(self.snd_una)
            .and_then(|i| self.segs.get(i as usize))
    }

    /// Un-backed-off timeout: `max(min_rto, srtt + 4 * rttvar)`, 1 s before
    /// the first RTT sample.
    pub fn base_rto_us(&self) -> u64 {
        let base = match self.srtt_us {
            Some(srtt) => (srtt + (4.0 * self.rttvar_us).max(1_000.0)).round() as u64,
            None => 1_000_000,
        };
        base.max(self.min_rto_us).min(MAX_RTO_US)
    }

    /// Current timeout including exponential backoff, capped at 60 s.
    pub fn rto_us(&self) -> u64 {
        let base = self.base_rto_us();
        let shift = self.backoff.min(32);
        base.checked_shl(shift)
            .filter(|v| v >> shift == base)
            .unwrap_or(MAX_RTO_US)
            .min(MAX_RTO_US)
    }

    /// Whether the window leaves room for another segment. During
    /// proportional rate reduction the per-ACK budget decides instead.
    pub fn window_open(&self, cwnd_bytes: u64) -> bool {
        match self.prr {
            Some(p) => p.budget > 0,
            None => (self.pipe + 1) * self.mss <= cwnd_bytes.max(self.mss),
        }
    }

    /// Starts proportional rate reduction toward `ssthresh_segments` for the
    /// recovery episode that began on the last ACK. `recover_fs` is the
    /// flight size when recovery started.
    pub fn start_prr(&mut self, ssthresh_segments: u64, recover_fs: u64) {
        if self.state == TcpState::Recovery {
            self.prr = Some(Prr {
                ssthresh: ssthresh_segments.max(1),
                recover_fs: recover_fs.max(1),
                delivered: 0,
                out: 0,
                budget: 0,
            });
        }
    }

    pub fn prr_active(&self) -> bool {
        self.prr.is_some()
    }

    /// Sets the sending budget for an ACK that delivered `delivered`
    /// segments (RFC 6937 with slow-start reduction bound).
    pub fn prr_on_ack(&mut self, delivered: u64) {
        let pipe = self.pipe;
        if let Some(p) = self.prr.as_mut() {
            p.delivered += delivered;
            let sndcnt = if pipe > p.ssthresh {
                (p.delivered * p.ssthresh)
                    .div_ceil(p.recover_fs)
                    .saturating_sub(p.out)
            } else {
                let limit = p.delivered.saturating_sub(p.out).max(delivered) + 1;
                (p.ssthresh - pipe).min(limit)
            };
            p.budget = sndcnt;
        }
    }

    /// The segment the next transmission would carry.
    pub fn next_seq(&self) -> u64 {
        self.lost.first().copied().unwrap_or(self.snd_nxt)
    }

    /// Sends the lowest lost segment, or new data when nothing is lost.
    pub fn transmit(&mut self, now: u64) -> DataSegment {
        if self.snd_nxt == self.snd_una {
            self.first_tx_time_us = now;
            self.delivered_time_us = now;
        }
        let (seq, retransmission) = match self.lost.pop_first() {
            Some(seq) => (seq, true),
            None => {
                self.segs.push_back(SegmentRecord::default());
                self.snd_nxt += 1;
                (self.snd_nxt - 1, false)
            }
        };
        let idx = (seq - self.snd_una) as usize;
        let rec = &mut self.segs[idx];
        rec.sent_time_us = now;
        rec.first_tx_time_us = self.first_tx_time_us;
        rec.prior_delivered_bytes = self.delivered_bytes;
        rec.prior_delivered_time_us = self.delivered_time_us;
        rec.lost = false;
        rec.is_app_limited = false;
        if retransmission {
            rec.retransmitted_count += 1;
            self.stats.retransmissions += 1;
        }
        self.pipe += 1;
        self.stats.transmissions += 1;
        if let Some(p) = self.prr.as_mut() {
            p.out += 1;
            p.budget = p.budget.saturating_sub(1);
        }

        if (retransmission && seq == self.snd_una) || self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto_us());
        }
        DataSegment {
            seq,
            sent_time_us: now,
            retransmission,
        }
    }

    pub fn on_ack(&mut self, now: u64, ack: &AckSegment) -> AckOutcome {
        let mut out = AckOutcome::default();
        if ack.cum_ack > self.snd_nxt {
            out.ignored = true;
            return out;
        }
        let prev_una = self.snd_una;
        // (sent_time, seq, record) of the most recently sent delivered segment
        let mut newest: Option<(u64, u64, SegmentRecord)> = None;
        let mut rtt_from: Option<u64> = None;

        let mut note = |seq: u64, rec: &SegmentRecord, out: &mut AckOutcome| {
            out.newly_delivered.push(seq);
            if newest
                .as_ref()
                .is_none_or(|(t, s, _)| (rec.sent_time_us, seq) > (*t, *s))
            {
                newest = Some((rec.sent_time_us, seq, *rec));
            }
            if rec.retransmitted_count == 0 {
                rtt_from =
                    Some(rtt_from.map_or(rec.sent_time_us, |t: u64| t.max(rec.sent_time_us)));
            }
        };

        while self.snd_una < ack.cum_ack {
            let rec = self
                .segs
                .pop_front()
                .expect("scoreboard covers snd_una..snd_nxt");
            let seq = self.snd_una;
            if !rec.sacked {
                if rec.lost {
                    self.lost.remove(&seq);
                } else {
                    self.pipe -= 1;
                }
                note(seq, &rec, &mut out);
            }
            self.snd_una += 1;
            out.cum_acked_segments += 1;
        }

        for &(start, end) in &ack.sack_blocks {
            let lo = start.max(self.snd_una);
            let hi = end.min(self.snd_nxt);
            for seq in lo..hi {
                let idx = (seq - self.snd_una) as usize;
                let rec = &mut self.segs[idx];
                if rec.sacked {
                    continue;
                }
                rec.sacked = true;
                if rec.lost {
                    rec.lost = false;
                    self.lost.remove(&seq);
                } else {
                    self.pipe -= 1;
                }
                let snapshot = *rec;
                note(seq, &snapshot, &mut out);
            }
        }

        let newly = out.newly_delivered.len() as u64;
        if newly > 0 {
            self.delivered_bytes += newly * self.mss;
            self.delivered_time_us = now;
        }

        if let Some(sent) = rtt_from {
            let rtt = now.saturating_sub(sent).max(1);
            self.update_rtt(rtt);
            out.rtt_us = Some(rtt);
        }

        if let Some((_, seq, rec)) = newest {
            let send_elapsed = rec.sent_time_us.saturating_sub(rec.first_tx_time_us);
            let ack_elapsed = now.saturating_sub(rec.prior_delivered_time_us);
            self.first_tx_time_us = rec.sent_time_us;
            let interval = send_elapsed.max(ack_elapsed);
            let delta = self.delivered_bytes - rec.prior_delivered_bytes;
            let long_enough = self.min_rtt_us.is_none_or(|m| interval >= m);
            let _ = seq;
            out.sample = Some(RateSample {
                delivered_delta_bytes: delta,
                interval_us: interval,
                prior_delivered_bytes: rec.prior_delivered_bytes,
                prior_delivered_time_us: rec.prior_delivered_time_us,
                is_app_limited: rec.is_app_limited,
                newly_delivered_bytes: newly * self.mss,
                delivered_total_bytes: self.delivered_bytes,
                is_retransmission: rec.retransmitted_count > 0,
                valid: delta > 0 && interval > 0 && long_enough,
            });
        }

        let advanced = self.snd_una > prev_una;
        if advanced {
            self.dupacks = 0;
            self.backoff = 0;
            self.rto_deadline = if self.outstanding() > 0 {
                Some(now + self.rto_us())
            } else {
                None
            };
        } else if self.outstanding() > 0 {
            self.dupacks += 1;
            out.dupack = true;
        }

        if self.dupacks as usize >= DUP_THRESH {
            if self.dupacks as usize == DUP_THRESH {
                out.fast_retransmit = true;
            }
            if let Some(rec) = self.segs.front_mut() {
                if !rec.sacked && !rec.lost && rec.retransmitted_count == 0 {
                    rec.lost = true;
                    self.lost.insert(self.snd_una);
                    self.pipe -= 1;
                    out.newly_lost += 1;
                }
            }
        }
        if !ack.sack_blocks.is_empty() {
            out.newly_lost += self.mark_sack_losses();
        }
        if out.newly_lost > 0 {
            out.fast_retransmit = true;
        }

        if self.state != TcpState::Open && self.snd_una >= self.recovery_point && advanced {
            self.state = TcpState::Open;
            self.prr = None;
            out.exited_recovery = true;
        }
        if self.state == TcpState::Open && !self.lost.is_empty() {
            self.state = TcpState::Recovery;
            self.recovery_point = self.snd_nxt;
            self.stats.fast_recoveries += 1;
            out.entered_recovery = true;
        }
        out
    }

    /// A never-retransmitted hole with at least `DUP_THRESH` SACKed
    /// segments above it is lost.
    fn mark_sack_losses(&mut self) -> u64 {
        let mut sacked_above = 0usize;
        let mut marked = 0;
        for idx in (0..self.segs.len()).rev() {
            let rec = &mut self.segs[idx];
            if rec.sacked {
                sacked_above += 1;
                continue;
            }
            if sacked_above >= DUP_THRESH && !rec.lost && rec.retransmitted_count == 0 {
                rec.lost = true;
                self.lost.insert(self.snd_una + idx as u64);
                self.pipe -= 1;
                marked += 1;
            }
        }
        marked
    }

    /// Retransmission timeout: every un-SACKed outstanding segment is
    /// marked lost (including ones whose SACKs may still be in flight) and
    /// the timeout doubles.
    pub fn on_rto(&mut self, _now: u64) -> RtoOutcome {
        let pipe_before = self.pipe;
        let mut marked = 0;
        for (idx, rec) in self.segs.iter_mut().enumerate() {
            if !rec.sacked && !rec.lost {
                rec.lost = true;
                self.lost.insert(self.snd_una + idx as u64);
                marked += 1;
            }
        }
        self.pipe = 0;
        if self.rto_us() < MAX_RTO_US {
            self.backoff += 1;
        }
        self.stats.rto_count += 1;
        self.stats.max_backoff = self.stats.max_backoff.max(self.backoff);
        self.state = TcpState::Loss;
        self.prr = None;
        self.recovery_point = self.snd_nxt;
        self.dupacks = 0;
        self.rto_deadline = None;
        RtoOutcome {
            pipe_before_segments: pipe_before,
            marked_lost: marked,
            rto_us: self.rto_us(),
        }
    }

    fn update_rtt(&mut self, rtt: u64) {
        let r = rtt as f64;
        match self.srtt_us {
            None => {
                self.srtt_us = Some(r);
                self.rttvar_us = r / 2.0;
            }
            Some(srtt) => {
                self.rttvar_us = 0.75 * self.rttvar_us + 0.25 * (srtt - r).abs();
                self.srtt_us = Some(0.875 * srtt + 0.125 * r);
            }
        }
        self.min_rtt_us = Some(self.min_rtt_us.map_or(rtt, |m| m.min(rtt)));
    }
}

impl Default for TcpSender {
    fn default() -> Self {
        TcpSender::new(1500, DEFAULT_MIN_RTO_US)
    }
}

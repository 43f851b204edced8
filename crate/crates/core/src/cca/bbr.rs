use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::AckEvent;
use crate::sim::EventLog;

/// 2/ln 2, the smallest gain that doubles delivery each round.
pub const STARTUP_GAIN: f64 = 2.885;
pub const GAIN_CYCLE: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
pub const MIN_CWND_SEGMENTS: u64 = 4;

const CWND_GAIN: f64 = 2.0;
const BW_FILTER_ROUNDS: usize = 10;
const MIN_RTT_WINDOW_US: u64 = 10_000_000;
const PROBE_RTT_DURATION_US: u64 = 200_000;
const FULL_BW_THRESH: f64 = 1.25;
const FULL_BW_ROUNDS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BbrMode {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

impl BbrMode {
    fn code(self) -> f64 {
        match self {
            BbrMode::Startup => 0.0,
            BbrMode::Drain => 1.0,
            BbrMode::ProbeBw => 2.0,
            BbrMode::ProbeRtt => 3.0,
        }
    }
}

/// BBR v1: bottleneck bandwidth from a windowed max over probe rounds,
/// min RTT over 10 s, gain cycling in ProbeBW.
#[derive(Clone, Debug)]
pub struct Bbr {
    mss: u64,
    patched: bool,
    mode: BbrMode,
    /// Per-round maxima of completed rounds, newest last (bytes/s).
    bw_rounds: VecDeque<f64>,
    /// Max of the round in progress.
    round_max_bw: f64,
    round_start_delivered: u64,
    round_count: u64,
    min_rtt_us: Option<u64>,
    min_rtt_stamp_us: u64,
    cycle_index: usize,
    full_bw: f64,
    full_bw_count: u32,
    filled_pipe: bool,
    cwnd: u64,
    prior_cwnd: u64,
    packet_conservation: bool,
    in_recovery: bool,
    /// Bytes per second.
    pacing_rate: f64,
    probe_rtt_done_us: Option<u64>,
    probe_rtt_round_done: bool,
    init_cwnd: u64,
}

impl Bbr {
    pub fn new(mss: u64, init_cwnd_segments: u64, patched: bool) -> Self {
        let init_cwnd = init_cwnd_segments.max(1) * mss;
        Bbr {
            mss,
            patched,
            mode: BbrMode::Startup,
            bw_rounds: VecDeque::with_capacity(BW_FILTER_ROUNDS + 1),
            round_max_bw: 0.0,
            round_start_delivered: 0,
            round_count: 0,
            min_rtt_us: None,
            min_rtt_stamp_us: 0,
            cycle_index: 0,
            full_bw: 0.0,
            full_bw_count: 0,
            filled_pipe: false,
            cwnd: init_cwnd,
            prior_cwnd: init_cwnd,
            packet_conservation: false,
            in_recovery: false,
            // initial cwnd over a nominal 1 ms RTT
            pacing_rate: STARTUP_GAIN * init_cwnd as f64 * 1e3,
            probe_rtt_done_us: None,
            probe_rtt_round_done: false,
            init_cwnd,
        }
    }

    pub fn patched(&self) -> bool {
        self.patched
    }
    pub fn mode(&self) -> BbrMode {
        self.mode
    }
    pub fn round_count(&self) -> u64 {
        self.round_count
    }
    pub fn cycle_index(&self) -> usize {
        self.cycle_index
    }
    pub fn filled_pipe(&self) -> bool {
        self.filled_pipe
    }
    pub fn min_rtt_us(&self) -> Option<u64> {
        self.min_rtt_us
    }
    pub fn cwnd_bytes(&self) -> u64 {
        self.cwnd
    }
    pub fn pacing_rate_bps(&self) -> f64 {
        self.pacing_rate * 8.0
    }
    pub fn filter_len(&self) -> usize {
        self.bw_rounds.len()
    }

    /// Bottleneck bandwidth estimate in bytes per second: the max over the
    /// last ten completed rounds and the current one.
    pub fn btlbw(&self) -> f64 {
        self.bw_rounds
            .iter()
            .copied()
            .fold(self.round_max_bw, f64::max)
    }

    pub fn btlbw_bps(&self) -> f64 {
        self.btlbw() * 8.0
    }

    pub fn pacing_gain(&self) -> f64 {
        match self.mode {
            BbrMode::Startup => STARTUP_GAIN,
            BbrMode::Drain => 1.0 / STARTUP_GAIN,
            BbrMode::ProbeBw => GAIN_CYCLE[self.cycle_index],
            BbrMode::ProbeRtt => 1.0,
        }
    }

    fn cwnd_gain(&self) -> f64 {
        match self.mode {
            BbrMode::Startup | BbrMode::Drain => STARTUP_GAIN,
            _ => CWND_GAIN,
        }
    }

    /// `gain * btlbw * min_rtt`, or the initial window before any estimate.
    pub fn bdp_bytes(&self, gain: f64) -> u64 {
        match self.min_rtt_us {
            Some(rtt) if self.btlbw() > 0.0 => (gain * self.btlbw() * rtt as f64 / 1e6) as u64,
            _ => self.init_cwnd,
        }
    }

    /// Records a completed round's maximum, keeping ten rounds.
    pub fn push_round(&mut self, bw: f64) {
        self.bw_rounds.push_back(bw);
        while self.bw_rounds.len() > BW_FILTER_ROUNDS {
            self.bw_rounds.pop_front();
        }
    }

    pub fn on_ack(&mut self, ev: &AckEvent, log: &mut EventLog) {
        let now = ev.now_us;
        let mut round_start = false;
        if let Some(rs) = ev.sample.filter(|s| s.valid) {
            // The round ends once an ACKed segment was (re)sent after the
            // round began.
            if rs.prior_delivered_bytes > self.round_start_delivered {
                round_start = true;
                self.round_start_delivered = ev.delivered_bytes;
                self.round_count += 1;
                self.packet_conservation = false;
                let finished = std::mem::take(&mut self.round_max_bw);
                self.push_round(finished);
                log.push(now, "cca", "round_end", None, self.round_count as f64);
                log.push(now, "cca", "round_bw_mbps", None, finished * 8.0 / 1e6);
            }
            let bw = rs.rate_bytes_per_sec();
            if !rs.is_app_limited || bw >= self.btlbw() {
                self.round_max_bw = self.round_max_bw.max(bw);
            }
            if round_start {
                log.push(now, "cca", "btlbw_mbps", None, self.btlbw_bps() / 1e6);
            }
        }

        if round_start && self.mode == BbrMode::ProbeBw {
            self.cycle_index = (self.cycle_index + 1) % GAIN_CYCLE.len();
            log.push(now, "cca", "gain_cycle", None, self.cycle_index as f64);
        }
        if round_start && !self.filled_pipe {
            self.check_full_bw();
        }
        if self.mode == BbrMode::Startup && self.filled_pipe {
            self.set_mode(BbrMode::Drain, now, log);
        }
        if self.mode == BbrMode::Drain && ev.pipe_bytes <= self.bdp_bytes(1.0) {
            self.cycle_index = 0;
            self.set_mode(BbrMode::ProbeBw, now, log);
        }
        self.update_min_rtt(ev, round_start, log);
        self.set_pacing_rate();
        self.set_cwnd(ev);
    }

    fn check_full_bw(&mut self) {
        let bw = self.btlbw();
        if bw >= self.full_bw * FULL_BW_THRESH {
            self.full_bw = bw;
            self.full_bw_count = 0;
            return;
        }
        self.full_bw_count += 1;
        if self.full_bw_count >= FULL_BW_ROUNDS {
            self.filled_pipe = true;
        }
    }

    fn update_min_rtt(&mut self, ev: &AckEvent, round_start: bool, log: &mut EventLog) {
        let now = ev.now_us;
        let expired = now > self.min_rtt_stamp_us + MIN_RTT_WINDOW_US;
        if let Some(rtt) = ev.rtt_us {
            if self.min_rtt_us.is_none_or(|m| rtt <= m) || expired {
                self.min_rtt_us = Some(rtt);
                self.min_rtt_stamp_us = now;
            }
        }
        if expired && self.mode != BbrMode::ProbeRtt {
            self.enter_probe_rtt(now, log);
        }
        if self.mode != BbrMode::ProbeRtt {
            return;
        }
        match self.probe_rtt_done_us {
            None if ev.pipe_bytes <= MIN_CWND_SEGMENTS * self.mss => {
                self.probe_rtt_done_us = Some(now + PROBE_RTT_DURATION_US);
                self.probe_rtt_round_done = false;
                self.round_start_delivered = ev.delivered_bytes;
            }
            Some(done) => {
                if round_start {
                    self.probe_rtt_round_done = true;
                }
                if self.probe_rtt_round_done && now >= done {
                    self.min_rtt_stamp_us = now;
                    self.cwnd = self.cwnd.max(self.prior_cwnd);
                    let next = if self.filled_pipe {
                        BbrMode::ProbeBw
                    } else {
                        BbrMode::Startup
                    };
                    self.set_mode(next, now, log);
                }
            }
            None => {}
        }
    }

    fn enter_probe_rtt(&mut self, now: u64, log: &mut EventLog) {
        self.save_cwnd();
        self.probe_rtt_done_us = None;
        self.probe_rtt_round_done = false;
        self.set_mode(BbrMode::ProbeRtt, now, log);
    }

    fn set_mode(&mut self, mode: BbrMode, now: u64, log: &mut EventLog) {
        if self.mode != mode {
            self.mode = mode;
            log.push(now, "cca", "mode", None, mode.code());
        }
    }

    fn set_pacing_rate(&mut self) {
        let bw = self.btlbw();
        if bw <= 0.0 {
            return;
        }
        let rate = self.pacing_gain() * bw;
        if self.filled_pipe || rate > self.pacing_rate {
            self.pacing_rate = rate;
        }
    }

    fn set_cwnd(&mut self, ev: &AckEvent) {
        let acked = ev.newly_delivered_segments * self.mss;
        let target = self.bdp_bytes(self.cwnd_gain());
        if self.packet_conservation {
            self.cwnd = self.cwnd.max(ev.pipe_bytes + acked);
        } else if self.filled_pipe {
            self.cwnd = (self.cwnd + acked).min(target);
        } else if self.cwnd < target || ev.delivered_bytes < self.init_cwnd {
            self.cwnd += acked;
        }
        self.cwnd = self.cwnd.max(MIN_CWND_SEGMENTS * self.mss);
        if self.mode == BbrMode::ProbeRtt {
            self.cwnd = self.cwnd.min(MIN_CWND_SEGMENTS * self.mss);
        }
    }

    fn save_cwnd(&mut self) {
        if !self.in_recovery && self.mode != BbrMode::ProbeRtt {
            self.prior_cwnd = self.cwnd;
        } else {
            self.prior_cwnd = self.prior_cwnd.max(self.cwnd);
        }
    }

    /// Fast recovery: one round of packet conservation starting now.
    pub fn on_loss_detected(&mut self, pipe_bytes: u64, delivered_bytes: u64) {
        self.save_cwnd();
        self.in_recovery = true;
        self.packet_conservation = true;
        self.round_start_delivered = delivered_bytes;
        self.cwnd = pipe_bytes.max(self.mss);
    }

    pub fn on_recovery_exit(&mut self) {
        self.in_recovery = false;
        self.packet_conservation = false;
        self.cwnd = self.cwnd.max(self.prior_cwnd);
    }

    /// Timeout: the window restarts at one segment. The patched variant
    /// also enters ProbeRTT, so the window stays small until the ACKs
    /// still in flight have drained.
    pub fn on_rto(&mut self, now: u64, delivered_bytes: u64, log: &mut EventLog) {
        self.save_cwnd();
        self.in_recovery = true;
        self.packet_conservation = true;
        self.round_start_delivered = delivered_bytes;
        self.full_bw = 0.0;
        self.full_bw_count = 0;
        self.cwnd = self.mss;
        if self.patched && self.mode != BbrMode::ProbeRtt {
            self.enter_probe_rtt(now, log);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcp::RateSample;

    const MSS: u64 = 1500;

    fn ack(now: u64, prior: u64, delivered: u64, bw_bytes_per_s: f64, pipe: u64) -> AckEvent {
        let interval = 40_000u64;
        AckEvent {
            now_us: now,
            sample: Some(RateSample {
                delivered_delta_bytes: (bw_bytes_per_s * interval as f64 / 1e6) as u64,
                interval_us: interval,
                prior_delivered_bytes: prior,
                delivered_total_bytes: delivered,
                valid: true,
                ..Default::default()
            }),
            cum_acked_segments: 1,
            newly_delivered_segments: 1,
            rtt_us: Some(40_000),
            srtt_us: Some(40_000.0),
            min_rtt_us: Some(40_000),
            pipe_bytes: pipe,
            delivered_bytes: delivered,
            in_recovery: false,
            snd_una: 0,
            snd_nxt: 0,
        }
    }

    /// Drives a fresh BBR with one-ACK rounds at a fixed rate until it
    /// reaches ProbeBW.
    fn steady(patched: bool, bw: f64) -> (Bbr, u64, u64) {
        let mut b = Bbr::new(MSS, 10, patched);
        let mut log = EventLog::disabled();
        let mut delivered = 0;
        let mut now = 0;
        for _ in 0..40 {
            now += 40_000;
            let prior = delivered;
            delivered += MSS;
            b.on_ack(&ack(now, prior, delivered, bw, 0), &mut log);
        }
        (b, now, delivered)
    }

    #[test]
    fn max_filter_takes_max() {
        let mut b = Bbr::new(MSS, 10, false);
        for mbps in [10.0, 9.0, 8.0] {
            b.push_round(mbps * 1e6 / 8.0);
        }
        assert!((b.btlbw_bps() - 10e6).abs() < 1e-6);
    }

    #[test]
    fn filter_forgets_after_ten_rounds() {
        let mut b = Bbr::new(MSS, 10, false);
        b.push_round(1.5e6);
        for _ in 0..9 {
            b.push_round(1_000.0);
        }
        assert_eq!(b.btlbw(), 1.5e6);
        b.push_round(1_000.0);
        assert_eq!(b.btlbw(), 1_000.0);
        assert_eq!(b.filter_len(), 10);
    }

    #[test]
    fn reaches_probe_bw_and_cycles_in_order() {
        let (mut b, mut now, mut delivered) = steady(false, 1.5e6);
        assert_eq!(b.mode(), BbrMode::ProbeBw);
        assert!(b.filled_pipe());
        assert!((b.btlbw() - 1.5e6).abs() / 1.5e6 < 0.05);
        let mut log = EventLog::disabled();
        let mut seen = Vec::new();
        // rounds end on every second ACK here; sample the gain per round
        for _ in 0..32 {
            now += 40_000;
            let prior = delivered;
            delivered += MSS;
            let rounds = b.round_count();
            b.on_ack(&ack(now, prior, delivered, 1.5e6, 0), &mut log);
            if b.round_count() != rounds {
                seen.push(b.pacing_gain());
            }
        }
        let start = seen.iter().position(|&g| g == 1.25).unwrap();
        let cycle: Vec<f64> = seen[start..start + 8].to_vec();
        assert_eq!(cycle, GAIN_CYCLE.to_vec());
    }

    #[test]
    fn round_needs_prior_delivered_beyond_round_start() {
        let mut b = Bbr::new(MSS, 10, false);
        let mut log = EventLog::disabled();
        // prior_delivered equal to the round start does not end the round
        b.on_ack(&ack(1_000, 0, MSS, 1e6, 0), &mut log);
        assert_eq!(b.round_count(), 0);
        b.on_ack(&ack(2_000, MSS, 2 * MSS, 1e6, 0), &mut log);
        assert_eq!(b.round_count(), 1);
        b.on_ack(&ack(3_000, MSS, 3 * MSS, 1e6, 0), &mut log);
        assert_eq!(b.round_count(), 1);
    }

    #[test]
    fn unpatched_rto_keeps_mode() {
        let (mut b, now, delivered) = steady(false, 1.5e6);
        let mut log = EventLog::disabled();
        b.on_rto(now, delivered, &mut log);
        assert_eq!(b.mode(), BbrMode::ProbeBw);
        assert_eq!(b.cwnd_bytes(), MSS);
    }

    #[test]
    fn patched_rto_probes_rtt_then_returns() {
        let (mut b, mut now, mut delivered) = steady(true, 1.5e6);
        let bw_before = b.btlbw();
        let cwnd_before = b.cwnd_bytes();
        let mut log = EventLog::disabled();
        b.on_rto(now, delivered, &mut log);
        assert_eq!(b.mode(), BbrMode::ProbeRtt);
        // first ACK after the timeout: window clamped at four segments
        now += 40_000;
        let prior = delivered;
        delivered += MSS;
        b.on_ack(&ack(now, prior, delivered, 1.5e6, 0), &mut log);
        assert_eq!(b.mode(), BbrMode::ProbeRtt);
        assert_eq!(b.cwnd_bytes(), 4 * MSS);
        for _ in 0..10 {
            now += 40_000;
            let prior = delivered;
            delivered += MSS;
            b.on_ack(&ack(now, prior, delivered, 1.5e6, 0), &mut log);
        }
        assert_eq!(b.mode(), BbrMode::ProbeBw);
        assert_eq!(b.btlbw(), bw_before);
        assert!(b.cwnd_bytes() >= cwnd_before.min(b.bdp_bytes(2.0)));
    }

    #[test]
    fn cwnd_never_below_one_segment_and_pacing_positive() {
        let mut b = Bbr::new(MSS, 10, false);
        let mut log = EventLog::disabled();
        b.on_rto(0, 0, &mut log);
        assert!(b.cwnd_bytes() >= MSS);
        assert!(b.pacing_rate_bps() > 0.0 && b.pacing_rate_bps().is_finite());
    }
}

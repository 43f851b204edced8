use super::AckEvent;

pub const CUBIC_C: f64 = 0.4;
pub const CUBIC_BETA: f64 = 0.7;

const INITIAL_SSTHRESH_SEGMENTS: f64 = (1u64 << 31) as f64 / 1500.0;

/// HyStart (delay increase): only above this window, on the first few
/// RTT samples of each round.
const HYSTART_LOW_WINDOW: f64 = 16.0;
const HYSTART_MIN_SAMPLES: u32 = 8;
const HYSTART_DELAY_MIN_US: u64 = 4_000;
const HYSTART_DELAY_MAX_US: u64 = 16_000;
/// ACKs closer than this belong to one train.
const HYSTART_ACK_DELTA_US: u64 = 2_000;

/// CUBIC window growth, in segments.
#[derive(Clone, Debug)]
pub struct Cubic {
    mss: u64,
    cwnd: f64,
    ssthresh: f64,
    w_max: f64,
    k: f64,
    origin: f64,
    epoch_start_us: Option<u64>,
    /// Reno-equivalent window for the TCP-friendly region.
    w_est: f64,
    /// Skip the slow-start clamp: a large cumulative ACK inflates cwnd by
    /// the full segment count.
    buggy: bool,
    hystart: Hystart,
}

#[derive(Clone, Debug, Default)]
struct Hystart {
    round_end: u64,
    round_start_us: u64,
    last_ack_us: u64,
    round_min_rtt: Option<u64>,
    samples: u32,
}

impl Cubic {
    pub fn new(mss: u64, init_cwnd_segments: u64, buggy: bool) -> Self {
        Cubic {
            mss,
            cwnd: init_cwnd_segments.max(1) as f64,
            ssthresh: INITIAL_SSTHRESH_SEGMENTS,
            w_max: 0.0,
            k: 0.0,
            origin: 0.0,
            epoch_start_us: None,
            w_est: 0.0,
            buggy,
            hystart: Hystart::default(),
        }
    }

    pub fn with_window(mss: u64, cwnd_segments: f64, ssthresh_segments: f64, buggy: bool) -> Self {
        let mut c = Cubic::new(mss, 1, buggy);
        c.cwnd = cwnd_segments.max(1.0);
        c.ssthresh = ssthresh_segments;
        c
    }

    pub fn buggy(&self) -> bool {
        self.buggy
    }
    pub fn cwnd_segments(&self) -> f64 {
        self.cwnd
    }
    pub fn ssthresh_segments(&self) -> f64 {
        self.ssthresh
    }
    pub fn w_max(&self) -> f64 {
        self.w_max
    }
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn cwnd_bytes(&self) -> u64 {
        (self.cwnd.floor() as u64).max(1) * self.mss
    }

    pub fn on_ack(&mut self, ev: &AckEvent) {
        if ev.in_recovery || ev.cum_acked_segments == 0 {
            return;
        }
        let rtt = ev.min_rtt_us.or(ev.srtt_us.map(|s| s as u64)).unwrap_or(0);
        if self.cwnd < self.ssthresh {
            self.hystart_update(ev);
        }
        self.increase(ev.cum_acked_segments, ev.now_us, rtt);
    }

    /// Leaves slow start when a round's ACK train spans half the minimum
    /// RTT, or when the RTT of the current round rises clearly above the
    /// minimum.
    fn hystart_update(&mut self, ev: &AckEvent) {
        let now = ev.now_us;
        let h = &mut self.hystart;
        if ev.snd_una > h.round_end {
            h.round_end = ev.snd_nxt;
            h.round_start_us = now;
            h.last_ack_us = now;
            h.round_min_rtt = None;
            h.samples = 0;
        }
        let (Some(rtt), Some(min_rtt)) = (ev.rtt_us, ev.min_rtt_us) else {
            return;
        };
        if self.cwnd < HYSTART_LOW_WINDOW {
            return;
        }
        if now - h.last_ack_us <= HYSTART_ACK_DELTA_US {
            h.last_ack_us = now;
            if now - h.round_start_us > min_rtt / 2 {
                self.ssthresh = self.cwnd;
                return;
            }
        }
        if h.samples >= HYSTART_MIN_SAMPLES {
            return;
        }
        h.samples += 1;
        let round_min = h.round_min_rtt.map_or(rtt, |m| m.min(rtt));
        h.round_min_rtt = Some(round_min);
        if h.samples == HYSTART_MIN_SAMPLES {
            let thresh = (min_rtt / 8).clamp(HYSTART_DELAY_MIN_US, HYSTART_DELAY_MAX_US);
            if round_min >= min_rtt + thresh {
                self.ssthresh = self.cwnd;
            }
        }
    }

    pub fn increase(&mut self, segments_acked: u64, now_us: u64, rtt_us: u64) {
        let mut n = segments_acked as f64;
        if self.cwnd < self.ssthresh {
            if self.buggy {
                self.cwnd += n;
                return;
            }
            let step = n.min(self.ssthresh - self.cwnd);
            self.cwnd += step;
            n -= step;
            if n <= 0.0 {
                return;
            }
        }
        self.cwnd += self.avoidance_increment(n, now_us, rtt_us);
    }

    /// Congestion-avoidance growth for `n` ACKed segments. Starts a new
    /// epoch if none is running.
    fn avoidance_increment(&mut self, n: f64, now_us: u64, rtt_us: u64) -> f64 {
        if self.epoch_start_us.is_none() {
            self.epoch_start_us = Some(now_us);
            if self.w_max <= self.cwnd {
                self.k = 0.0;
                self.origin = self.cwnd;
            } else {
                self.k = ((self.w_max - self.cwnd) / CUBIC_C).cbrt();
                self.origin = self.w_max;
            }
            self.w_est = self.cwnd;
        }
        let epoch = self.epoch_start_us.unwrap_or(now_us);
        let t = (now_us - epoch + rtt_us) as f64 / 1e6;
        let target = self.origin + CUBIC_C * (t - self.k).powi(3);
        let mut cnt = if target > self.cwnd {
            self.cwnd / (target - self.cwnd)
        } else {
            100.0 * self.cwnd
        };
        self.w_est += n * 3.0 * (1.0 - CUBIC_BETA) / (1.0 + CUBIC_BETA) / self.cwnd;
        if self.w_est > self.cwnd {
            cnt = cnt.min(self.cwnd / (self.w_est - self.cwnd));
        }
        // at most one segment per two ACKed
        n / cnt.max(2.0)
    }

    pub fn on_loss_detected(&mut self) {
        self.w_max = self.cwnd;
        self.cwnd = (self.cwnd * CUBIC_BETA).max(2.0);
        self.ssthresh = self.cwnd;
        self.k = (self.w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt();
        self.reset_epoch();
    }

    pub fn on_rto(&mut self) {
        self.w_max = self.cwnd;
        self.ssthresh = (self.cwnd * CUBIC_BETA).max(2.0);
        self.k = (self.w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt();
        self.cwnd = 1.0;
        self.reset_epoch();
    }

    fn reset_epoch(&mut self) {
        self.epoch_start_us = None;
    }
}

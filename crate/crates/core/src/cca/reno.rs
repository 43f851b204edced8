use super::AckEvent;

const INITIAL_SSTHRESH: u64 = 1 << 31;

/// NewReno-style AIMD over a SACK scoreboard.
#[derive(Clone, Debug)]
pub struct Reno {
    mss: u64,
    cwnd: u64,
    ssthresh: u64,
    /// Bytes acknowledged toward the next congestion-avoidance increment.
    ca_acked: u64,
}

impl Reno {
    pub fn new(mss: u64, init_cwnd_segments: u64) -> Self {
        Reno {
            mss,
            cwnd: init_cwnd_segments.max(1) * mss,
            ssthresh: INITIAL_SSTHRESH,
            ca_acked: 0,
        }
    }

    pub fn with_window(mss: u64, cwnd_bytes: u64, ssthresh_bytes: u64) -> Self {
        Reno {
            mss,
            cwnd: cwnd_bytes.max(mss),
            ssthresh: ssthresh_bytes,
            ca_acked: 0,
        }
    }

    pub fn cwnd_bytes(&self) -> u64 {
        self.cwnd
    }

    pub fn ssthresh_bytes(&self) -> u64 {
        self.ssthresh
    }

    pub fn on_ack(&mut self, ev: &AckEvent) {
        if ev.in_recovery {
            return;
        }
        self.increase(ev.cum_acked_segments);
    }

    /// Slow start up to ssthresh, then one MSS per window of ACKed data.
    pub fn increase(&mut self, segments: u64) {
        let mut acked = segments * self.mss;
        if self.cwnd < self.ssthresh {
            let step = acked.min(self.ssthresh - self.cwnd);
            self.cwnd += step;
            acked -= step;
        }
        if acked == 0 {
            return;
        }
        self.ca_acked += acked;
        while self.ca_acked >= self.cwnd {
            self.ca_acked -= self.cwnd;
            self.cwnd += self.mss;
        }
    }

    pub fn on_loss_detected(&mut self) {
        self.ssthresh = (self.cwnd / 2).max(2 * self.mss);
        self.cwnd = self.ssthresh;
        self.ca_acked = 0;
    }

    pub fn on_recovery_exit(&mut self) {
        self.cwnd = self.cwnd.max(self.mss);
    }

    pub fn on_rto(&mut self, flight_bytes: u64) {
        self.ssthresh = (flight_bytes / 2).max(2 * self.mss);
        self.cwnd = self.mss;
        self.ca_acked = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MSS: u64 = 1500;

    #[test]
    fn fast_retransmit_halves() {
        let mut r = Reno::with_window(MSS, 8 * MSS, 1 << 31);
        r.on_loss_detected();
        assert_eq!(r.ssthresh_bytes(), 4 * MSS);
        assert_eq!(r.cwnd_bytes(), 4 * MSS);
    }

    #[test]
    fn rto_resets_to_one_segment() {
        let mut r = Reno::with_window(MSS, 20 * MSS, 1 << 31);
        r.on_rto(20 * MSS);
        assert_eq!(r.cwnd_bytes(), MSS);
        assert_eq!(r.ssthresh_bytes(), 10 * MSS);
        r.on_rto(MSS);
        assert_eq!(r.ssthresh_bytes(), 2 * MSS);
    }

    #[test]
    fn slow_start_then_linear() {
        let mut r = Reno::with_window(MSS, 4 * MSS, 6 * MSS);
        r.increase(4);
        // two segments of slow start reach ssthresh, two feed avoidance
        assert_eq!(r.cwnd_bytes(), 6 * MSS);
        for _ in 0..4 {
            r.increase(1);
        }
        assert_eq!(r.cwnd_bytes(), 7 * MSS);
    }

    #[test]
    fn no_growth_in_recovery() {
        let mut r = Reno::new(MSS, 10);
        let ev = AckEvent {
            cum_acked_segments: 5,
            in_recovery: true,
            ..Default::default()
        };
        r.on_ack(&ev);
        assert_eq!(r.cwnd_bytes(), 10 * MSS);
    }
}

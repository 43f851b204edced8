use std::collections::BTreeMap;

use super::{AckSegment, DEFAULT_DELAYED_ACK_US};

pub const MAX_SACK_BLOCKS: usize = 3;

/// Receiver with delayed ACKs (every second in-order segment, or on timer)
/// and SACK generation for out-of-order data.
#[derive(Clone, Debug)]
pub struct TcpReceiver {
    rcv_nxt: u64,
    /// Out-of-order segments, valued by arrival order for SACK recency.
    ooo: BTreeMap<u64, u64>,
    arrivals: u64,
    pending: u32,
    delack_deadline: Option<u64>,
    delack_timeout_us: u64,
    duplicates: u64,
}

impl Default for TcpReceiver {
    fn default() -> Self {
        Self::new(DEFAULT_DELAYED_ACK_US)
    }
}

impl TcpReceiver {
    pub fn new(delack_timeout_us: u64) -> Self {
        TcpReceiver {
            rcv_nxt: 0,
            ooo: BTreeMap::new(),
            arrivals: 0,
            pending: 0,
            delack_deadline: None,
            delack_timeout_us,
            duplicates: 0,
        }
    }

    pub fn cumulative_ack(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn delack_deadline(&self) -> Option<u64> {
        self.delack_deadline
    }

    /// Segments that arrived after they had already been received.
    pub fn duplicate_segments(&self) -> u64 {
        self.duplicates
    }

    pub fn on_data(&mut self, now: u64, seq: u64) -> Option<AckSegment> {
        self.arrivals += 1;
        if seq < self.rcv_nxt || self.ooo.contains_key(&seq) {
            self.duplicates += 1;
            return Some(self.ack_now());
        }
        if seq > self.rcv_nxt {
            self.ooo.insert(seq, self.arrivals);
            return Some(self.ack_now());
        }
        let had_gap = !self.ooo.is_empty();
        self.rcv_nxt += 1;
        while self.ooo.remove(&self.rcv_nxt).is_some() {
            self.rcv_nxt += 1;
        }
        if had_gap {
            return Some(self.ack_now());
        }
        self.pending += 1;
        if self.pending >= 2 {
            return Some(self.ack_now());
        }
        if self.delack_deadline.is_none() {
            self.delack_deadline = Some(now + self.delack_timeout_us);
        }
        None
    }

    /// Fires the delayed-ACK timer if it is due.
    pub fn on_delack_timer(&mut self, now: u64) -> Option<AckSegment> {
        match self.delack_deadline {
            Some(d) if d <= now && self.pending > 0 => Some(self.ack_now()),
            Some(d) if d <= now => {
                self.delack_deadline = None;
                None
            }
            _ => None,
        }
    }

    fn ack_now(&mut self) -> AckSegment {
        self.pending = 0;
        self.delack_deadline = None;
        AckSegment {
            cum_ack: self.rcv_nxt,
            sack_blocks: self.sack_blocks(),
        }
    }

    /// Contiguous out-of-order runs, most recently updated first.
    fn sack_blocks(&self) -> Vec<(u64, u64)> {
        let mut blocks: Vec<(u64, u64, u64)> = Vec::new();
        for (&seq, &order) in &self.ooo {
            match blocks.last_mut() {
                Some((_, end, recent)) if *end == seq => {
                    *end = seq + 1;
                    *recent = (*recent).max(order);
                }
                _ => blocks.push((seq, seq + 1, order)),
            }
        }
        blocks.sort_by_key(|b| std::cmp::Reverse(b.2));
        blocks
            .into_iter()
            .take(MAX_SACK_BLOCKS)
            .map(|(s, e, _)| (s, e))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_in_order_segments_one_ack() {
        let mut r = TcpReceiver::default();
        assert!(r.on_data(0, 0).is_none());
        let ack = r.on_data(10, 1).unwrap();
        assert_eq!(ack.cum_ack, 2);
        assert!(ack.sack_blocks.is_empty());
        assert!(r.delack_deadline().is_none());
    }

    #[test]
    fn lone_segment_acked_by_timer() {
        let mut r = TcpReceiver::default();
        assert!(r.on_data(1_000, 0).is_none());
        assert_eq!(r.delack_deadline(), Some(201_000));
        assert!(r.on_delack_timer(200_999).is_none());
        let ack = r.on_delack_timer(201_000).unwrap();
        assert_eq!(ack.cum_ack, 1);
        assert!(r.delack_deadline().is_none());
    }

    #[test]
    fn gap_gives_immediate_sack() {
        let mut r = TcpReceiver::default();
        r.on_data(0, 0);
        let ack = r.on_data(5, 2).unwrap();
        assert_eq!(ack.cum_ack, 1);
        assert_eq!(ack.sack_blocks, vec![(2, 3)]);
        // filling the hole is acknowledged at once
        let ack = r.on_data(9, 1).unwrap();
        assert_eq!(ack.cum_ack, 3);
        assert!(ack.sack_blocks.is_empty());
    }

    #[test]
    fn sack_blocks_recent_first_and_capped() {
        let mut r = TcpReceiver::default();
        for seq in [2, 4, 6, 8, 5] {
            r.on_data(0, seq);
        }
        let ack = r.on_data(0, 10).unwrap();
        assert_eq!(ack.cum_ack, 0);
        assert_eq!(ack.sack_blocks, vec![(10, 11), (4, 7), (8, 9)]);
        for (s, _) in &ack.sack_blocks {
            assert!(*s > ack.cum_ack);
        }
    }

    #[test]
    fn duplicates_are_counted_and_acked() {
        let mut r = TcpReceiver::default();
        r.on_data(0, 0);
        r.on_data(0, 1);
        let ack = r.on_data(0, 0).unwrap();
        assert_eq!(ack.cum_ack, 2);
        assert_eq!(r.duplicate_segments(), 1);
    }
}

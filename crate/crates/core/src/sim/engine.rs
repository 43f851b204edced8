use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{EventLog, FlowCounters, SimConfig, SimResult};
use crate::cca::{AckEvent, CcaState};
use crate::error::invalid;
use crate::tcp::{AckSegment, DataSegment, TcpReceiver, TcpSender, TcpState};
use crate::tracegen::{PacketTrace, TraceMode};
use crate::Result;

/// Same-time events run in this order.
const PRIO_LINK: u8 = 0;
const PRIO_ARRIVAL: u8 = 1;
const PRIO_TIMER: u8 = 2;
const PRIO_APP: u8 = 3;

#[derive(Clone, Debug)]
enum Event {
    LinkOpportunity,
    CrossArrival,
    SinkArrival(Packet),
    AckAtSender(AckSegment),
    RtoTimer,
    DelAckTimer,
    SenderWake,
}

#[derive(Clone, Copy, Debug)]
enum Packet {
    Data(DataSegment),
    Cross,
}

struct Entry {
    time: u64,
    prio: u8,
    order: u64,
    event: Event,
}

impl Entry {
    fn key(&self) -> (u64, u8, u64) {
        (self.time, self.prio, self.order)
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    now: u64,
    heap: BinaryHeap<Entry>,
    order: u64,
    queue: VecDeque<Packet>,
    sender: TcpSender,
    receiver: TcpReceiver,
    cca: CcaState,
    log: EventLog,
    rto_scheduled: Option<u64>,
    delack_scheduled: Option<u64>,
    wake_scheduled: Option<u64>,
    started: bool,
    snd: FlowCounters,
    cross: FlowCounters,
    sink_arrivals: Vec<u64>,
    delays: Vec<u64>,
    queue_series: Vec<(u64, u32)>,
    max_queue: usize,
}

/// Runs one simulation with the controller named in the config.
pub fn run_sim(config: &SimConfig, trace: &PacketTrace) -> Result<SimResult> {
    let cca = CcaState::new(config.cca, config.mtu_bytes, config.init_cwnd_segments);
    run_sim_with(config, trace, cca)
}

/// Runs one simulation with an explicit controller instance.
pub fn run_sim_with(config: &SimConfig, trace: &PacketTrace, cca: CcaState) -> Result<SimResult> {
    config.validate()?;
    if trace.mode != config.mode {
        return Err(invalid(format!(
            "trace mode {} does not match simulation mode {}",
            trace.mode, config.mode
        )));
    }
    if trace.duration_us != config.duration_us {
        return Err(invalid(format!(
            "trace duration {} us does not match simulation duration {} us",
            trace.duration_us, config.duration_us
        )));
    }
    let mut sim = Sim {
        cfg: config,
        now: 0,
        heap: BinaryHeap::new(),
        order: 0,
        queue: VecDeque::with_capacity(config.queue_capacity_pkts + 1),
        sender: TcpSender::new(config.mtu_bytes, config.min_rto_us),
        receiver: TcpReceiver::new(config.delayed_ack_us),
        cca,
        log: EventLog::new(config.event_log),
        rto_scheduled: None,
        delack_scheduled: None,
        wake_scheduled: None,
        started: false,
        snd: FlowCounters::default(),
        cross: FlowCounters::default(),
        sink_arrivals: Vec::new(),
        delays: Vec::new(),
        queue_series: vec![(0, 0)],
        max_queue: 0,
    };
    let capacity_mbps = sim.schedule_trace(trace);
    sim.schedule(config.sender_start_us, PRIO_APP, Event::SenderWake);
    sim.run();
    Ok(sim.finish(capacity_mbps))
}

impl Sim<'_> {
    fn schedule(&mut self, time: u64, prio: u8, event: Event) {
        self.order += 1;
        self.heap.push(Entry {
            time,
            prio,
            order: self.order,
            event,
        });
    }

    /// Puts every bottleneck slot and cross arrival on the queue up front.
    fn schedule_trace(&mut self, trace: &PacketTrace) -> f64 {
        let dur = self.cfg.duration_us;
        let mtu_bits = self.cfg.mtu_bytes as f64 * 8.0;
        match self.cfg.mode {
            TraceMode::Traffic => {
                let rate = self.cfg.bottleneck_rate_pps;
                for k in 1.. {
                    let t = (k as f64 * 1e6 / rate).round() as u64;
                    if t > dur {
                        break;
                    }
                    self.schedule(t, PRIO_LINK, Event::LinkOpportunity);
                }
                for &t in &trace.timestamps_us {
                    self.schedule(t, PRIO_ARRIVAL, Event::CrossArrival);
                }
                self.cfg.fixed_capacity_mbps()
            }
            TraceMode::Link => {
                for &t in &trace.timestamps_us {
                    self.schedule(t, PRIO_LINK, Event::LinkOpportunity);
                }
                trace.len() as f64 * mtu_bits / dur as f64
            }
        }
    }

    fn run(&mut self) {
        while let Some(entry) = self.heap.pop() {
            if entry.time > self.cfg.duration_us {
                self.heap.push(entry);
                break;
            }
            assert!(entry.time >= self.now, "event processed out of time order");
            self.now = entry.time;
            match entry.event {
                Event::LinkOpportunity => self.on_link_opportunity(),
                Event::CrossArrival => {
                    self.cross.sent += 1;
                    self.enqueue(Packet::Cross);
                }
                Event::SinkArrival(p) => self.on_sink_arrival(p),
                Event::AckAtSender(ack) => self.on_ack(ack),
                Event::RtoTimer => self.on_rto_timer(),
                Event::DelAckTimer => self.on_delack_timer(),
                Event::SenderWake => {
                    self.wake_scheduled = None;
                    self.started = true;
                    self.try_send();
                }
            }
        }
    }

    fn record_queue(&mut self) {
        let len = self.queue.len();
        self.max_queue = self.max_queue.max(len);
        self.queue_series.push((self.now, len as u32));
    }

    fn enqueue(&mut self, p: Packet) {
        if self.queue.len() >= self.cfg.queue_capacity_pkts {
            match p {
                Packet::Data(seg) => {
                    self.snd.dropped += 1;
                    self.log.push(
                        self.now,
                        "queue",
                        "drop_data",
                        Some(seg.seq),
                        self.queue.len() as f64,
                    );
                }
                Packet::Cross => {
                    self.cross.dropped += 1;
                    self.log.push(
                        self.now,
                        "queue",
                        "drop_cross",
                        None,
                        self.queue.len() as f64,
                    );
                }
            }
            return;
        }
        self.queue.push_back(p);
        self.record_queue();
    }

    fn on_link_opportunity(&mut self) {
        if let Some(p) = self.queue.pop_front() {
            self.record_queue();
            let t = self.now + self.cfg.prop_delay_us;
            self.schedule(t, PRIO_ARRIVAL, Event::SinkArrival(p));
        }
    }

    fn on_sink_arrival(&mut self, p: Packet) {
        match p {
            Packet::Cross => self.cross.delivered += 1,
            Packet::Data(seg) => {
                self.snd.delivered += 1;
                self.sink_arrivals.push(self.now);
                self.delays.push(self.now - seg.sent_time_us);
                if let Some(ack) = self.receiver.on_data(self.now, seg.seq) {
                    self.send_ack(ack);
                }
                self.sync_delack();
            }
        }
    }

    fn send_ack(&mut self, ack: AckSegment) {
        let t = self.now + self.cfg.prop_delay_us;
        self.schedule(t, PRIO_ARRIVAL, Event::AckAtSender(ack));
    }

    fn on_delack_timer(&mut self) {
        self.delack_scheduled = None;
        if let Some(ack) = self.receiver.on_delack_timer(self.now) {
            self.log
                .push(self.now, "tcp", "delayed_ack", None, ack.cum_ack as f64);
            self.send_ack(ack);
        }
        self.sync_delack();
    }

    fn sync_delack(&mut self) {
        if let Some(d) = self.receiver.delack_deadline() {
            if self.delack_scheduled.is_none_or(|s| d < s) {
                self.delack_scheduled = Some(d);
                self.schedule(d, PRIO_TIMER, Event::DelAckTimer);
            }
        }
    }

    fn on_ack(&mut self, ack: AckSegment) {
        let now = self.now;
        let out = self.sender.on_ack(now, &ack);
        if out.ignored {
            return;
        }
        self.log.push(now, "tcp", "ack", None, ack.cum_ack as f64);
        for &(s, e) in &ack.sack_blocks {
            self.log
                .push(now, "tcp", "sack_block", Some(s), (e - s) as f64);
        }
        if let Some(rs) = out.sample.filter(|s| s.is_retransmission) {
            self.log.push(
                now,
                "tcp",
                "retx_sample_prior_delivered",
                None,
                rs.prior_delivered_bytes as f64,
            );
        }
        if let Some(rs) = out.sample.filter(|s| s.valid) {
            self.log.push(
                now,
                "tcp",
                "rate_sample_mbps",
                None,
                rs.rate_bytes_per_sec() * 8.0 / 1e6,
            );
        }
        if out.exited_recovery {
            self.cca.on_recovery_exit(now, &mut self.log);
        }
        if out.entered_recovery {
            self.log.push(
                now,
                "tcp",
                "fast_retransmit",
                Some(self.sender.next_seq()),
                out.newly_lost as f64,
            );
            self.cca.on_loss_detected(
                now,
                self.sender.pipe_bytes(),
                self.sender.delivered_bytes(),
                &mut self.log,
            );
            // BBR sets its own recovery window
            if self.cca.as_bbr().is_none() {
                let fs = self.sender.pipe() + out.newly_lost + out.newly_delivered.len() as u64;
                let ssthresh = self.cca.cwnd_bytes() / self.cfg.mtu_bytes;
                self.sender.start_prr(ssthresh, fs);
            }
        }
        let rounds_before = self.cca.as_bbr().map(|b| b.round_count());
        let ev = AckEvent {
            now_us: now,
            sample: out.sample,
            cum_acked_segments: out.cum_acked_segments,
            newly_delivered_segments: out.newly_delivered.len() as u64,
            rtt_us: out.rtt_us,
            srtt_us: self.sender.srtt_us(),
            min_rtt_us: self.sender.min_rtt_us(),
            pipe_bytes: self.sender.pipe_bytes(),
            delivered_bytes: self.sender.delivered_bytes(),
            in_recovery: self.sender.state() != TcpState::Open,
            snd_una: self.sender.snd_una(),
            snd_nxt: self.sender.snd_nxt(),
        };
        self.cca.on_ack(&ev, &mut self.log);
        if self.sender.prr_active() {
            self.sender.prr_on_ack(out.newly_delivered.len() as u64);
        }
        if self.log.enabled() && rounds_before != self.cca.as_bbr().map(|b| b.round_count()) {
            self.log
                .push(now, "cca", "cwnd", None, self.cca.cwnd_bytes() as f64);
            let pacing = self.cca.pacing_rate_bps().unwrap_or(0.0);
            self.log.push(now, "cca", "pacing_mbps", None, pacing / 1e6);
        }
        self.try_send();
    }

    fn on_rto_timer(&mut self) {
        self.rto_scheduled = None;
        match self.sender.rto_deadline() {
            Some(d) if d <= self.now && self.sender.outstanding() > 0 => {
                let flight = self.sender.pipe_bytes();
                let out = self.sender.on_rto(self.now);
                self.log.push(
                    self.now,
                    "tcp",
                    "rto",
                    Some(self.sender.snd_una()),
                    out.rto_us as f64,
                );
                self.cca.on_rto(
                    self.now,
                    flight,
                    self.sender.delivered_bytes(),
                    &mut self.log,
                );
                self.try_send();
            }
            _ => self.sync_rto(),
        }
    }

    fn sync_rto(&mut self) {
        if let Some(d) = self.sender.rto_deadline() {
            if self.rto_scheduled.is_none_or(|s| d < s) {
                self.rto_scheduled = Some(d);
                self.schedule(d, PRIO_TIMER, Event::RtoTimer);
            }
        }
    }

    fn try_send(&mut self) {
        if !self.started {
            return;
        }
        while self.sender.window_open(self.cca.cwnd_bytes()) {
            let pacing = self.cca.pacing_rate_bps();
            if pacing.is_some() && self.now < self.sender.next_send_time_us() {
                let t = self.sender.next_send_time_us();
                if self.wake_scheduled.is_none_or(|s| t < s) {
                    self.wake_scheduled = Some(t);
                    self.schedule(t, PRIO_APP, Event::SenderWake);
                }
                break;
            }
            let seg = self.sender.transmit(self.now);
            self.snd.sent += 1;
            if seg.retransmission {
                self.log.push(
                    self.now,
                    "tcp",
                    "retransmit",
                    Some(seg.seq),
                    self.sender.delivered_bytes() as f64,
                );
            } else {
                self.log.push(
                    self.now,
                    "tcp",
                    "send",
                    Some(seg.seq),
                    self.sender.delivered_bytes() as f64,
                );
            }
            if let Some(rate) = pacing {
                let gap = (self.cfg.mtu_bytes as f64 * 8.0 * 1e6 / rate.max(1.0)).ceil() as u64;
                self.sender.set_next_send_time_us(self.now + gap.max(1));
            }
            self.enqueue(Packet::Data(seg));
        }
        self.sync_rto();
    }

    fn finish(self, capacity_mbps: f64) -> SimResult {
        let mut snd = self.snd;
        let mut cross = self.cross;
        for p in &self.queue {
            match p {
                Packet::Data(_) => snd.in_flight_at_end += 1,
                Packet::Cross => cross.in_flight_at_end += 1,
            }
        }
        for e in &self.heap {
            match e.event {
                Event::SinkArrival(Packet::Data(_)) => snd.in_flight_at_end += 1,
                Event::SinkArrival(Packet::Cross) => cross.in_flight_at_end += 1,
                _ => {}
            }
        }
        SimResult {
            duration_us: self.cfg.duration_us,
            mtu_bytes: self.cfg.mtu_bytes,
            capacity_mbps,
            sender: snd,
            cross,
            sink_arrivals_us: self.sink_arrivals,
            delay_samples_us: self.delays,
            queue_series: self.queue_series,
            max_queue_len: self.max_queue,
            tcp: self.sender.stats(),
            receiver_duplicates: self.receiver.duplicate_segments(),
            bbr_rounds: self.cca.as_bbr().map(|b| b.round_count()),
            events: self.log.into_rows(),
        }
    }
}

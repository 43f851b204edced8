use ccstress_core::cca::CcaKind;
use ccstress_core::scenarios::spurious_rto_trace;
use ccstress_core::sim::{run_sim, windowed_throughput, SimConfig};
use ccstress_core::tracegen::{PacketTrace, TraceMode};
use proptest::prelude::*;

const SECOND: u64 = 1_000_000;

fn short(cca: CcaKind, secs: u64) -> SimConfig {
    SimConfig {
        cca,
        duration_us: secs * SECOND,
        ..SimConfig::default()
    }
}

#[test]
fn burst_of_sixty_overflows_the_queue() {
    let trace =
        PacketTrace::from_timestamps(TraceMode::Traffic, 5 * SECOND, None, vec![SECOND; 60])
            .unwrap();
    let r = run_sim(&short(CcaKind::Reno, 5), &trace).unwrap();
    assert!(
        r.cross.dropped + r.sender.dropped >= 10,
        "{:?} {:?}",
        r.cross,
        r.sender
    );
    assert!(r.max_queue_len <= 50);
}

#[test]
fn uniform_link_matches_fixed_rate() {
    for cca in CcaKind::ALL {
        let fixed = run_sim(&short(cca, 30), &PacketTrace::empty_traffic(30 * SECOND, 0)).unwrap();
        let link_cfg = SimConfig {
            mode: TraceMode::Link,
            ..short(cca, 30)
        };
        let link = run_sim(
            &link_cfg,
            &PacketTrace::uniform_link(1000.0, 30 * SECOND).unwrap(),
        )
        .unwrap();
        let rel = (link.mean_throughput_mbps() - fixed.mean_throughput_mbps()).abs()
            / fixed.mean_throughput_mbps();
        assert!(rel < 0.01, "{}: {rel}", cca.name());
        // one packet per window is the quantum
        let quantum = 1500.0 * 8.0 / 0.5 / 1e6;
        for (a, b) in windowed_throughput(&fixed, 500_000)
            .iter()
            .zip(windowed_throughput(&link, 500_000))
        {
            assert!(
                (a - b).abs() <= quantum + 1e-9,
                "{}: {a} vs {b}",
                cca.name()
            );
        }
    }
}

#[test]
fn empty_trace_baselines_fill_the_link() {
    for cca in CcaKind::ALL {
        let r = run_sim(&short(cca, 30), &PacketTrace::empty_traffic(30 * SECOND, 0)).unwrap();
        assert!(
            r.utilization() >= 0.85,
            "{}: {}",
            cca.name(),
            r.utilization()
        );
    }
}

#[test]
fn event_log_is_time_ordered() {
    let cfg = SimConfig {
        event_log: true,
        ..short(CcaKind::Bbr, 5)
    };
    let trace =
        PacketTrace::from_timestamps(TraceMode::Traffic, 5 * SECOND, None, vec![2 * SECOND; 70])
            .unwrap();
    let r = run_sim(&cfg, &trace).unwrap();
    assert!(!r.events.is_empty());
    assert!(r.events.windows(2).all(|w| w[0].time_us <= w[1].time_us));
    assert!(r.events.iter().any(|e| e.event == "drop_cross"));
}

#[test]
fn spurious_rto_replay_shows_premature_round_ends() {
    let cfg = SimConfig {
        cca: CcaKind::Bbr,
        event_log: true,
        ..SimConfig::default()
    };
    let trace = spurious_rto_trace(&cfg, &[4 * SECOND], None).unwrap();
    let r = run_sim(&cfg, &trace).unwrap();
    let fr = r
        .events
        .iter()
        .find(|e| e.event == "fast_retransmit" && e.time_us > 4 * SECOND)
        .unwrap()
        .time_us;
    let rto = r
        .events
        .iter()
        .find(|e| e.event == "rto" && e.time_us > fr)
        .expect("timeout fires")
        .time_us;
    // the timeout follows the lost fast retransmission by the minimum RTO
    assert!(
        rto >= fr + SECOND && rto < fr + SECOND + 50_000,
        "{fr} {rto}"
    );
    assert!(
        r.receiver_duplicates > 0,
        "retransmissions after the timeout were spurious"
    );
    let premature = r
        .events
        .iter()
        .filter(|e| e.time_us > rto && e.event == "retx_sample_prior_delivered")
        .filter(|s| {
            r.events
                .iter()
                .any(|e| e.event == "round_end" && e.time_us == s.time_us)
        })
        .count();
    assert!(premature >= 1);
}

fn traffic_trace() -> impl Strategy<Value = (Vec<u64>, usize)> {
    (0usize..1500).prop_flat_map(|n| (prop::collection::vec(0..5 * SECOND, n), Just(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_order_and_determinism(
        (ts, _n) in traffic_trace(),
        cca in prop::sample::select(CcaKind::ALL.to_vec()),
        queue in 1usize..80,
    ) {
        let cfg = SimConfig { queue_capacity_pkts: queue, ..short(cca, 5) };
        let trace = PacketTrace::from_timestamps(TraceMode::Traffic, 5 * SECOND, None, ts).unwrap();
        let r = run_sim(&cfg, &trace).unwrap();
        prop_assert!(r.sender.conserved(), "{:?}", r.sender);
        prop_assert!(r.cross.conserved(), "{:?}", r.cross);
        prop_assert!(r.sender.delivered <= r.sender.sent);
        prop_assert_eq!(r.cross.sent, trace.len() as u64);
        prop_assert!(r.max_queue_len <= queue);
        prop_assert!(r.sink_arrivals_us.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.delay_samples_us.iter().all(|&d| d >= cfg.prop_delay_us));
        let again = run_sim(&cfg, &trace).unwrap();
        prop_assert_eq!(r.digest(), again.digest());
    }
}

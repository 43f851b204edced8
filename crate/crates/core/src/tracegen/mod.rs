//! Packet traces and the operators that create and evolve them.
//!
//! A [`PacketTrace`] is a sorted list of microsecond timestamps. In
//! [`TraceMode::Link`] each timestamp is a delivery opportunity at the
//! bottleneck; in [`TraceMode::Traffic`] each timestamp injects one
//! full-size cross-traffic packet at the gateway.

mod dist;
mod evolve;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::Result;

pub use dist::{dist_packets, verify_rate_band, BandCheck, Distribution, SplitTree};
pub use evolve::{anneal, crossover_traffic, crossover_traffic_at, mutate_link, mutate_traffic};
pub use io::{from_json, from_mahimahi, to_json, to_mahimahi};

/// Default annealing kernel width.
pub const DEFAULT_ANNEAL_SIGMA_US: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    Link,
    Traffic,
}

impl std::fmt::Display for TraceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceMode::Link => f.write_str("link"),
            TraceMode::Traffic => f.write_str("traffic"),
        }
    }
}

impl std::str::FromStr for TraceMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "link" => Ok(TraceMode::Link),
            "traffic" => Ok(TraceMode::Traffic),
            other => Err(invalid(format!("unknown trace mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketTrace {
    pub mode: TraceMode,
    pub duration_us: u64,
    pub packet_budget: usize,
    pub timestamps_us: Vec<u64>,
    /// Split decisions recorded by the generator. Dropped by operators that
    /// rewrite part of the trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_tree: Option<SplitTree>,
}

impl PacketTrace {
    /// An empty traffic trace (no cross traffic at all).
    pub fn empty_traffic(duration_us: u64, packet_budget: usize) -> Self {
        PacketTrace {
            mode: TraceMode::Traffic,
            duration_us,
            packet_budget,
            timestamps_us: Vec::new(),
            split_tree: None,
        }
    }

    /// Builds a trace from explicit timestamps; sorts them and sets the
    /// budget to the packet count for link traces.
    pub fn from_timestamps(
        mode: TraceMode,
        duration_us: u64,
        packet_budget: Option<usize>,
        mut timestamps_us: Vec<u64>,
    ) -> Result<Self> {
        timestamps_us.sort_unstable();
        let packet_budget = match (mode, packet_budget) {
            (TraceMode::Link, _) => timestamps_us.len(),
            (TraceMode::Traffic, Some(b)) => b,
            (TraceMode::Traffic, None) => timestamps_us.len(),
        };
        let trace = PacketTrace {
            mode,
            duration_us,
            packet_budget,
            timestamps_us,
            split_tree: None,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// A link trace with `rate_pps` evenly spaced opportunities, the k-th at
    /// `k * 1e6 / rate_pps` microseconds (k starting at 1).
    pub fn uniform_link(rate_pps: f64, duration_us: u64) -> Result<Self> {
        if rate_pps.is_nan() || rate_pps <= 0.0 {
            return Err(invalid("uniform link rate must be positive"));
        }
        let period = 1e6 / rate_pps;
        let mut ts = Vec::new();
        let mut k = 1u64;
        loop {
            let t = (k as f64 * period).round() as u64;
            if t > duration_us {
                break;
            }
            ts.push(t);
            k += 1;
        }
        PacketTrace::from_timestamps(TraceMode::Link, duration_us, None, ts)
    }

    pub fn len(&self) -> usize {
        self.timestamps_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_us.is_empty()
    }

    pub fn without_split_tree(mut self) -> Self {
        self.split_tree = None;
        self
    }

    /// Checks every representation invariant.
    pub fn validate(&self) -> Result<()> {
        if self.timestamps_us.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("trace timestamps are not sorted"));
        }
        if let Some(&last) = self.timestamps_us.last() {
            if last > self.duration_us {
                return Err(invalid(format!(
                    "timestamp {last} exceeds trace duration {}",
                    self.duration_us
                )));
            }
        }
        match self.mode {
            TraceMode::Link if self.timestamps_us.len() != self.packet_budget => {
                Err(invalid(format!(
                    "link trace has {} packets but a budget of {}",
                    self.timestamps_us.len(),
                    self.packet_budget
                )))
            }
            TraceMode::Traffic if self.timestamps_us.len() > self.packet_budget => {
                Err(invalid(format!(
                    "traffic trace has {} packets, over its budget of {}",
                    self.timestamps_us.len(),
                    self.packet_budget
                )))
            }
            _ => Ok(()),
        }?;
        if let Some(tree) = &self.split_tree {
            if tree.replay(0, self.duration_us) != self.timestamps_us {
                return Err(invalid("split tree does not reproduce the timestamps"));
            }
        }
        Ok(())
    }
}

/// Parameters of the packet distribution generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Intervals shorter than this skip the rate-band check.
    pub k_agg_us: u64,
    /// (low, high) multipliers bounding each half's rate against its parent.
    pub rate_band: (f64, f64),
    pub max_split_retries: u32,
    pub rng_seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            k_agg_us: 50_000,
            rate_band: (0.5, 2.0),
            max_split_retries: 64,
            rng_seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_agg_us == 0 {
            return Err(invalid("gen.k_agg_us must be positive"));
        }
        let (lo, hi) = self.rate_band;
        if !(lo > 0.0 && lo < 1.0 && hi > 1.0 && hi.is_finite()) {
            return Err(invalid("gen.rate_band must satisfy 0 < low < 1 < high"));
        }
        Ok(())
    }
}

/// Initial link trace: `round(avg_rate_pps * duration)` delivery
/// opportunities placed with the rate band enforced.
pub fn gen_initial_link_trace(
    avg_rate_pps: f64,
    duration_us: u64,
    params: &GenParams,
    rng: &mut crate::rng::Rng,
) -> Result<PacketTrace> {
    if avg_rate_pps <= 0.0 || !avg_rate_pps.is_finite() {
        return Err(invalid("average link rate must be positive"));
    }
    params.validate()?;
    let budget = (avg_rate_pps * duration_us as f64 / 1e6).round() as usize;
    if budget == 0 {
        return Err(invalid("link trace would carry zero packets"));
    }
    let dist = dist_packets(budget, 0, duration_us, params, BandCheck::Enforced, rng)?;
    Ok(PacketTrace {
        mode: TraceMode::Link,
        duration_us,
        packet_budget: budget,
        timestamps_us: dist.timestamps,
        split_tree: Some(dist.tree),
    })
}

/// Initial traffic trace: a uniformly drawn packet count in
/// `0..=max_packets`, placed without local rate constraints.
pub fn gen_initial_traffic_trace(
    max_packets: usize,
    duration_us: u64,
    params: &GenParams,
    rng: &mut crate::rng::Rng,
) -> Result<PacketTrace> {
    use rand::Rng as _;
    if duration_us == 0 {
        return Err(invalid("trace duration must be positive"));
    }
    let count = rng.gen_range(0..=max_packets);
    let dist = dist_packets(count, 0, duration_us, params, BandCheck::Disabled, rng)?;
    Ok(PacketTrace {
        mode: TraceMode::Traffic,
        duration_us,
        packet_budget: max_packets,
        timestamps_us: dist.timestamps,
        split_tree: Some(dist.tree),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn link_trace_budget_arithmetic() {
        let p = GenParams::default();
        let t = gen_initial_link_trace(1000.0, 1_000_000, &p, &mut rng_from_seed(1)).unwrap();
        assert_eq!(t.len(), 1000);
        assert_eq!(t.packet_budget, 1000);
        t.validate().unwrap();

        let t = gen_initial_link_trace(1000.0, 5_000_000, &p, &mut rng_from_seed(2)).unwrap();
        assert_eq!(t.len(), 5000);
        // 5000 packets of 1500 B over 5 s
        let mbps = t.len() as f64 * 1500.0 * 8.0 / 5.0 / 1e6;
        assert!((mbps - 12.0).abs() < 1e-9);
    }

    #[test]
    fn link_trace_is_deterministic() {
        let p = GenParams::default();
        let a = gen_initial_link_trace(1000.0, 2_000_000, &p, &mut rng_from_seed(9)).unwrap();
        let b = gen_initial_link_trace(1000.0, 2_000_000, &p, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_budget_link_trace_is_rejected() {
        let p = GenParams::default();
        let err = gen_initial_link_trace(0.1, 1_000_000, &p, &mut rng_from_seed(1));
        assert!(err.is_err());
        assert!(gen_initial_link_trace(-5.0, 1_000_000, &p, &mut rng_from_seed(1)).is_err());
    }

    #[test]
    fn traffic_trace_bounds() {
        let p = GenParams::default();
        let t = gen_initial_traffic_trace(0, 5_000_000, &p, &mut rng_from_seed(3)).unwrap();
        assert!(t.is_empty());
        for seed in 0..1000 {
            let t =
                gen_initial_traffic_trace(500, 5_000_000, &p, &mut rng_from_seed(seed)).unwrap();
            assert!(t.len() <= 500);
            assert!(t.timestamps_us.iter().all(|&x| x <= 5_000_000));
            t.validate().unwrap();
        }
        let a = gen_initial_traffic_trace(500, 5_000_000, &p, &mut rng_from_seed(4)).unwrap();
        let b = gen_initial_traffic_trace(500, 5_000_000, &p, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_params_validation() {
        let mut p = GenParams::default();
        p.validate().unwrap();
        p.rate_band = (1.2, 2.0);
        assert!(p.validate().is_err());
        p.rate_band = (0.5, 2.0);
        p.k_agg_us = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn uniform_link_spacing() {
        let t = PacketTrace::uniform_link(1000.0, 10_000).unwrap();
        assert_eq!(
            t.timestamps_us,
            (1..=10).map(|k| k * 1000).collect::<Vec<_>>()
        );
    }

    #[test]
    fn validate_catches_violations() {
        let mut t = PacketTrace::uniform_link(1000.0, 10_000).unwrap();
        t.timestamps_us.swap(0, 1);
        assert!(t.validate().is_err());
        let mut t = PacketTrace::empty_traffic(1000, 1);
        t.timestamps_us = vec![1, 2];
        assert!(t.validate().is_err());
        t.timestamps_us = vec![2000];
        t.packet_budget = 5;
        assert!(t.validate().is_err());
    }
}

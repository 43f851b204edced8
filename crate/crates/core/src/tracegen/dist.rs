use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::GenParams;
use crate::error::invalid;
use crate::rng::Rng;
use crate::Result;

/// Whether the recursive splitter enforces the rate band on long intervals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandCheck {
    Enforced,
    Disabled,
}

/// One recorded decision of the recursive splitter.
///
/// Leaves are interpreted against the interval they cover: zero packets
/// yield nothing, one packet sits at the floor midpoint, and more than one
/// packet in an interval of at most 1 µs all land on its start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitTree {
    Leaf {
        count: usize,
    },
    Split {
        t_split: u64,
        num_left: usize,
        /// Set when the retry budget ran out and the midpoint split was used.
        forced: bool,
        left: Box<SplitTree>,
        right: Box<SplitTree>,
    },
}

impl SplitTree {
    pub fn count(&self) -> usize {
        match self {
            SplitTree::Leaf { count } => *count,
            SplitTree::Split { left, right, .. } => left.count() + right.count(),
        }
    }

    /// Regenerates the timestamps this tree describes over `[start, end]`.
    pub fn replay(&self, start: u64, end: u64) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.count());
        self.replay_into(start, end, &mut out);
        out
    }

    fn replay_into(&self, start: u64, end: u64, out: &mut Vec<u64>) {
        match self {
            SplitTree::Leaf { count: 0 } => {}
            SplitTree::Leaf { count: 1 } => out.push(start + (end - start) / 2),
            SplitTree::Leaf { count } => out.extend(std::iter::repeat_n(start, *count)),
            SplitTree::Split {
                t_split,
                left,
                right,
                ..
            } => {
                left.replay_into(start, *t_split, out);
                right.replay_into(*t_split, end, out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub timestamps: Vec<u64>,
    pub tree: SplitTree,
}

/// Places `num` packets in `[start, end)` by recursive bisection.
///
/// Each node draws a split time and a left count uniformly; for intervals of
/// at least `k_agg_us` the draw is rejected unless both halves' average rates
/// fall inside `rate_band` times the node's rate. After
/// `max_split_retries` rejections the node splits at its midpoint with
/// `num / 2` packets on the left.
pub fn dist_packets(
    num: usize,
    start: u64,
    end: u64,
    params: &GenParams,
    band: BandCheck,
    rng: &mut Rng,
) -> Result<Distribution> {
    if start >= end {
        return Err(invalid(format!(
            "packet distribution needs start < end (got {start}..{end})"
        )));
    }
    params.validate()?;
    let mut timestamps = Vec::with_capacity(num);
    let tree = split(num, start, end, params, band, rng, &mut timestamps);
    Ok(Distribution { timestamps, tree })
}

fn split(
    num: usize,
    start: u64,
    end: u64,
    params: &GenParams,
    band: BandCheck,
    rng: &mut Rng,
    out: &mut Vec<u64>,
) -> SplitTree {
    if num == 0 {
        return SplitTree::Leaf { count: 0 };
    }
    if num == 1 {
        out.push(start + (end - start) / 2);
        return SplitTree::Leaf { count: 1 };
    }
    if end - start <= 1 {
        out.extend(std::iter::repeat_n(start, num));
        return SplitTree::Leaf { count: num };
    }

    let len = end - start;
    let checked = band == BandCheck::Enforced && len >= params.k_agg_us;
    let (lo, hi) = params.rate_band;
    let rate = num as f64 / len as f64;

    let mut chosen = None;
    for _ in 0..=params.max_split_retries {
        let t_split = rng.gen_range(start + 1..end);
        let num_left = rng.gen_range(0..=num);
        if !checked {
            chosen = Some((t_split, num_left, false));
            break;
        }
        let lrate = num_left as f64 / (t_split - start) as f64;
        let rrate = (num - num_left) as f64 / (end - t_split) as f64;
        if lrate > hi * rate || rrate > hi * rate {
            continue;
        }
        if lrate < lo * rate || rrate < lo * rate {
            continue;
        }
        chosen = Some((t_split, num_left, false));
        break;
    }
    let (t_split, num_left, forced) = chosen.unwrap_or((start + len / 2, num / 2, true));

    let left = split(num_left, start, t_split, params, band, rng, out);
    let right = split(num - num_left, t_split, end, params, band, rng, out);
    SplitTree::Split {
        t_split,
        num_left,
        forced,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Walks a recorded tree and checks every node spanning at least
/// `k_agg_us` against the rate band. Returns the first offending node.
pub fn verify_rate_band(
    tree: &SplitTree,
    start: u64,
    end: u64,
    params: &GenParams,
) -> std::result::Result<(), String> {
    let SplitTree::Split {
        t_split,
        num_left,
        left,
        right,
        ..
    } = tree
    else {
        return Ok(());
    };
    let num = tree.count();
    if end - start >= params.k_agg_us {
        let (lo, hi) = params.rate_band;
        let rate = num as f64 / (end - start) as f64;
        let lrate = *num_left as f64 / (t_split - start) as f64;
        let rrate = (num - num_left) as f64 / (end - t_split) as f64;
        let ok = |r: f64| r >= lo * rate && r <= hi * rate;
        if !ok(lrate) || !ok(rrate) {
            return Err(format!(
                "node [{start}, {end}) split at {t_split}: rates {lrate:.3e}/{rrate:.3e} vs {rate:.3e}"
            ));
        }
    }
    verify_rate_band(left, start, *t_split, params)?;
    verify_rate_band(right, *t_split, end, params)
}

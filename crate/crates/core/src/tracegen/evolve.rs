use rand::Rng as _;

use super::{dist_packets, BandCheck, GenParams, PacketTrace, TraceMode};
use crate::error::invalid;
use crate::rng::Rng;
use crate::Result;

/// Picks a uniform split time and a side, then redistributes the packets
/// on that side. The packet count is kept and the band stays enforced.
pub fn mutate_link(trace: &PacketTrace, params: &GenParams, rng: &mut Rng) -> Result<PacketTrace> {
    if trace.mode != TraceMode::Link {
        return Err(invalid("mutate_link needs a link trace"));
    }
    mutate_segment(trace, params, BandCheck::Enforced, rng, |seg, _, _| seg)
}

/// Like [`mutate_link`] but the chosen segment gets a fresh packet count,
/// uniform over what the budget leaves after the untouched side.
pub fn mutate_traffic(
    trace: &PacketTrace,
    params: &GenParams,
    rng: &mut Rng,
) -> Result<PacketTrace> {
    if trace.mode != TraceMode::Traffic {
        return Err(invalid("mutate_traffic needs a traffic trace"));
    }
    let budget = trace.packet_budget;
    mutate_segment(
        trace,
        params,
        BandCheck::Disabled,
        rng,
        move |_, outside, rng| rng.gen_range(0..=budget.saturating_sub(outside)),
    )
}

fn mutate_segment(
    trace: &PacketTrace,
    params: &GenParams,
    band: BandCheck,
    rng: &mut Rng,
    new_count: impl FnOnce(usize, usize, &mut Rng) -> usize,
) -> Result<PacketTrace> {
    let duration = trace.duration_us;
    let t_split = rng.gen_range(0..=duration);
    let take_left = rng.gen_bool(0.5);
    let ts = &trace.timestamps_us;
    let cut = ts.partition_point(|&t| t < t_split);

    let (seg_start, seg_end, seg_range) = if take_left {
        (0, t_split, 0..cut)
    } else {
        (t_split, duration, cut..ts.len())
    };
    let seg_count = seg_range.len();
    let outside = ts.len() - seg_count;
    let count = new_count(seg_count, outside, rng);

    let mut out = trace.clone().without_split_tree();
    if count == 0 && seg_count == 0 {
        return Ok(out);
    }
    let fresh = if count == 0 {
        Vec::new()
    } else if seg_end <= seg_start {
        // Nowhere to place packets; leave the trace as it was.
        return Ok(out);
    } else {
        dist_packets(count, seg_start, seg_end, params, band, rng)?.timestamps
    };
    out.timestamps_us.splice(seg_range, fresh);
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

/// Traffic crossover with a random cut fraction and parent order.
pub fn crossover_traffic(a: &PacketTrace, b: &PacketTrace, rng: &mut Rng) -> Result<PacketTrace> {
    let fraction: f64 = rng.gen();
    let a_first = rng.gen_bool(0.5);
    crossover_traffic_at(a, b, fraction, a_first)
}

/// Deterministic core of [`crossover_traffic`].
///
/// The first parent contributes its first `ceil(fraction * len)` packets; the
/// second contributes every packet strictly after the first parent's last
/// kept timestamp (all of it when nothing was kept). Overflow beyond the
/// budget is cut from the end.
pub fn crossover_traffic_at(
    a: &PacketTrace,
    b: &PacketTrace,
    fraction: f64,
    a_first: bool,
) -> Result<PacketTrace> {
    if a.mode != TraceMode::Traffic || b.mode != TraceMode::Traffic {
        return Err(invalid("crossover is only defined for traffic traces"));
    }
    if a.duration_us != b.duration_us || a.packet_budget != b.packet_budget {
        return Err(invalid("crossover parents differ in duration or budget"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid("crossover fraction must lie in [0, 1]"));
    }
    let (first, second) = if a_first { (a, b) } else { (b, a) };
    let keep = ((fraction * first.len() as f64).ceil() as usize).min(first.len());
    let mut ts: Vec<u64> = first.timestamps_us[..keep].to_vec();
    match ts.last().copied() {
        Some(cut) => ts.extend(second.timestamps_us.iter().copied().filter(|&t| t > cut)),
        None => ts.extend_from_slice(&second.timestamps_us),
    }
    ts.truncate(a.packet_budget);
    Ok(PacketTrace {
        mode: TraceMode::Traffic,
        duration_us: a.duration_us,
        packet_budget: a.packet_budget,
        timestamps_us: ts,
        split_tree: None,
    })
}

/// Gaussian smoothing of the inter-packet gaps.
///
/// The gaps between consecutive packets are convolved with a Gaussian of
/// standard deviation `sigma_us` (converted to gap indices through the mean
/// gap, truncated at three deviations, renormalised at the edges), then
/// rescaled so the first and last timestamps stay put. Count and duration are
/// preserved; `sigma_us == 0` is the identity.
pub fn anneal(trace: &PacketTrace, sigma_us: f64) -> Result<PacketTrace> {
    if sigma_us < 0.0 || !sigma_us.is_finite() {
        return Err(invalid("annealing sigma must be a non-negative number"));
    }
    let ts = &trace.timestamps_us;
    let mut out = trace.clone().without_split_tree();
    if sigma_us == 0.0 || ts.len() < 3 {
        return Ok(out);
    }
    let first = ts[0];
    let last = ts[ts.len() - 1];
    let span = (last - first) as f64;
    let gaps: Vec<f64> = ts.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let mean_gap = span / gaps.len() as f64;
    if mean_gap <= 0.0 {
        return Ok(out);
    }
    let sigma_idx = sigma_us / mean_gap;
    let half = ((3.0 * sigma_idx).ceil() as usize).min(gaps.len());
    if half == 0 {
        return Ok(out);
    }
    let kernel: Vec<f64> = (0..=half)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma_idx * sigma_idx)).exp())
        .collect();

    let n = gaps.len();
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, g) in gaps.iter().enumerate().take(hi + 1).skip(lo) {
                let w = kernel[i.abs_diff(j)];
                acc += w * g;
                wsum += w;
            }
            acc / wsum
        })
        .collect();
    let total: f64 = smoothed.iter().sum();
    let scale = if total > 0.0 { span / total } else { 0.0 };

    let mut cum = 0.0;
    out.timestamps_us[0] = first;
    for (i, g) in smoothed.iter().enumerate() {
        cum += g * scale;
        let t = (first as f64 + cum).round() as u64;
        out.timestamps_us[i + 1] = t.clamp(first, last);
    }
    out.timestamps_us[ts.len() - 1] = last;
    // Rounding cannot reorder a monotone cumulative sum, but sort anyway to
    // keep the invariant independent of float subtleties.
    out.timestamps_us.sort_unstable();
    Ok(out)
}

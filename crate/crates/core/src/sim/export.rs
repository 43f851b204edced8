use std::fmt::Write as _;

use super::{windowed_throughput, SimResult};

pub const THROUGHPUT_HEADER: &str = "window_start_us,window_end_us,throughput_mbps";
pub const DELAY_HEADER: &str = "arrival_us,delay_us";
pub const QUEUE_HEADER: &str = "time_us,queue_len";

pub fn throughput_csv(result: &SimResult, window_us: u64) -> String {
    let mut out = format!("{THROUGHPUT_HEADER}\n");
    for (i, mbps) in windowed_throughput(result, window_us).iter().enumerate() {
        let start = i as u64 * window_us;
        let end = (start + window_us).min(result.duration_us);
        let _ = writeln!(out, "{start},{end},{mbps:.6}");
    }
    out
}

pub fn delay_csv(result: &SimResult) -> String {
    let mut out = format!("{DELAY_HEADER}\n");
    for (t, d) in result.sink_arrivals_us.iter().zip(&result.delay_samples_us) {
        let _ = writeln!(out, "{t},{d}");
    }
    out
}

pub fn queue_csv(result: &SimResult) -> String {
    let mut out = format!("{QUEUE_HEADER}\n");
    for (t, q) in &result.queue_series {
        let _ = writeln!(out, "{t},{q}");
    }
    out
}

use super::{PacketTrace, TraceMode};
use crate::error::invalid;
use crate::{Error, Result};

/// Native JSON: `{mode, duration_us, packet_budget, timestamps_us}`.
pub fn to_json(trace: &PacketTrace) -> Result<String> {
    let mut plain = trace.clone();
    plain.split_tree = None;
    Ok(serde_json::to_string_pretty(&plain)?)
}

pub fn from_json(text: &str) -> Result<PacketTrace> {
    let trace: PacketTrace = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    trace.validate()?;
    Ok(trace)
}

/// MahiMahi link file: one line per delivery opportunity, holding the
/// opportunity time in whole milliseconds (rounded to nearest).
pub fn to_mahimahi(trace: &PacketTrace) -> Result<String> {
    if trace.mode != TraceMode::Link {
        return Err(invalid(
            "only link traces describe delivery opportunities; refusing to export a traffic trace",
        ));
    }
    let mut out = String::with_capacity(trace.len() * 6);
    for &t in &trace.timestamps_us {
        out.push_str(&((t + 500) / 1000).to_string());
        out.push('\n');
    }
    Ok(out)
}

/// Parses a MahiMahi link file. Blank lines are skipped. The duration
/// defaults to the last opportunity when not given.
pub fn from_mahimahi(text: &str, duration_us: Option<u64>) -> Result<PacketTrace> {
    let mut ts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let ms: u64 = line.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("expected an integer millisecond, got `{line}`"),
        })?;
        if let Some(&prev) = ts.last() {
            if ms * 1000 < prev {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "timestamps must be non-decreasing".into(),
                });
            }
        }
        ts.push(ms * 1000);
    }
    let duration = match duration_us {
        Some(d) => d,
        None => ts.last().copied().unwrap_or(0),
    };
    PacketTrace::from_timestamps(TraceMode::Link, duration, None, ts)
}

use std::fmt::Write as _;

/// One row of the simulation event log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub time_us: u64,
    /// `tcp`, `cca`, `queue` or `cross`.
    pub category: &'static str,
    pub event: &'static str,
    pub seq: Option<u64>,
    pub value: f64,
}

/// Append-only event log that costs nothing when disabled.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    enabled: bool,
    rows: Vec<LogRow>,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        EventLog {
            enabled,
            rows: Vec::new(),
        }
    }

    pub fn disabled() -> Self {
        Self::new(false)
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    #[inline]
    pub fn push(
        &mut self,
        time_us: u64,
        category: &'static str,
        event: &'static str,
        seq: Option<u64>,
        value: f64,
    ) {
        if self.enabled {
            self.rows.push(LogRow {
                time_us,
                category,
                event,
                seq,
                value,
            });
        }
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<LogRow> {
        self.rows
    }

    pub fn count(&self, category: &str, event: &str) -> usize {
        self.rows
            .iter()
            .filter(|r| r.category == category && r.event == event)
            .count()
    }
}

pub const EVENT_LOG_HEADER: &str = "time_us,category,event,seq,value";

pub fn rows_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 32 + 40);
    out.push_str(EVENT_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let seq = r.seq.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.time_us, r.category, r.event, seq, r.value
        );
    }
    out
}

//! Flat `key = value` configuration files.
//!
//! Keys carry a section prefix: `ga.`, `sim.`, `gen.` or `cca.` (the
//! latter is shorthand for the algorithm under test, `cca.kind`). Values
//! are JSON scalars or arrays; bare words are read as strings and
//! comma-separated words as lists. `#` starts a comment.

use std::fmt::Write as _;

use ccstress_core::fuzzer::CampaignConfig;
use serde_json::Value;

const SECTIONS: [&str; 3] = ["ga", "sim", "gen"];

/// Applies `key = value` assignments, in order, on top of `base`.
pub fn apply<'a>(
    base: &CampaignConfig,
    assignments: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<CampaignConfig, String> {
    let mut tree = serde_json::to_value(base).map_err(|e| e.to_string())?;
    for (key, raw) in assignments {
        let (section, field) = resolve(key)?;
        let slot = tree
            .get_mut(section)
            .and_then(Value::as_object_mut)
            .and_then(|m| m.get_mut(field))
            .ok_or_else(|| format!("unknown config key `{key}`"))?;
        *slot = parse_value(raw, slot);
        serde_json::from_value::<CampaignConfig>(tree.clone())
            .map_err(|e| format!("config key `{key}`: {e}"))?;
    }
    serde_json::from_value(tree).map_err(|e| e.to_string())
}

/// Parses a config file into assignments; errors carry 1-based line numbers.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Renders a config as a file that [`parse_file`] and [`apply`] read back
/// to the same value.
pub fn render(cfg: &CampaignConfig) -> String {
    let tree = serde_json::to_value(cfg).expect("config serialises");
    let mut out = String::new();
    for section in SECTIONS {
        let Some(fields) = tree.get(section).and_then(Value::as_object) else {
            continue;
        };
        for (field, value) in fields {
            let key = if (section, field.as_str()) == ("sim", "cca") {
                "cca.kind".to_string()
            } else {
                format!("{section}.{field}")
            };
            let _ = writeln!(out, "{key} = {}", render_value(value));
        }
    }
    out
}

fn resolve(key: &str) -> Result<(&'static str, &str), String> {
    let (section, field) = key
        .split_once('.')
        .ok_or_else(|| format!("config key `{key}` lacks a section prefix"))?;
    if section == "cca" {
        return match field {
            "kind" => Ok(("sim", "cca")),
            _ => Err(format!("unknown config key `{key}`")),
        };
    }
    SECTIONS
        .iter()
        .find(|s| **s == section)
        .map(|s| (*s, field))
        .ok_or_else(|| format!("unknown config section in `{key}`"))
}

fn parse_value(raw: &str, current: &Value) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    let words = || raw.split(',').map(|w| w.trim()).filter(|w| !w.is_empty());
    match current {
        Value::Array(_) => Value::Array(
            words()
                .map(|w| serde_json::from_str(w).unwrap_or_else(|_| Value::String(w.into())))
                .collect(),
        ),
        _ => Value::String(raw.to_string()),
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render_value).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccstress_core::cca::CcaKind;
    use ccstress_core::tracegen::TraceMode;

    #[test]
    fn render_round_trips() {
        let mut cfg = CampaignConfig::default();
        cfg.sim.cca = CcaKind::BbrPatched;
        cfg.sim.mode = TraceMode::Link;
        cfg.ga.realism_ccas = vec![CcaKind::Reno, CcaKind::Bbr];
        cfg.gen.rate_band = (0.25, 3.0);
        let text = render(&cfg);
        let pairs = parse_file(&text).unwrap();
        let back = apply(
            &CampaignConfig::default(),
            pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())),
        )
        .unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = apply(&CampaignConfig::default(), [("ga.population_size", "lots")]).unwrap_err();
        assert!(err.contains("ga.population_size"), "{err}");
        let err = apply(&CampaignConfig::default(), [("sim.bogus", "1")]).unwrap_err();
        assert!(err.contains("sim.bogus"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let pairs = parse_file("# header\n\nga.seed = 7 # trailing\n").unwrap();
        assert_eq!(pairs, [("ga.seed".to_string(), "7".to_string())]);
        assert!(parse_file("ga.seed 7").unwrap_err().contains("line 1"));
    }
}

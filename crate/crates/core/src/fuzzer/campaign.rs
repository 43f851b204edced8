//! Multi-island campaigns with per-generation checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    breed, evaluate_all, finite_or_null, migrate, Evaluator, GaParams, Island, ScoredTrace,
    SimEvaluator,
};
use crate::error::{invalid, Error};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sim::SimConfig;
use crate::tracegen::{
    gen_initial_link_trace, gen_initial_traffic_trace, GenParams, PacketTrace, TraceMode,
};
use crate::Result;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const SERIES_HEADER: &str = "generation,island,best,mean,top20_mean";

/// Everything that determines a campaign.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub ga: GaParams,
    pub sim: SimConfig,
    pub gen: GenParams,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        self.sim.validate()?;
        self.gen.validate()
    }
}

/// One row of the score series. `island` is `None` for the all-island row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub generation: u64,
    pub island: Option<usize>,
    #[serde(with = "finite_or_null")]
    pub best: f64,
    #[serde(with = "finite_or_null")]
    pub mean: f64,
    #[serde(with = "finite_or_null")]
    pub top20_mean: f64,
}

/// Full campaign state after a generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationCheckpoint {
    pub version: u32,
    pub config: CampaignConfig,
    pub generation: u64,
    pub islands: Vec<Island>,
    pub series: Vec<SeriesRow>,
    #[serde(with = "finite_or_null")]
    pub best_total: f64,
    /// Generations since `best_total` last improved.
    pub stale_generations: u64,
    pub converged: bool,
}

impl GenerationCheckpoint {
    pub fn best(&self) -> Option<&ScoredTrace> {
        self.islands
            .iter()
            .filter_map(Island::best)
            .max_by(|a, b| a.total_score.total_cmp(&b.total_score))
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Checkpoint(m));
        if self.version != CHECKPOINT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        self.config
            .validate()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if self.islands.len() != self.config.ga.num_islands {
            return bad(format!(
                "{} islands stored, config expects {}",
                self.islands.len(),
                self.config.ga.num_islands
            ));
        }
        for (i, isl) in self.islands.iter().enumerate() {
            if isl.generation != self.generation {
                return bad(format!("island {i} is at generation {}", isl.generation));
            }
            if isl.traces.is_empty() {
                return bad(format!("island {i} is empty"));
            }
            for s in &isl.traces {
                s.trace
                    .validate()
                    .map_err(|e| Error::Checkpoint(format!("island {i}: {e}")))?;
                if s.trace.mode != self.config.sim.mode {
                    return bad(format!("island {i} holds a trace of the wrong mode"));
                }
                if !s.total_consistent(self.config.ga.lambda) {
                    return bad(format!("island {i} holds an inconsistent total score"));
                }
            }
        }
        Ok(())
    }
}

/// Runtime knobs that do not affect results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Where checkpoints and `scores.csv` go; `None` keeps everything in memory.
    pub out_dir: Option<PathBuf>,
    /// Stop after this many generations of this call, even if not done.
    pub max_new_generations: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct CampaignReport {
    pub state: GenerationCheckpoint,
    pub generations_run: u64,
}

impl CampaignReport {
    pub fn best(&self) -> &ScoredTrace {
        self.state.best().expect("campaign islands are never empty")
    }
}

/// Starts a campaign with the built-in simulator evaluator.
pub fn run_campaign(config: &CampaignConfig, opts: &RunOptions) -> Result<CampaignReport> {
    let evaluator = SimEvaluator::new(&config.sim, &config.ga);
    run_campaign_with(config, &evaluator, opts)
}

/// Starts a campaign with a caller-supplied evaluator.
pub fn run_campaign_with(
    config: &CampaignConfig,
    evaluator: &dyn Evaluator,
    opts: &RunOptions,
) -> Result<CampaignReport> {
    config.validate()?;
    with_pool(opts.threads, || {
        let state = initial_state(config, evaluator)?;
        persist(&state, opts)?;
        drive(state, evaluator, opts)
    })
}

/// Continues from a checkpoint. `max_generations` may be raised to extend
/// a finished campaign.
pub fn resume_campaign(
    mut state: GenerationCheckpoint,
    max_generations: Option<u64>,
    opts: &RunOptions,
) -> Result<CampaignReport> {
    state.check()?;
    if let Some(g) = max_generations {
        state.config.ga.max_generations = g;
    }
    let evaluator = SimEvaluator::new(&state.config.sim, &state.config.ga);
    with_pool(opts.threads, || drive(state, &evaluator, opts))
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn initial_state(
    config: &CampaignConfig,
    evaluator: &dyn Evaluator,
) -> Result<GenerationCheckpoint> {
    let ga = &config.ga;
    let mut pending = Vec::with_capacity(ga.num_islands);
    for i in 0..ga.num_islands {
        let seed = derive_seed(ga.seed, &[config.gen.rng_seed, i as u64]);
        let mut rng = rng_from_seed(derive_seed(seed, &[0]));
        let mut traces = Vec::with_capacity(ga.island_size(i));
        for _ in 0..ga.island_size(i) {
            let t = match config.sim.mode {
                TraceMode::Link => gen_initial_link_trace(
                    config.sim.bottleneck_rate_pps,
                    config.sim.duration_us,
                    &config.gen,
                    &mut rng,
                )?,
                TraceMode::Traffic => gen_initial_traffic_trace(
                    ga.traffic_budget,
                    config.sim.duration_us,
                    &config.gen,
                    &mut rng,
                )?,
            };
            traces.push(t.without_split_tree());
        }
        pending.push((seed, traces));
    }
    let islands = evaluate_islands(pending, evaluator, ga.lambda, 0);
    let mut state = GenerationCheckpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        generation: 0,
        islands,
        series: Vec::new(),
        best_total: f64::NEG_INFINITY,
        stale_generations: 0,
        converged: false,
    };
    record(&mut state);
    Ok(state)
}

/// Scores all islands' traces in one parallel pass.
fn evaluate_islands(
    pending: Vec<(u64, Vec<PacketTrace>)>,
    evaluator: &dyn Evaluator,
    lambda: f64,
    generation: u64,
) -> Vec<Island> {
    let sizes: Vec<usize> = pending.iter().map(|(_, t)| t.len()).collect();
    let seeds: Vec<u64> = pending.iter().map(|(s, _)| *s).collect();
    let mut scored = evaluate_all(
        pending.into_iter().flat_map(|(_, t)| t).collect(),
        evaluator,
        lambda,
    )
    .into_iter();
    seeds
        .into_iter()
        .zip(sizes)
        .map(|(seed, n)| Island {
            seed,
            generation,
            traces: scored.by_ref().take(n).collect(),
        })
        .collect()
}

fn drive(
    mut state: GenerationCheckpoint,
    evaluator: &dyn Evaluator,
    opts: &RunOptions,
) -> Result<CampaignReport> {
    let mut run = 0;
    while !state.converged
        && state.generation < state.config.ga.max_generations
        && opts.max_new_generations.is_none_or(|m| run < m)
    {
        step_all(&mut state, evaluator)?;
        persist(&state, opts)?;
        run += 1;
    }
    Ok(CampaignReport {
        state,
        generations_run: run,
    })
}

fn step_all(state: &mut GenerationCheckpoint, evaluator: &dyn Evaluator) -> Result<()> {
    let ga = &state.config.ga;
    let next = state.generation + 1;
    let mut elites = Vec::with_capacity(state.islands.len());
    let mut pending = Vec::with_capacity(state.islands.len());
    for isl in &state.islands {
        let brood = breed(isl, ga, &state.config.gen, next)?;
        elites.push(brood.elites);
        pending.push((isl.seed, brood.children));
    }
    let children = evaluate_islands(pending, evaluator, ga.lambda, next);
    let mut islands: Vec<Island> = children
        .into_iter()
        .zip(elites)
        .map(|(mut isl, mut e)| {
            e.append(&mut isl.traces);
            isl.traces = e;
            isl
        })
        .collect();
    for isl in &islands {
        for s in isl.traces.iter().filter_map(|s| s.error.as_ref()) {
            eprintln!("generation {next}: evaluation failed: {s}");
        }
    }
    if ga.migration_interval_gens > 0 && next.is_multiple_of(ga.migration_interval_gens) {
        migrate(&mut islands, ga.migration_fraction);
    }
    state.islands = islands;
    state.generation = next;
    record(state);
    Ok(())
}

/// Appends series rows and updates the stopping state.
fn record(state: &mut GenerationCheckpoint) {
    let g = state.generation;
    let mut all = Vec::new();
    for (i, isl) in state.islands.iter().enumerate() {
        let totals: Vec<f64> = isl.traces.iter().map(|s| s.total_score).collect();
        state.series.push(summary_row(g, Some(i), &totals));
        all.extend(totals);
    }
    let row = summary_row(g, None, &all);
    let best = row.best;
    state.series.push(row);
    if best > state.best_total {
        state.best_total = best;
        state.stale_generations = 0;
    } else {
        state.stale_generations += 1;
    }
    if state.config.ga.patience > 0 && state.stale_generations >= state.config.ga.patience {
        state.converged = true;
    }
}

fn summary_row(generation: u64, island: Option<usize>, totals: &[f64]) -> SeriesRow {
    let mut sorted = totals.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NEG_INFINITY
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    SeriesRow {
        generation,
        island,
        best: sorted.first().copied().unwrap_or(f64::NEG_INFINITY),
        mean: mean(&sorted),
        top20_mean: mean(&sorted[..sorted.len().min(20)]),
    }
}

/// The score series as CSV.
pub fn series_csv(series: &[SeriesRow]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for r in series {
        let island = r.island.map_or("all".to_string(), |i| i.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.generation, island, r.best, r.mean, r.top20_mean
        );
    }
    out
}

/// True when no island's best score ever decreased between generations.
/// Migration only replaces the worst traces, so this holds whenever at
/// least one elite is kept.
pub fn elitism_holds(series: &[SeriesRow]) -> bool {
    let mut last: std::collections::HashMap<Option<usize>, f64> = Default::default();
    series.iter().all(|r| {
        let ok = last.get(&r.island).is_none_or(|&prev| r.best >= prev);
        last.insert(r.island, r.best);
        ok
    })
}

pub fn checkpoint_path(dir: &Path, generation: u64) -> PathBuf {
    dir.join("checkpoints")
        .join(format!("gen_{generation:05}.json"))
}

/// The highest-numbered checkpoint in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let cdir = dir.join("checkpoints");
    if !cdir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(&cdir)? {
        let path = entry?.path();
        let g = path.file_name().and_then(|n| n.to_str()).and_then(|n| {
            n.strip_prefix("gen_")?
                .strip_suffix(".json")?
                .parse::<u64>()
                .ok()
        });
        if let Some(g) = g {
            if best.as_ref().is_none_or(|(b, _)| g > *b) {
                best = Some((g, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

pub fn load_checkpoint(path: &Path) -> Result<GenerationCheckpoint> {
    let text = fs::read_to_string(path)?;
    let state: GenerationCheckpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    state.check()?;
    Ok(state)
}

fn persist(state: &GenerationCheckpoint, opts: &RunOptions) -> Result<()> {
    let Some(dir) = &opts.out_dir else {
        return Ok(());
    };
    let path = checkpoint_path(dir, state.generation);
    fs::create_dir_all(path.parent().expect("checkpoint path has a parent"))?;
    write_atomic(&path, serde_json::to_string(state)?.as_bytes())?;
    write_atomic(
        &dir.join("scores.csv"),
        series_csv(&state.series).as_bytes(),
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_row_stats() {
        let r = summary_row(3, Some(1), &[1.0, 4.0, 2.0]);
        assert_eq!((r.best, r.mean, r.top20_mean), (4.0, 7.0 / 3.0, 7.0 / 3.0));
    }

    #[test]
    fn elitism_check_flags_drops() {
        let row = |g, best| SeriesRow {
            generation: g,
            island: Some(0),
            best,
            mean: best,
            top20_mean: best,
        };
        assert!(elitism_holds(&[row(0, 1.0), row(1, 1.0), row(2, 2.0)]));
        assert!(!elitism_holds(&[row(0, 1.0), row(1, 0.5)]));
    }

    #[test]
    fn csv_marks_aggregate_rows() {
        let rows = [SeriesRow {
            generation: 0,
            island: None,
            best: -1.5,
            mean: -2.0,
            top20_mean: -2.0,
        }];
        assert_eq!(
            series_csv(&rows),
            format!("{SERIES_HEADER}\n0,all,-1.5,-2,-2\n")
        );
    }
}

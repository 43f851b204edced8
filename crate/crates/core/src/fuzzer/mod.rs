//! Genetic search over packet traces.
//!
//! Each island ranks its population by total score, keeps its elites,
//! breeds the rest through 1/rank parent selection (crossovers in traffic
//! mode, mutations otherwise) and re-scores the offspring. Islands trade
//! copies of their best traces along a ring every few generations.

mod campaign;
mod score;

use rand::distributions::{Distribution as _, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::CcaKind;
use crate::error::invalid;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::sim::{run_sim, SimConfig};
use crate::tracegen::{
    anneal, crossover_traffic, mutate_link, mutate_traffic, GenParams, PacketTrace, TraceMode,
    DEFAULT_ANNEAL_SIGMA_US,
};
use crate::Result;

pub use campaign::{
    checkpoint_path, elitism_holds, latest_checkpoint, load_checkpoint, resume_campaign,
    run_campaign, run_campaign_with, series_csv, CampaignConfig, CampaignReport,
    GenerationCheckpoint, RunOptions, SeriesRow, CHECKPOINT_VERSION, SERIES_HEADER,
};
pub use score::{
    lowest_share_mean, nearest_rank, score_high_delay, score_low_utilization, score_realism,
    score_trace, LOW_WINDOW_SHARE,
};

/// Which behaviour the search hunts for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// Low throughput in the worst windows.
    #[default]
    LowUtilization,
    /// High tenth-percentile one-way delay.
    HighDelay,
    /// Scored by a caller-supplied [`Evaluator`].
    Custom,
}

/// How traces are penalised or rewarded independently of the algorithm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceScoreKind {
    /// Fewer (and fewer dropped) cross-traffic packets score higher.
    #[default]
    Packets,
    /// Best utilization reached by the reference algorithms.
    Realism,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub num_islands: usize,
    pub migration_fraction: f64,
    pub migration_interval_gens: u64,
    pub k_elite: usize,
    /// Share of each island bred by crossover (traffic mode only).
    pub crossover_fraction: f64,
    /// Weight of the trace score in the total.
    pub lambda: f64,
    /// Weight of dropped cross packets in the trace score.
    pub w_drop: f64,
    pub score_kind: ScoreKind,
    pub trace_score: TraceScoreKind,
    pub realism_ccas: Vec<CcaKind>,
    pub max_generations: u64,
    /// Generations without a new overall best before the search stops.
    pub patience: u64,
    pub anneal: bool,
    pub anneal_sigma_us: f64,
    /// Cross-traffic packet budget of every traffic trace.
    pub traffic_budget: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population_size: 500,
            num_islands: 20,
            migration_fraction: 0.10,
            migration_interval_gens: 10,
            k_elite: 1,
            crossover_fraction: 0.30,
            lambda: 0.001,
            w_drop: 1.0,
            score_kind: ScoreKind::LowUtilization,
            trace_score: TraceScoreKind::Packets,
            realism_ccas: vec![CcaKind::Reno, CcaKind::Cubic, CcaKind::Bbr],
            max_generations: 100,
            patience: 30,
            anneal: false,
            anneal_sigma_us: DEFAULT_ANNEAL_SIGMA_US as f64,
            traffic_budget: 3000,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_islands == 0 {
            return Err(invalid("ga.num_islands must be at least 1"));
        }
        if self.population_size < self.num_islands {
            return Err(invalid(
                "ga.population_size must be at least ga.num_islands",
            ));
        }
        if !(0.0..=1.0).contains(&self.migration_fraction) {
            return Err(invalid("ga.migration_fraction must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.crossover_fraction) {
            return Err(invalid("ga.crossover_fraction must lie in [0, 1]"));
        }
        if !self.lambda.is_finite() {
            return Err(invalid("ga.lambda must be finite"));
        }
        if !(self.w_drop.is_finite() && self.w_drop >= 0.0) {
            return Err(invalid("ga.w_drop must be a non-negative number"));
        }
        if !(self.anneal_sigma_us.is_finite() && self.anneal_sigma_us >= 0.0) {
            return Err(invalid("ga.anneal_sigma_us must be a non-negative number"));
        }
        if self.trace_score == TraceScoreKind::Realism && self.realism_ccas.len() < 2 {
            return Err(invalid("ga.realism_ccas needs at least two algorithms"));
        }
        Ok(())
    }

    /// Population of island `i`; the remainder goes to the first islands.
    pub fn island_size(&self, i: usize) -> usize {
        let base = self.population_size / self.num_islands;
        base + usize::from(i < self.population_size % self.num_islands)
    }

    /// `(elites, crossovers, mutations)` for an island of `n` traces.
    pub fn brood_split(&self, n: usize, mode: TraceMode) -> (usize, usize, usize) {
        let elites = self.k_elite.min(n);
        let crossovers = match mode {
            TraceMode::Traffic => {
                ((self.crossover_fraction * n as f64).round() as usize).min(n - elites)
            }
            TraceMode::Link => 0,
        };
        (elites, crossovers, n - elites - crossovers)
    }
}

/// Scores of one simulated trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub performance_score: f64,
    pub trace_score: f64,
    pub sim_digest: String,
}

/// Turns a trace into scores. Implementations must be deterministic.
pub trait Evaluator: Sync {
    fn evaluate(&self, trace: &PacketTrace) -> Result<Evaluation>;
}

/// The built-in evaluator: one simulation under the configured algorithm.
#[derive(Clone, Debug)]
pub struct SimEvaluator {
    pub sim: SimConfig,
    pub ga: GaParams,
}

impl SimEvaluator {
    pub fn new(sim: &SimConfig, ga: &GaParams) -> Self {
        SimEvaluator {
            sim: SimConfig {
                event_log: false,
                ..sim.clone()
            },
            ga: ga.clone(),
        }
    }
}

impl Evaluator for SimEvaluator {
    fn evaluate(&self, trace: &PacketTrace) -> Result<Evaluation> {
        let result = run_sim(&self.sim, trace)?;
        let performance_score = match self.ga.score_kind {
            ScoreKind::LowUtilization => score_low_utilization(&result, self.sim.window_us),
            ScoreKind::HighDelay => score_high_delay(&result),
            ScoreKind::Custom => {
                return Err(invalid("custom scoring needs a caller-supplied evaluator"));
            }
        };
        let trace_score = match self.ga.trace_score {
            TraceScoreKind::Packets => score_trace(trace, &result, self.ga.w_drop),
            TraceScoreKind::Realism => score_realism(trace, &self.sim, &self.ga.realism_ccas)?,
        };
        Ok(Evaluation {
            performance_score,
            trace_score,
            sim_digest: result.digest(),
        })
    }
}

/// A trace together with its scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrace {
    pub trace: PacketTrace,
    #[serde(with = "score_serde")]
    pub performance_score: f64,
    #[serde(with = "score_serde")]
    pub trace_score: f64,
    #[serde(with = "score_serde")]
    pub total_score: f64,
    pub sim_digest: String,
    /// Set when evaluation failed; the trace then ranks last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoredTrace {
    pub fn new(trace: PacketTrace, eval: Evaluation, lambda: f64) -> Self {
        ScoredTrace {
            trace,
            total_score: eval.performance_score + lambda * eval.trace_score,
            performance_score: eval.performance_score,
            trace_score: eval.trace_score,
            sim_digest: eval.sim_digest,
            error: None,
        }
    }

    pub fn failed(trace: PacketTrace, error: String) -> Self {
        ScoredTrace {
            trace,
            performance_score: f64::NEG_INFINITY,
            trace_score: 0.0,
            total_score: f64::NEG_INFINITY,
            sim_digest: String::new(),
            error: Some(error),
        }
    }

    /// Checks that the stored total matches its components.
    pub fn total_consistent(&self, lambda: f64) -> bool {
        if self.error.is_some() {
            return self.total_score == f64::NEG_INFINITY;
        }
        self.total_score == self.performance_score + lambda * self.trace_score
    }
}

/// Scores every trace, in parallel, keeping input order.
pub fn evaluate_all(
    traces: Vec<PacketTrace>,
    evaluator: &dyn Evaluator,
    lambda: f64,
) -> Vec<ScoredTrace> {
    traces
        .into_par_iter()
        .map(|t| match evaluator.evaluate(&t) {
            Ok(eval) => ScoredTrace::new(t, eval, lambda),
            Err(e) => ScoredTrace::failed(t, e.to_string()),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub seed: u64,
    pub generation: u64,
    pub traces: Vec<ScoredTrace>,
}

impl Island {
    pub fn best(&self) -> Option<&ScoredTrace> {
        self.traces
            .iter()
            .max_by(|a, b| a.total_score.total_cmp(&b.total_score))
    }

    /// Traces by descending total score; ties keep their current order.
    pub fn ranked(&self) -> Vec<&ScoredTrace> {
        let mut v: Vec<&ScoredTrace> = self.traces.iter().collect();
        v.sort_by(|a, b| b.total_score.total_cmp(&a.total_score));
        v
    }

    fn sort_desc(&mut self) {
        self.traces
            .sort_by(|a, b| b.total_score.total_cmp(&a.total_score));
    }
}

/// Selection probability of each rank (1-based rank `r` gets weight `1/r`).
pub fn selection_probabilities(n: usize) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|r| 1.0 / r as f64).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

/// The unscored half of a generation step.
#[derive(Clone, Debug)]
pub struct Brood {
    pub elites: Vec<ScoredTrace>,
    pub children: Vec<PacketTrace>,
}

/// Elites plus freshly bred children for one island. The island RNG for
/// generation `g` is derived from the island seed and `g`.
pub fn breed(
    island: &Island,
    ga: &GaParams,
    gen: &GenParams,
    next_generation: u64,
) -> Result<Brood> {
    let ranked = island.ranked();
    let n = ranked.len();
    if n == 0 {
        return Err(invalid("cannot breed an empty island"));
    }
    let mode = ranked[0].trace.mode;
    let (elites, crossovers, mutations) = ga.brood_split(n, mode);
    let mut rng = rng_from_seed(derive_seed(island.seed, &[next_generation]));
    let pick = WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64))
        .map_err(|e| invalid(format!("selection weights: {e}")))?;

    let mut children = Vec::with_capacity(crossovers + mutations);
    for _ in 0..crossovers {
        let a = &ranked[pick.sample(&mut rng)].trace;
        let b = &ranked[pick.sample(&mut rng)].trace;
        children.push(crossover_traffic(a, b, &mut rng)?);
    }
    for _ in 0..mutations {
        let parent = &ranked[pick.sample(&mut rng)].trace;
        children.push(mutate(parent, gen, &mut rng)?);
    }
    if ga.anneal {
        for child in &mut children {
            *child = anneal(child, ga.anneal_sigma_us)?;
        }
    }
    Ok(Brood {
        elites: ranked[..elites].iter().map(|&s| s.clone()).collect(),
        children,
    })
}

fn mutate(trace: &PacketTrace, gen: &GenParams, rng: &mut Rng) -> Result<PacketTrace> {
    match trace.mode {
        TraceMode::Link => mutate_link(trace, gen, rng),
        TraceMode::Traffic => mutate_traffic(trace, gen, rng),
    }
}

/// One generation of one island.
pub fn step_generation(
    island: &Island,
    ga: &GaParams,
    gen: &GenParams,
    evaluator: &dyn Evaluator,
) -> Result<Island> {
    let next = island.generation + 1;
    let brood = breed(island, ga, gen, next)?;
    let mut traces = brood.elites;
    traces.extend(evaluate_all(brood.children, evaluator, ga.lambda));
    Ok(Island {
        seed: island.seed,
        generation: next,
        traces,
    })
}

/// Ring migration: island `i` sends copies of its best
/// `ceil(fraction * size)` traces to island `i + 1`, where they replace
/// the worst ones.
pub fn migrate(islands: &mut [Island], fraction: f64) {
    let k = islands.len();
    if k < 2 {
        return;
    }
    let emigrants: Vec<Vec<ScoredTrace>> = islands
        .iter()
        .map(|isl| {
            let m = (fraction * isl.traces.len() as f64).ceil() as usize;
            isl.ranked().into_iter().take(m).cloned().collect()
        })
        .collect();
    for (i, movers) in emigrants.into_iter().enumerate() {
        let dest = &mut islands[(i + 1) % k];
        dest.sort_desc();
        let m = movers.len().min(dest.traces.len());
        let keep = dest.traces.len() - m;
        dest.traces.truncate(keep);
        dest.traces.extend(movers.into_iter().take(m));
    }
}

/// Serialises non-finite scores as `null` (read back as negative infinity).
pub(crate) mod score_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

pub(crate) use score_serde as finite_or_null;

use ccstress_core::fuzzer::{
    elitism_holds, migrate, resume_campaign, run_campaign, run_campaign_with, step_generation,
    CampaignConfig, Evaluation, Evaluator, GaParams, GenerationCheckpoint, Island, RunOptions,
    ScoredTrace,
};
use ccstress_core::tracegen::{GenParams, PacketTrace, TraceMode};
use ccstress_core::{Error, Result};

const SECOND: u64 = 1_000_000;

/// Scores a trace by a fixed function of its packet count.
struct CountEval {
    fail_multiple_of: Option<usize>,
}

impl Evaluator for CountEval {
    fn evaluate(&self, trace: &PacketTrace) -> Result<Evaluation> {
        if self
            .fail_multiple_of
            .is_some_and(|m| trace.len().is_multiple_of(m))
        {
            return Err(Error::InvalidArgument("refused".into()));
        }
        Ok(Evaluation {
            performance_score: (trace.len() % 97) as f64,
            trace_score: -(trace.len() as f64),
            sim_digest: format!("{}", trace.len()),
        })
    }
}

fn traffic(n: usize, tag: u64) -> PacketTrace {
    let ts = (0..n as u64)
        .map(|i| (tag * 7 + i * 1000) % (10 * SECOND))
        .collect();
    PacketTrace::from_timestamps(TraceMode::Traffic, 10 * SECOND, Some(400), ts).unwrap()
}

fn scored(total: f64, n: usize, tag: u64) -> ScoredTrace {
    ScoredTrace::new(
        traffic(n, tag),
        Evaluation {
            performance_score: total,
            trace_score: 0.0,
            sim_digest: String::new(),
        },
        0.0,
    )
}

fn island(totals: &[f64]) -> Island {
    Island {
        seed: 5,
        generation: 0,
        traces: totals
            .iter()
            .enumerate()
            .map(|(i, &t)| scored(t, 10 + i, i as u64))
            .collect(),
    }
}

fn small_ga() -> GaParams {
    GaParams {
        population_size: 3,
        num_islands: 1,
        lambda: 0.0,
        ..GaParams::default()
    }
}

#[test]
fn elite_survives_with_its_scores() {
    let isl = island(&[3.0, 5.0, 1.0]);
    let next = step_generation(
        &isl,
        &small_ga(),
        &GenParams::default(),
        &CountEval {
            fail_multiple_of: None,
        },
    )
    .unwrap();
    assert_eq!(next.generation, 1);
    assert_eq!(next.traces.len(), 3);
    assert_eq!(next.traces[0], isl.traces[1]);
}

#[test]
fn full_elitism_freezes_the_island() {
    let isl = island(&[3.0, 5.0, 1.0]);
    let ga = GaParams {
        k_elite: 3,
        ..small_ga()
    };
    let next = step_generation(
        &isl,
        &ga,
        &GenParams::default(),
        &CountEval {
            fail_multiple_of: None,
        },
    )
    .unwrap();
    let mut before: Vec<_> = isl.traces.clone();
    before.sort_by(|a, b| b.total_score.total_cmp(&a.total_score));
    assert_eq!(next.traces, before);
}

#[test]
fn link_islands_only_mutate() {
    let mut rng = ccstress_core::rng::rng_from_seed(1);
    let gen = GenParams::default();
    let traces = (0..6)
        .map(|_| {
            let t =
                ccstress_core::tracegen::gen_initial_link_trace(1000.0, 2 * SECOND, &gen, &mut rng)
                    .unwrap();
            ScoredTrace::new(
                t,
                Evaluation {
                    performance_score: 0.0,
                    trace_score: 0.0,
                    sim_digest: String::new(),
                },
                0.0,
            )
        })
        .collect();
    let isl = Island {
        seed: 3,
        generation: 0,
        traces,
    };
    let ga = GaParams {
        population_size: 6,
        crossover_fraction: 1.0,
        ..small_ga()
    };
    let next = step_generation(
        &isl,
        &ga,
        &gen,
        &CountEval {
            fail_multiple_of: None,
        },
    )
    .unwrap();
    // mutation keeps a link trace's opportunity count, crossover would not
    assert!(next
        .traces
        .iter()
        .all(|s| s.trace.len() == 2000 && s.trace.mode == TraceMode::Link));
    assert_eq!(ga.brood_split(6, TraceMode::Link).1, 0);
}

#[test]
fn failed_evaluations_rank_last_but_stay() {
    let isl = island(&[3.0, 5.0, 1.0, 2.0, 4.0, 0.5]);
    let ga = GaParams {
        population_size: 6,
        ..small_ga()
    };
    let eval = CountEval {
        fail_multiple_of: Some(2),
    };
    let next = step_generation(&isl, &ga, &GenParams::default(), &eval).unwrap();
    assert_eq!(next.traces.len(), 6);
    for s in &next.traces[1..] {
        if s.trace.len() % 2 == 0 {
            assert_eq!(s.total_score, f64::NEG_INFINITY);
            assert!(s.error.is_some());
        } else {
            assert!(s.total_score.is_finite());
        }
    }
}

#[test]
fn migration_examples() {
    let mut one = vec![island(&[1.0, 2.0])];
    let before = one.clone();
    migrate(&mut one, 0.1);
    assert_eq!(one, before);

    let mut two = vec![island(&[9.0; 10]), island(&[1.0; 10])];
    two[0].traces[3] = scored(50.0, 77, 77);
    migrate(&mut two, 0.1);
    assert!(two[1]
        .traces
        .iter()
        .any(|s| s.trace.len() == 77 && s.total_score == 50.0));
    assert_eq!(two[1].traces.len(), 10);

    let mut many: Vec<Island> = (0..20).map(|i| island(&[i as f64 * 100.0; 25])).collect();
    for (i, isl) in many.iter_mut().enumerate() {
        for (j, s) in isl.traces.iter_mut().enumerate() {
            s.total_score = i as f64 * 100.0 + j as f64;
        }
    }
    migrate(&mut many, 0.1);
    for (i, isl) in many.iter().enumerate() {
        let src = (i + 19) % 20;
        let from_src = isl
            .traces
            .iter()
            .filter(|s| (s.total_score / 100.0).floor() as usize == src)
            .count();
        assert_eq!(from_src, 3, "island {i}");
        assert_eq!(isl.traces.len(), 25);
    }
}

#[test]
fn lambda_prefers_fewer_packets_on_ties() {
    let eval = |n: usize| Evaluation {
        performance_score: -3.0,
        trace_score: -(n as f64),
        sim_digest: String::new(),
    };
    let few = ScoredTrace::new(traffic(10, 0), eval(10), 0.001);
    let many = ScoredTrace::new(traffic(300, 0), eval(300), 0.001);
    assert!(few.total_score > many.total_score);
    assert!((few.total_score - (-3.0 - 0.01)).abs() < 1e-12);
}

fn tiny_campaign() -> CampaignConfig {
    let mut cfg = CampaignConfig::default();
    cfg.ga.population_size = 8;
    cfg.ga.num_islands = 2;
    cfg.ga.max_generations = 3;
    cfg.ga.migration_interval_gens = 1;
    cfg.ga.traffic_budget = 300;
    cfg.ga.seed = 11;
    cfg.sim.duration_us = 3 * SECOND;
    cfg
}

#[test]
fn zero_generations_scores_the_initial_population() {
    let mut cfg = tiny_campaign();
    cfg.ga.max_generations = 0;
    let rep = run_campaign(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rep.state.generation, 0);
    assert_eq!(rep.generations_run, 0);
    assert!(rep.state.series.iter().all(|r| r.generation == 0));
    assert_eq!(
        rep.state
            .islands
            .iter()
            .map(|i| i.traces.len())
            .sum::<usize>(),
        8
    );
    assert!(rep
        .state
        .islands
        .iter()
        .flat_map(|i| &i.traces)
        .all(|s| s.total_score.is_finite()));
}

#[test]
fn checkpoint_json_round_trip_continues_identically() {
    let cfg = tiny_campaign();
    let full = run_campaign(&cfg, &RunOptions::default()).unwrap();
    let stop = RunOptions {
        max_new_generations: Some(1),
        ..RunOptions::default()
    };
    let part = run_campaign(&cfg, &stop).unwrap();
    let text = serde_json::to_string(&part.state).unwrap();
    let back: GenerationCheckpoint = serde_json::from_str(&text).unwrap();
    assert_eq!(back, part.state);
    let rest = resume_campaign(back, None, &RunOptions::default()).unwrap();
    assert_eq!(rest.state, full.state);
}

#[test]
fn elitism_over_a_real_run() {
    let mut cfg = CampaignConfig::default();
    cfg.ga.population_size = 50;
    cfg.ga.num_islands = 5;
    cfg.ga.max_generations = 30;
    cfg.ga.patience = 0;
    cfg.ga.seed = 3;
    cfg.sim.duration_us = 10 * SECOND;
    let rep = run_campaign(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(rep.state.generation, 30);
    assert!(elitism_holds(&rep.state.series));
}

#[test]
fn patience_stops_a_flat_search() {
    let mut cfg = tiny_campaign();
    cfg.ga.max_generations = 50;
    cfg.ga.patience = 2;
    let eval = CountEval {
        fail_multiple_of: None,
    };
    let rep = run_campaign_with(&cfg, &eval, &RunOptions::default()).unwrap();
    assert!(rep.state.converged);
    assert!(rep.state.stale_generations >= 2);
    assert!(rep.state.generation < 50);
}

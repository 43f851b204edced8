//! `ccstress`: run, resume and inspect congestion control stress campaigns.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccstress_core::fuzzer::{
    latest_checkpoint, load_checkpoint, resume_campaign, run_campaign, series_csv, CampaignConfig,
    GenerationCheckpoint, RunOptions, ScoreKind,
};
use ccstress_core::sim::{delay_csv, queue_csv, rows_to_csv, run_sim, throughput_csv, SimConfig};
use ccstress_core::tracegen::{
    from_json, from_mahimahi, to_json, to_mahimahi, PacketTrace, TraceMode,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const ENV_OUT: &str = "CCSTRESS_OUT";
const ENV_THREADS: &str = "CCSTRESS_THREADS";
const DEFAULT_OUT: &str = "ccstress-out";

#[derive(Parser)]
#[command(
    name = "ccstress",
    version,
    about = "Search for network traces that break congestion control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a new campaign.
    Fuzz(FuzzArgs),
    /// Continue a campaign from its latest checkpoint.
    Resume(ResumeArgs),
    /// Simulate one trace with full logging.
    Replay(ReplayArgs),
    /// Convert a trace between native JSON and MahiMahi.
    Export(ExportArgs),
    /// Summarise a campaign directory and emit plot data.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set ga.patience=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    cca: Option<CcaArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FuzzArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Total population across islands.
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    islands: Option<usize>,
    /// Maximum number of generations.
    #[arg(long)]
    gens: Option<u64>,
    #[arg(long)]
    crossover_frac: Option<f64>,
    #[arg(long, value_enum)]
    score: Option<ScoreArg>,
    /// Artifact directory (default: $CCSTRESS_OUT or ./ccstress-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: $CCSTRESS_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ResumeArgs {
    /// Campaign directory.
    dir: PathBuf,
    /// New generation limit.
    #[arg(long)]
    gens: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace file (native JSON, or MahiMahi for link traces).
    trace: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Directory for the CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    to: Format,
    /// Output file (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Duration for MahiMahi input, in microseconds.
    #[arg(long)]
    duration_us: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Campaign directory.
    dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Traffic,
    Link,
}

#[derive(Clone, Copy, ValueEnum)]
enum CcaArg {
    Reno,
    Cubic,
    CubicBuggy,
    Bbr,
    BbrPatched,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    LowUtilization,
    HighDelay,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Mahimahi,
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
    Checkpoint(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Checkpoint(_) => 3,
        }
    }
}

impl From<ccstress_core::Error> for Failure {
    fn from(e: ccstress_core::Error) -> Self {
        match e {
            ccstress_core::Error::Checkpoint(_) => Failure::Checkpoint(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Resume(a) => cmd_resume(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Export(a) => cmd_export(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("config error", m),
                Failure::Runtime(m) => ("error", m),
                Failure::Checkpoint(m) => ("checkpoint error", m),
            };
            eprintln!("ccstress: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(args: &ConfigArgs, extra: Vec<(String, String)>) -> Result<CampaignConfig, Failure> {
    let mut pairs = Vec::new();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        pairs = config::parse_file(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    }
    let flag = |k: &str, v: String| (k.to_string(), v);
    if let Some(m) = args.mode {
        pairs.push(flag("sim.mode", value_name(m)));
    }
    if let Some(c) = args.cca {
        pairs.push(flag("cca.kind", value_name(c)));
    }
    if let Some(s) = args.seed {
        pairs.push(flag("ga.seed", s.to_string()));
    }
    pairs.extend(extra);
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("override `{o}` is not KEY=VALUE")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let cfg = config::apply(
        &CampaignConfig::default(),
        pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())),
    )
    .map_err(Failure::Config)?;
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn value_name(v: impl ValueEnum) -> String {
    v.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(ENV_THREADS) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("{ENV_THREADS} must be a positive integer"))),
        Err(_) => Ok(None),
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn cmd_fuzz(a: FuzzArgs) -> Outcome {
    let mut extra = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            extra.push((k.to_string(), v));
        }
    };
    push("ga.population_size", a.pop.map(|v| v.to_string()));
    push("ga.num_islands", a.islands.map(|v| v.to_string()));
    push("ga.max_generations", a.gens.map(|v| v.to_string()));
    push(
        "ga.crossover_fraction",
        a.crossover_frac.map(|v| v.to_string()),
    );
    push("ga.score_kind", a.score.map(value_name));
    let crossover_flag = a.crossover_frac.is_some();
    let cfg = load_config(&a.cfg, extra)?;
    if cfg.ga.score_kind == ScoreKind::Custom {
        return Err(Failure::Config(
            "ga.score_kind = custom needs a library evaluator".into(),
        ));
    }
    if cfg.sim.mode == TraceMode::Link && (crossover_flag || cfg.ga.crossover_fraction > 0.0) {
        eprintln!("ccstress: warning: link mode does not use crossovers; ga.crossover_fraction is ignored");
    }
    let dir = out_dir(a.out);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), config::render(&cfg))?;
    let opts = RunOptions {
        threads: threads(a.threads)?,
        out_dir: Some(dir.clone()),
        max_new_generations: None,
    };
    let report = run_campaign(&cfg, &opts)?;
    write_artifacts(&dir, &report.state)?;
    eprintln!(
        "ccstress: {} generations, best total {:.6}; artifacts in {}",
        report.state.generation,
        report.state.best_total,
        dir.display()
    );
    Ok(())
}

fn cmd_resume(a: ResumeArgs) -> Outcome {
    let path = latest_checkpoint(&a.dir)?
        .ok_or_else(|| Failure::Checkpoint(format!("no checkpoints under {}", a.dir.display())))?;
    let state = load_checkpoint(&path)?;
    let opts = RunOptions {
        threads: threads(a.threads)?,
        out_dir: Some(a.dir.clone()),
        max_new_generations: None,
    };
    let report = resume_campaign(state, a.gens, &opts)?;
    fs::write(
        a.dir.join("config.txt"),
        config::render(&report.state.config),
    )?;
    write_artifacts(&a.dir, &report.state)?;
    eprintln!(
        "ccstress: resumed for {} generations, now at {}",
        report.generations_run, report.state.generation
    );
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Outcome {
    let trace = read_trace(&a.trace, None)?;
    let mut cfg = load_config(&a.cfg, Vec::new())?;
    if a.cfg.mode.is_none() {
        cfg.sim.mode = trace.mode;
    }
    if cfg.sim.mode != trace.mode {
        return Err(Failure::Config(format!(
            "trace is a {:?} trace but sim.mode is {:?}",
            trace.mode, cfg.sim.mode
        )));
    }
    let dir = out_dir(a.out);
    let summary = replay_into(&dir, &cfg.sim, &trace)?;
    fs::write(dir.join("config.txt"), config::render(&cfg))?;
    print!("{summary}");
    Ok(())
}

/// Simulates `trace` with full logging and writes the CSV set into `dir`.
fn replay_into(dir: &Path, sim: &SimConfig, trace: &PacketTrace) -> Result<String, Failure> {
    let cfg = SimConfig {
        event_log: true,
        ..sim.clone()
    };
    let r = run_sim(&cfg, trace)?;
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("throughput.csv"),
        throughput_csv(&r, cfg.window_us),
    )?;
    fs::write(dir.join("delay.csv"), delay_csv(&r))?;
    fs::write(dir.join("queue.csv"), queue_csv(&r))?;
    fs::write(dir.join("events.csv"), rows_to_csv(&r.events))?;
    let mut s = String::new();
    let _ = writeln!(s, "cca: {}", cfg.cca.name());
    let _ = writeln!(s, "utilization: {:.4}", r.utilization());
    let _ = writeln!(s, "mean throughput: {:.3} Mbit/s", r.mean_throughput_mbps());
    let _ = writeln!(
        s,
        "sender sent/delivered/dropped: {}/{}/{}",
        r.sender.sent, r.sender.delivered, r.sender.dropped
    );
    let _ = writeln!(
        s,
        "cross sent/delivered/dropped: {}/{}/{}",
        r.cross.sent, r.cross.delivered, r.cross.dropped
    );
    let _ = writeln!(
        s,
        "retransmissions: {}, fast recoveries: {}, timeouts: {} (max backoff {})",
        r.tcp.retransmissions, r.tcp.fast_recoveries, r.tcp.rto_count, r.tcp.max_backoff
    );
    let _ = writeln!(s, "digest: {}", r.digest());
    fs::write(dir.join("summary.txt"), &s)?;
    Ok(s)
}

fn read_trace(path: &Path, duration_us: Option<u64>) -> Result<PacketTrace, Failure> {
    let text = fs::read_to_string(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        from_json(&text)
    } else {
        from_mahimahi(&text, duration_us)
    };
    parsed.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn cmd_export(a: ExportArgs) -> Outcome {
    let trace = read_trace(&a.input, a.duration_us)?;
    let text = match a.to {
        Format::Json => to_json(&trace)?,
        Format::Mahimahi => to_mahimahi(&trace).map_err(|e| Failure::Config(e.to_string()))?,
    };
    match a.output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Outcome {
    let path = latest_checkpoint(&a.dir)?
        .ok_or_else(|| Failure::Checkpoint(format!("no checkpoints under {}", a.dir.display())))?;
    let state = load_checkpoint(&path)?;
    write_artifacts(&a.dir, &state)?;
    let best = state.best().expect("checkpoints hold traces");
    let summary = replay_into(&a.dir.join("report"), &state.config.sim, &best.trace)?;
    print!("{}", fs::read_to_string(a.dir.join("summary.txt"))?);
    print!("{summary}");
    Ok(())
}

/// Best trace per island, the score series and a summary.
fn write_artifacts(dir: &Path, state: &GenerationCheckpoint) -> Outcome {
    let best_dir = dir.join("best");
    fs::create_dir_all(&best_dir)?;
    fs::write(dir.join("scores.csv"), series_csv(&state.series))?;
    let mut s = String::new();
    let _ = writeln!(s, "generation: {}", state.generation);
    let _ = writeln!(s, "converged: {}", state.converged);
    let _ = writeln!(s, "cca: {}", state.config.sim.cca.name());
    let _ = writeln!(s, "mode: {:?}", state.config.sim.mode);
    let _ = writeln!(s, "seed: {}", state.config.ga.seed);
    let _ = writeln!(s, "island,total,performance,trace_score,packets,digest");
    for (i, isl) in state.islands.iter().enumerate() {
        let Some(b) = isl.best() else { continue };
        let stem = best_dir.join(format!("island_{i:02}"));
        fs::write(stem.with_extension("json"), to_json(&b.trace)?)?;
        if b.trace.mode == TraceMode::Link {
            fs::write(stem.with_extension("mahimahi"), to_mahimahi(&b.trace)?)?;
        }
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{}",
            b.total_score,
            b.performance_score,
            b.trace_score,
            b.trace.len(),
            b.sim_digest
        );
    }
    fs::write(dir.join("summary.txt"), s)?;
    Ok(())
}

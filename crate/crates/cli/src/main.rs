//! Batch driver: trace generation, telemetry collection, predictor and agent
//! training, ablation, simulation and reward-weight calibration.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use dara_core::agent::{
    train_agent_traced, write_cycle_csv_header, write_cycle_csv_row, write_episode_csv, ActionSpace, AgentTrainConfig, Env,
    ForecastSource, Policy,
};
use dara_core::calibrate::{random_search, write_leaderboard_csv, CalibrationConfig};
use dara_core::checkpoint::{PolicyCheckpoint, PredictorCheckpoint, FORMAT_VERSION};
use dara_core::config::ExperimentConfig;
use dara_core::experiment::{
    comparisons, run_ablation, simulate, summarise, write_summary_csv, AblationConfig, Method, SimPolicy,
};
use dara_core::netsim::telemetry::{read_csv, write_csv};
use dara_core::nn::TransformerConfig;
use dara_core::par::Execution;
use dara_core::predictor::{
    collect_telemetry, fit_scaler, horizon_nrmse, train_transformer, Dataset, LinearPredictor, Model, Predictor,
    HORIZONS,
};
use dara_core::scenario::{PathSetup, Scenario};
use dara_core::schedulers::PacketScheduler;
use dara_core::stats::write_comparison_csv;
use dara_core::trace::{generate_burst_trace, parse_trace, BurstPattern};

#[derive(Parser, Debug)]
#[command(name = "dara", version, about = "Multipath scheduling lab: simulate, train and compare schedulers")]
struct Cli {
    /// JSON experiment configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run independent jobs on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a delivery-opportunity trace (one millisecond timestamp per line).
    GenTrace {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2500)]
        cycle_ms: u64,
        #[arg(long, default_value_t = 700)]
        burst_ms: u64,
        #[arg(long, default_value = "10mbps")]
        burst_rate: String,
        #[arg(long, default_value = "0.2mbps")]
        trough_rate: String,
        /// Constant-rate trace instead of the burst pattern.
        #[arg(long)]
        stable: Option<String>,
        /// Trace length; defaults to one pattern cycle.
        #[arg(long)]
        duration_ms: Option<u64>,
    },
    /// Collect binned telemetry under an exploratory fraction policy.
    GenTelemetry {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        paths: PathArgs,
    },
    /// Fit a forecaster on telemetry and report held-out NRMSE per horizon.
    TrainPredictor {
        #[arg(long)]
        telemetry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Arch::Transformer)]
        arch: Arch,
        /// Encoder blocks; overrides the configuration.
        #[arg(long)]
        depth: Option<usize>,
        /// Metrics JSON; defaults to `<out>.metrics.json`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Train a DQN policy against a frozen forecaster.
    TrainAgent {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::Dara)]
        variant: Variant,
        #[arg(long)]
        action_levels: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Episode log CSV; defaults to `<out>.episodes.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also write every training cycle (state, action, reward terms) here.
        #[arg(long)]
        cycle_log: Option<PathBuf>,
        #[command(flatten)]
        paths: PathArgs,
    },
    /// Compare every method over repeated runs.
    Ablate {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Comma-separated subset of methods.
        #[arg(long)]
        methods: Option<String>,
        #[command(flatten)]
        paths: PathArgs,
    },
    /// Run one scheduler and report delivery metrics.
    Simulate {
        /// rr | cpf | minrtt | static:<level> | reactive | random | dara:<policy checkpoint>
        #[arg(long)]
        scheduler: String,
        #[arg(long, default_value_t = 60_000)]
        duration_ms: u64,
        /// Restrict the scenario to one path.
        #[arg(long)]
        single_path: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        paths: PathArgs,
    },
    /// Random search over reward weights.
    CalibrateWeights {
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[command(flatten)]
        paths: PathArgs,
    },
}

/// Path traces; without any, the built-in asymmetric burst scenario is used.
#[derive(clap::Args, Debug, Clone, Default)]
struct PathArgs {
    /// Trace file per path, in path order.
    #[arg(long = "trace")]
    traces: Vec<PathBuf>,
    /// Override simulated episode length in control cycles.
    #[arg(long)]
    cycles: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Arch {
    Linear,
    Transformer,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Dara,
    NoTransformer,
    GroundTruth,
}

impl Variant {
    fn source(self) -> ForecastSource {
        match self {
            Variant::Dara => ForecastSource::Predictor,
            Variant::NoTransformer => ForecastSource::Hidden,
            Variant::GroundTruth => ForecastSource::Oracle,
        }
    }
}

/// A usage problem detected after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `10mbps`, `200kbps`, `1.8Mbps` or a plain bits-per-second number.
fn parse_rate(s: &str) -> Result<u64> {
    let lower = s.trim().to_ascii_lowercase();
    let (num, scale) = if let Some(v) = lower.strip_suffix("mbps") {
        (v, 1e6)
    } else if let Some(v) = lower.strip_suffix("kbps") {
        (v, 1e3)
    } else if let Some(v) = lower.strip_suffix("bps") {
        (v, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| usage(format!("invalid rate {s:?}; expected e.g. 10mbps")))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(usage(format!("rate must be positive: {s:?}")));
    }
    Ok((v * scale).round() as u64)
}

struct Ctx {
    config: ExperimentConfig,
    seed: u64,
    hash: String,
}

impl Ctx {
    fn header(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    fn exec(&self) -> Execution {
        self.config.exec
    }

    fn scenario(&self, paths: &PathArgs) -> Result<Scenario> {
        if paths.traces.is_empty() {
            return Ok(Scenario::asymmetric_burst());
        }
        let setups = paths
            .traces
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(PathSetup::new(parse_trace(&text).with_context(|| format!("parsing {}", p.display()))?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario::new(setups)?)
    }

    fn env_config(&self, paths: &PathArgs) -> dara_core::agent::EnvConfig {
        let mut e = self.config.env.clone();
        if let Some(c) = paths.cycles {
            e.cycles = c;
        }
        e
    }
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(serde_json::to_vec(cfg).expect("config serialises"));
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_predictor(path: &Path) -> Result<Arc<Predictor>> {
    let ckpt = PredictorCheckpoint::load(path).with_context(|| format!("loading predictor {}", path.display()))?;
    Ok(Arc::new(ckpt.predictor))
}

fn check_paths(predictor: &Predictor, scenario: &Scenario) -> Result<()> {
    if predictor.n_paths != scenario.n_paths() {
        bail!(usage(format!(
            "predictor was trained for {} paths but the scenario has {}",
            predictor.n_paths,
            scenario.n_paths()
        )));
    }
    Ok(())
}

fn gen_trace(
    ctx: &Ctx,
    out: &Path,
    cycle_ms: u64,
    burst_ms: u64,
    burst_rate: &str,
    trough_rate: &str,
    stable: Option<&str>,
    duration_ms: Option<u64>,
) -> Result<()> {
    let pattern = match stable {
        Some(rate) => BurstPattern::stable(parse_rate(rate)?),
        None => BurstPattern::new(cycle_ms, burst_ms, parse_rate(burst_rate)?, parse_rate(trough_rate)?)
            .map_err(|e| usage(e.to_string()))?,
    };
    let trace = generate_burst_trace(&pattern, duration_ms.unwrap_or(pattern.cycle_ms), ctx.seed)?;
    let mut w = create(out)?;
    w.write_all(trace.to_text().as_bytes())?;
    write_json(
        &with_suffix(out, ".meta.json"),
        &serde_json::json!({
            "config_hash": ctx.hash,
            "seed": ctx.seed,
            "pattern": pattern,
            "opportunities": trace.len(),
            "mean_rate_bps": trace.mean_rate_bps(),
        }),
    )?;
    log::info!("wrote {} opportunities to {}", trace.len(), out.display());
    Ok(())
}

fn gen_telemetry(ctx: &Ctx, out: &Path, paths: &PathArgs) -> Result<()> {
    let scenario = ctx.scenario(paths)?;
    let t = &ctx.config.telemetry;
    let cycles = paths.cycles.unwrap_or(t.cycles);
    let runs = collect_telemetry(&scenario, t.runs, cycles, t.switch_prob, ctx.seed, ctx.exec())?;
    let mut w = create(out)?;
    writeln!(w, "# {}", ctx.header())?;
    for (i, run) in runs.iter().enumerate() {
        write_csv(&mut w, run, Some(&format!("run={i}")))?;
    }
    log::info!("wrote {} runs of {cycles} bins to {}", runs.len(), out.display());
    Ok(())
}

/// Splits a multi-run telemetry CSV written by `gen-telemetry`.
fn read_runs(text: &str) -> Result<Vec<Vec<dara_core::netsim::TelemetryBin>>> {
    let mut chunks: Vec<String> = Vec::new();
    for line in text.lines() {
        if line.starts_with("# run=") || chunks.is_empty() {
            chunks.push(String::new());
        }
        chunks.last_mut().unwrap().push_str(line);
        chunks.last_mut().unwrap().push('\n');
    }
    let runs = chunks
        .iter()
        .filter(|c| c.lines().any(|l| !l.starts_with('#') && !l.trim().is_empty()))
        .map(|c| read_csv(c))
        .collect::<dara_core::Result<Vec<_>>>()?;
    if runs.is_empty() {
        bail!("telemetry file holds no bins");
    }
    Ok(runs)
}

fn train_predictor_cmd(ctx: &Ctx, telemetry: &Path, out: &Path, arch: Arch, depth: Option<usize>, metrics: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(telemetry).with_context(|| format!("reading {}", telemetry.display()))?;
    let runs = read_runs(&text)?;
    let n_paths = runs[0][0].paths.len();
    // held-out runs: the last fifth, at least one
    let n_test = (runs.len() / 5).max(1);
    if runs.len() < 2 {
        bail!("need at least two telemetry runs to hold one out");
    }
    let (train_runs, test_runs) = runs.split_at(runs.len() - n_test);
    let scaler = fit_scaler(train_runs)?;
    let train = Dataset::from_runs(train_runs, &scaler)?;
    let test = Dataset::from_runs(test_runs, &scaler)?;
    let tc = dara_core::predictor::TrainConfig { seed: ctx.seed, ..ctx.config.predictor_training.clone() };
    let (model, outcome) = match arch {
        Arch::Linear => (Model::Linear(LinearPredictor::fit(&train)?), None),
        Arch::Transformer => {
            let mut cfg: TransformerConfig = ctx.config.transformer.clone();
            if let Some(d) = depth {
                let resized = TransformerConfig::with_depth(d);
                cfg.blocks = resized.blocks;
                cfg.dropout = resized.dropout;
            }
            cfg.n_features = train.n_features;
            cfg.n_outputs = train.n_outputs;
            let (fit, val) = train.split(1.0 - tc.val_fraction);
            let (m, o) = train_transformer(cfg, &fit, &val, &tc, ctx.exec())?;
            (Model::Transformer(m), Some(o))
        }
    };
    let predictor = Predictor::new(n_paths, scaler, model)?;
    let report = predictor.evaluate(&test, ctx.exec())?;
    let per_horizon: Vec<f64> = (0..HORIZONS).map(|h| horizon_nrmse(&report, n_paths, h)).collect();
    PredictorCheckpoint::new(predictor.clone(), ctx.seed, ctx.hash.clone()).save(out)?;
    let metrics_path = metrics.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(out, ".metrics.json"));
    write_json(
        &metrics_path,
        &serde_json::json!({
            "config_hash": ctx.hash,
            "seed": ctx.seed,
            "arch": predictor.arch(),
            "train_windows": train.len(),
            "test_windows": test.len(),
            "nrmse_mean": report.mean,
            "nrmse_per_horizon_ms": (0..HORIZONS).map(|h| ((h + 1) * 100).to_string()).zip(per_horizon).collect::<std::collections::BTreeMap<_, _>>(),
            "training": outcome,
        }),
    )?;
    log::info!("{} predictor: mean NRMSE {:.5}", predictor.arch(), report.mean);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_agent_cmd(
    ctx: &Ctx,
    predictor_path: &Path,
    out: &Path,
    variant: Variant,
    levels: Option<usize>,
    episodes: Option<usize>,
    log_path: Option<&Path>,
    cycle_log: Option<&Path>,
    paths: &PathArgs,
) -> Result<()> {
    let scenario = ctx.scenario(paths)?;
    let predictor = load_predictor(predictor_path)?;
    check_paths(&predictor, &scenario)?;
    let k = levels.unwrap_or(ctx.config.action_levels);
    let space = ActionSpace::with_granularity(k, scenario.n_paths()).map_err(|e| usage(e.to_string()))?;
    let mut env = Env::new(
        scenario,
        predictor.clone(),
        space.clone(),
        ctx.config.weights,
        variant.source(),
        ctx.env_config(paths),
        ctx.seed,
    )?;
    let cfg = AgentTrainConfig {
        episodes: episodes.unwrap_or(ctx.config.agent_episodes),
        seed: ctx.seed,
        dqn: ctx.config.dqn.clone(),
    };
    let mut cycles = match cycle_log {
        Some(p) => {
            let mut w = create(p)?;
            write_cycle_csv_header(&mut w, env.state().values.len(), space.n_paths(), Some(&ctx.header()))?;
            Some(w)
        }
        None => None,
    };
    let (agent, logs) = train_agent_traced(
        &mut env,
        &cfg,
        |l| log::info!("episode {} reward {:.3} preemptive {:.2}", l.episode, l.total_reward, l.preemptive_rate()),
        |r| match cycles.as_mut() {
            Some(w) => write_cycle_csv_row(w, r),
            None => Ok(()),
        },
    )?;
    if let Some(mut w) = cycles {
        w.flush()?;
    }
    let ckpt = PolicyCheckpoint {
        version: FORMAT_VERSION,
        seed: ctx.seed,
        config_hash: ctx.hash.clone(),
        source: variant.source(),
        levels: space.levels().to_vec(),
        weights: ctx.config.weights,
        agent,
        predictor: (*predictor).clone(),
    };
    ckpt.save(out)?;
    let log_path = log_path.map(Path::to_path_buf).unwrap_or_else(|| with_suffix(out, ".episodes.csv"));
    write_episode_csv(create(&log_path)?, &logs, Some(&ctx.header()))?;
    Ok(())
}

fn ablate_cmd(
    ctx: &Ctx,
    predictor_path: &Path,
    out_dir: &Path,
    runs: Option<usize>,
    episodes: Option<usize>,
    methods: Option<&str>,
    paths: &PathArgs,
) -> Result<()> {
    let scenario = ctx.scenario(paths)?;
    let predictor = load_predictor(predictor_path)?;
    check_paths(&predictor, &scenario)?;
    let methods = match methods {
        None => Method::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|m| Method::parse(m.trim()).map_err(|e| usage(e.to_string())))
            .collect::<Result<Vec<_>>>()?,
    };
    let cfg = AblationConfig {
        runs: runs.unwrap_or(ctx.config.ablation.runs),
        episodes: episodes.unwrap_or(ctx.config.agent_episodes),
        eval_episodes: ctx.config.ablation.eval_episodes,
        seed: ctx.seed,
        granularity: ctx.config.action_levels,
        methods,
        env: ctx.env_config(paths),
        dqn: ctx.config.dqn.clone(),
        weights: ctx.config.weights,
        exec: ctx.exec(),
    };
    let results = run_ablation(&scenario, predictor, &cfg, |r| {
        log::info!("{} run {}: reward {:.3}", r.method.name(), r.run, r.mean_reward())
    })?;
    let summary = summarise(&results);
    fs::create_dir_all(out_dir)?;
    write_summary_csv(create(&out_dir.join("methods.csv"))?, &summary, Some(&ctx.header()))?;
    write_comparison_csv(create(&out_dir.join("comparisons.csv"))?, &comparisons(&summary, ctx.seed)?, Some(&ctx.header()))?;
    let mut w = create(&out_dir.join("runs.csv"))?;
    writeln!(w, "# {}", ctx.header())?;
    writeln!(w, "method,run,mean_reward,preemptive_rate,goodput_mbps")?;
    for r in &results {
        writeln!(w, "{},{},{:.6},{:.4},{:.4}", r.method.name(), r.run, r.mean_reward(), r.preemptive_rate(), r.goodput_bps() / 1e6)?;
    }
    Ok(())
}

fn parse_scheduler(spec: &str) -> Result<(SimPolicy, Option<PolicyCheckpoint>)> {
    let policy = match spec {
        "rr" => SimPolicy::Packet(PacketScheduler::round_robin()),
        "cpf" => SimPolicy::Packet(PacketScheduler::Cpf),
        "minrtt" => SimPolicy::Packet(PacketScheduler::MinRtt),
        "reactive" => SimPolicy::Fractions(Policy::Reactive),
        "random" => SimPolicy::Fractions(Policy::Random),
        s if s.starts_with("static:") => {
            let level: u8 = s[7..].parse().map_err(|_| usage(format!("bad static level in {s:?}")))?;
            SimPolicy::Fractions(Policy::Static(level))
        }
        s if s.starts_with("dara:") => {
            let path = Path::new(&s[5..]);
            let ckpt = PolicyCheckpoint::load(path).with_context(|| format!("loading policy {}", path.display()))?;
            return Ok((SimPolicy::Fractions(Policy::Greedy(Box::new(ckpt.agent.clone()))), Some(ckpt)));
        }
        other => return Err(usage(format!("unknown scheduler {other:?}"))),
    };
    Ok((policy, None))
}

fn simulate_cmd(ctx: &Ctx, spec: &str, duration_ms: u64, single: Option<usize>, out: &Path, paths: &PathArgs) -> Result<()> {
    let mut scenario = ctx.scenario(paths)?;
    if let Some(i) = single {
        if i >= scenario.n_paths() {
            bail!(usage(format!("path {i} does not exist; the scenario has {}", scenario.n_paths())));
        }
        scenario = scenario.single_path(i);
    }
    let (policy, ckpt) = parse_scheduler(spec)?;
    let (space, predictor) = match &ckpt {
        Some(c) => {
            check_paths(&c.predictor, &scenario)?;
            (c.space()?, Some(Arc::new(c.predictor.clone())))
        }
        None => (ActionSpace::with_granularity(ctx.config.action_levels, scenario.n_paths())?, None),
    };
    if let SimPolicy::Fractions(Policy::Static(level)) = &policy {
        if !space.contains(*level) {
            bail!(usage(format!("static level {level} is not one of {:?}", space.levels())));
        }
    }
    let m = simulate(&scenario, &policy, predictor, &space, duration_ms, ctx.seed)?;
    let mut v = serde_json::to_value(&m)?;
    v["config_hash"] = ctx.hash.clone().into();
    v["seed"] = ctx.seed.into();
    v["scheduler"] = spec.into();
    v["paths"] = scenario.n_paths().into();
    write_json(out, &v)?;
    log::info!("{spec}: goodput {:.3} Mbps", m.goodput_mbps);
    Ok(())
}

fn calibrate_cmd(
    ctx: &Ctx,
    predictor_path: &Path,
    out: &Path,
    iterations: Option<usize>,
    episodes: Option<usize>,
    paths: &PathArgs,
) -> Result<()> {
    let scenario = ctx.scenario(paths)?;
    let predictor = load_predictor(predictor_path)?;
    check_paths(&predictor, &scenario)?;
    let iterations = iterations.unwrap_or(ctx.config.calibration.iterations);
    if iterations == 0 {
        bail!(usage("iterations must be at least 1"));
    }
    let space = ActionSpace::with_granularity(ctx.config.action_levels, scenario.n_paths())?;
    let cfg = CalibrationConfig {
        iterations,
        episodes_per_candidate: episodes.unwrap_or(ctx.config.calibration.episodes_per_candidate),
        seed: ctx.seed,
        env: ctx.env_config(paths),
        train: AgentTrainConfig { dqn: ctx.config.dqn.clone(), ..Default::default() },
        exec: ctx.exec(),
        ..Default::default()
    };
    let (best, board) = random_search(&scenario, predictor, &space, &cfg)?;
    write_leaderboard_csv(create(out)?, &board, Some(&ctx.header()))?;
    log::info!("best weights {:?}", best.as_array());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if cli.sequential {
        config.exec = Execution::Sequential;
    }
    let ctx = Ctx { hash: config_hash(&config), config, seed: cli.seed };
    match &cli.command {
        Command::GenTrace { out, cycle_ms, burst_ms, burst_rate, trough_rate, stable, duration_ms } => {
            gen_trace(&ctx, out, *cycle_ms, *burst_ms, burst_rate, trough_rate, stable.as_deref(), *duration_ms)
        }
        Command::GenTelemetry { out, paths } => gen_telemetry(&ctx, out, paths),
        Command::TrainPredictor { telemetry, out, arch, depth, metrics } => {
            train_predictor_cmd(&ctx, telemetry, out, *arch, *depth, metrics.as_deref())
        }
        Command::TrainAgent { predictor, out, variant, action_levels, episodes, log, cycle_log, paths } => {
            train_agent_cmd(
                &ctx,
                predictor,
                out,
                *variant,
                *action_levels,
                *episodes,
                log.as_deref(),
                cycle_log.as_deref(),
                paths,
            )
        }
        Command::Ablate { predictor, out_dir, runs, episodes, methods, paths } => {
            ablate_cmd(&ctx, predictor, out_dir, *runs, *episodes, methods.as_deref(), paths)
        }
        Command::Simulate { scheduler, duration_ms, single_path, out, paths } => {
            simulate_cmd(&ctx, scheduler, *duration_ms, *single_path, out, paths)
        }
        Command::CalibrateWeights { predictor, out, iterations, episodes, paths } => {
            calibrate_cmd(&ctx, predictor, out, *iterations, *episodes, paths)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

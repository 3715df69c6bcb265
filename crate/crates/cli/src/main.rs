use std::fs::{self, File};
use std::io::{BufWriter, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use edgeid_core::detect::{bmsd, default_band, local_lrt, naive_smoothness, smsd, DEFAULT_HYPOTHESIS_CAP};
use edgeid_core::harness::{
    identification_methods, write_fscore_csv, write_roc_csv, write_runtime_csv, DetectorKind, RunManifest,
};
use edgeid_core::{
    apply_disconnection, enumerate_hypotheses, identify, laplacian, load_graph, lrt_statistic, ml_decision, run_fscore,
    run_roc, run_runtime, sample_covariance, save_graph, DetectorRecord, DisconnectionHypothesis, EdgeKey, Error,
    ExperimentConfig, GraphFilter, GraphSpec, GreedyConfig, LaplacianView, ModelParams, Scenario, SignalBatch,
    WeightedGraph,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNKNOWN_NAME: u8 = 3;
const EXIT_CAP: u8 = 4;
const EXIT_FILE: u8 = 5;
const EXIT_CONFIG: u8 = 6;

/// Marks a malformed configuration file or flag combination.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Marks a missing mandatory flag.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "edgeid",
    version,
    about = "Detect and identify disconnected graph edges from filtered graph signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a graph, its true disconnection set and disconnected-model signals.
    Generate(InstanceArgs),
    /// Score one detector on a signal batch.
    Detect(DetectArgs),
    /// Run greedy identification and print the edge set and trace.
    Identify(IdentifyArgs),
    /// Exhaustive ML decision over all subsets up to --r-max edges.
    OracleMl(OracleArgs),
    /// ROC study; writes CSV and a run manifest.
    Roc(ExperimentArgs),
    /// F-score study; writes CSV and a run manifest.
    Fscore(ExperimentArgs),
    /// Runtime study over the vertex sweep; writes CSV and a run manifest.
    Runtime(ExperimentArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named configuration used when --config is absent (desk or full).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// gmrf, tikhonov or heat.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma_x2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    sigma_w2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<usize>>,
    #[arg(long)]
    r_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    threshold_grid: Option<Vec<f64>>,
    /// Number of vertices of the generated graph.
    #[arg(long)]
    vertices: Option<usize>,
    /// Number of truly disconnected edges.
    #[arg(long)]
    disconnections: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    vertex_sweep: Option<Vec<usize>>,
}

#[derive(Args)]
struct InstanceArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Trial index selecting the generated instance.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    /// Graph JSON file; overrides the generated topology.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Signal CSV (one row per vertex); overrides generated data.
    #[arg(long)]
    signals: Option<PathBuf>,
    /// Which hypothesis generates the data when no signal file is given.
    #[arg(long, value_enum, default_value_t = DataSource::H1)]
    data: DataSource,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataSource {
    H0,
    H1,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// lrt, local-lrt, naive, smsd or bmsd.
    #[arg(long, default_value = "lrt")]
    detector: String,
    /// Candidate edges such as "0-1,2-5"; defaults to the true set.
    #[arg(long)]
    hypothesis: Option<String>,
    /// Threshold gamma; the decision compares the value with gamma + penalty.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    gamma: f64,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Use the full search even when --beta is given.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Maximum number of hypotheses to enumerate.
    #[arg(long, default_value_t = DEFAULT_HYPOTHESIS_CAP)]
    cap: u128,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            ExperimentConfig::from_json(&text)
                .map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::desk(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.filter.is_some() || args.alpha.is_some() || args.tau.is_some() {
        let (mut alpha, mut tau) = (edgeid_core::DEFAULT_ALPHA, edgeid_core::DEFAULT_TAU);
        match cfg.filter {
            GraphFilter::Tikhonov { alpha: a } => alpha = a,
            GraphFilter::Heat { tau: t } => tau = t,
            GraphFilter::Gmrf => {}
        }
        let name = args.filter.clone().unwrap_or_else(|| cfg.filter.name().to_string());
        cfg.filter = GraphFilter::from_name(&name, args.alpha.unwrap_or(alpha), args.tau.unwrap_or(tau))?;
    }
    if let Some(v) = args.sigma_x2 {
        cfg.sigma_x2 = v;
    }
    if let Some(v) = &args.sigma_w2 {
        cfg.sigma_w2 = v.clone();
    }
    if let Some(v) = &args.samples {
        cfg.samples = v.clone();
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = &args.beta {
        cfg.betas = v.clone();
    }
    if let Some(v) = args.r_max {
        cfg.r_max = Some(v);
    }
    if let Some(v) = &args.detectors {
        cfg.detectors = v.clone();
    }
    if let Some(v) = &args.threshold_grid {
        cfg.threshold_grid = Some(v.clone());
    }
    if let Some(v) = args.disconnections {
        cfg.disconnections = v;
    }
    if let Some(v) = &args.vertex_sweep {
        cfg.vertex_sweep = v.clone();
    }
    if let Some(n) = args.vertices {
        match &mut cfg.graph {
            GraphSpec::WattsStrogatz(ws) => ws.n = n,
            GraphSpec::File { .. } => bail!(ConfigError("--vertices needs a generated graph".into())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Graph, true set (when generated), Laplacian, model and data for one instance.
struct Instance {
    graph: WeightedGraph,
    l0: LaplacianView,
    truth: Option<Vec<EdgeKey>>,
    params: ModelParams,
    batch: SignalBatch,
    scenario: Option<Scenario>,
}

fn load_instance(args: &InstanceArgs, cfg: &ExperimentConfig) -> Result<Instance> {
    let params = cfg.model_params(cfg.sigma_w2[0])?;
    let m = cfg.samples[0];
    let scenario = match &args.graph {
        Some(_) => None,
        None => Some(Scenario::new(cfg, args.trial)?),
    };
    let graph = match (&args.graph, &scenario) {
        (Some(path), _) => load_graph(path).with_context(|| format!("reading graph {}", path.display()))?,
        (None, Some(sc)) => sc.graph.clone(),
        (None, None) => unreachable!("scenario exists without a graph file"),
    };
    let l0 = laplacian(&graph)?;
    let batch = match (&args.signals, &scenario) {
        (Some(path), _) => {
            SignalBatch::read_csv(path).with_context(|| format!("reading signals {}", path.display()))?
        }
        (None, Some(sc)) => match args.data {
            DataSource::H1 => sc.h1_data(params, m)?,
            DataSource::H0 => sc.h0_data(params, m)?,
        },
        (None, None) => bail!(UsageError("--graph needs --signals".into())),
    };
    if batch.n() != graph.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: graph.n_vertices(),
            actual: batch.n(),
        }
        .into());
    }
    Ok(Instance {
        graph,
        l0,
        truth: scenario.as_ref().map(|s| s.truth.clone()),
        params,
        batch,
        scenario,
    })
}

fn parse_edges(text: &str) -> Result<Vec<EdgeKey>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .trim()
                .split_once('-')
                .ok_or_else(|| ConfigError(format!("edge '{pair}' is not of the form i-j")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| ConfigError(format!("edge '{pair}' has a non-integer endpoint")))
            };
            Ok(edgeid_core::edge_key(parse(a)?, parse(b)?))
        })
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_generate(args: &InstanceArgs) -> Result<()> {
    let cfg = load_config(&args.cfg)?;
    let out_dir = args
        .out_dir
        .as_ref()
        .ok_or_else(|| UsageError("generate needs --out-dir".into()))?;
    ensure_dir(out_dir)?;
    let inst = load_instance(args, &cfg)?;
    save_graph(&inst.graph, out_dir.join("graph.json"))?;
    inst.batch.write_csv(out_dir.join("signals.csv"))?;
    let truth = inst.truth.unwrap_or_default();
    fs::write(out_dir.join("truth.json"), serde_json::to_string(&truth)? + "\n")?;
    let summary = json!({
        "graph": out_dir.join("graph.json"),
        "signals": out_dir.join("signals.csv"),
        "truth": truth,
        "vertices": inst.graph.n_vertices(),
        "edges": inst.graph.edges().len(),
    });
    emit(&format!("{summary}\n"))
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let cfg = load_config(&args.instance.cfg)?;
    let kind: DetectorKind = args.detector.parse()?;
    let inst = load_instance(&args.instance, &cfg)?;
    let keys = match (&args.hypothesis, &inst.truth) {
        (Some(text), _) => parse_edges(text)?,
        (None, Some(truth)) => truth.clone(),
        (None, None) => bail!(UsageError("--hypothesis is required with --graph".into())),
    };
    let hyp = DisconnectionHypothesis::from_keys(&inst.l0, &keys)?;
    let lk = apply_disconnection(&inst.l0, &hyp)?;
    let s = sample_covariance(&inst.batch);
    let band = default_band(inst.l0.n());
    let stat = match kind {
        DetectorKind::Lrt => lrt_statistic(&s, &inst.l0, &lk, &inst.params)?,
        DetectorKind::LocalLrt => {
            let beta = cfg.betas.first().copied().unwrap_or(1);
            let global = lrt_statistic(&s, &inst.l0, &lk, &inst.params)?;
            let value = local_lrt(&s, &inst.l0, &inst.graph, &hyp, beta, &inst.params)?;
            edgeid_core::LrtStatistic::new(value, global.penalty)
        }
        DetectorKind::Naive => edgeid_core::LrtStatistic::new(naive_smoothness(&inst.batch, &inst.l0)?, 0.0),
        DetectorKind::Smsd => edgeid_core::LrtStatistic::new(smsd(&inst.batch, &inst.l0, &lk, band)?, 0.0),
        DetectorKind::Bmsd => edgeid_core::LrtStatistic::new(bmsd(&inst.batch, &inst.l0, band)?, 0.0),
    };
    let record = DetectorRecord::new(&hyp, stat);
    let mut out = serde_json::to_value(&record)?;
    out["detector"] = json!(kind.name());
    out["gamma"] = json!(args.gamma);
    out["decision"] = json!(stat.decide(args.gamma));
    emit(&format!("{out}\n"))?;
    Ok(())
}

fn cmd_identify(args: &IdentifyArgs) -> Result<()> {
    let cfg = load_config(&args.instance.cfg)?;
    let inst = load_instance(&args.instance, &cfg)?;
    let gc = match (args.full, args.instance.cfg.beta.as_ref().and_then(|b| b.first())) {
        (false, Some(&beta)) => GreedyConfig::local(beta, cfg.r_max),
        _ => GreedyConfig::full(cfg.r_max),
    };
    let method = identification_methods(&ExperimentConfig {
        betas: vec![gc.beta],
        ..cfg.clone()
    })
    .into_iter()
    .find(|(_, c)| *c == gc)
    .map(|(name, _)| name)
    .unwrap_or_else(|| "greedy".into());
    let s = sample_covariance(&inst.batch);
    let outcome = identify(&s, &inst.l0, &inst.graph, &inst.params, &gc)?;
    if let Some(dir) = &args.instance.out_dir {
        ensure_dir(dir)?;
        fs::write(dir.join("trace.jsonl"), outcome.trace_json_lines()?)?;
    }
    let summary = json!({
        "method": method,
        "edges": outcome.edges,
        "truth": inst.truth,
        "iterations": outcome.trace.len(),
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    if args.instance.out_dir.is_none() {
        emit(&outcome.trace_json_lines()?)?;
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let cfg = load_config(&args.instance.cfg)?;
    let inst = load_instance(&args.instance, &cfg)?;
    let r_max = cfg.r_max.unwrap_or(cfg.disconnections);
    let hyps = enumerate_hypotheses(inst.graph.edges(), r_max, args.cap)?;
    let s = sample_covariance(&inst.batch);
    let decision = ml_decision(&s, &hyps, &inst.l0, &inst.params)?;
    let best = &hyps[decision.index];
    let record = DetectorRecord::new(best, decision.scores[decision.index]);
    let summary = json!({
        "hypotheses": hyps.len(),
        "index": decision.index,
        "decision": record,
        "truth": inst.truth,
        "flagged": decision.flagged.len(),
        "scenario_trial": inst.scenario.as_ref().map(|s| s.trial),
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(())
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    if args.cfg.seed.is_none() {
        bail!(UsageError("--seed is required for experiment commands".into()));
    }
    load_config(&args.cfg)
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, outputs: Vec<String>) -> Result<()> {
    let manifest = RunManifest::new(command, cfg, outputs)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_roc(args: &ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(args)?;
    ensure_dir(&args.out_dir)?;
    let tables = run_roc(&cfg)?;
    let mut outputs = Vec::new();
    for t in &tables {
        let name = if tables.len() == 1 {
            "roc.csv".to_string()
        } else {
            format!("roc_sw{}_m{}.csv", t.sigma_w2, t.samples)
        };
        write_roc_csv(t, create(&args.out_dir.join(&name))?)?;
        outputs.push(name);
    }
    write_manifest(&args.out_dir, "roc", &cfg, outputs.clone())?;
    emit(&format!("{}\n", json!({ "outputs": outputs, "trials": cfg.trials })))?;
    Ok(())
}

fn cmd_fscore(args: &ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(args)?;
    ensure_dir(&args.out_dir)?;
    let rows = run_fscore(&cfg)?;
    write_fscore_csv(&rows, create(&args.out_dir.join("fscore.csv"))?)?;
    write_manifest(&args.out_dir, "fscore", &cfg, vec!["fscore.csv".into()])?;
    emit(&format!(
        "{}\n",
        json!({ "outputs": ["fscore.csv"], "rows": rows.len() })
    ))?;
    Ok(())
}

fn cmd_runtime(args: &ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(args)?;
    ensure_dir(&args.out_dir)?;
    let rows = run_runtime(&cfg)?;
    write_runtime_csv(&rows, create(&args.out_dir.join("runtime.csv"))?)?;
    write_manifest(&args.out_dir, "runtime", &cfg, vec!["runtime.csv".into()])?;
    emit(&format!(
        "{}\n",
        json!({ "outputs": ["runtime.csv"], "rows": rows.len() })
    ))?;
    Ok(())
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return EXIT_FILE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Unsupported(_)) => EXIT_UNKNOWN_NAME,
        Some(Error::TooManyHypotheses { .. }) => EXIT_CAP,
        Some(Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Format(_)) => EXIT_FILE,
        Some(Error::InvalidParameter(_)) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Identify(a) => cmd_identify(a),
        Command::OracleMl(a) => cmd_oracle(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Fscore(a) => cmd_fscore(a),
        Command::Runtime(a) => cmd_runtime(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

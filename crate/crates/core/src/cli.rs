//! Command-line front end. The `innet` binary only parses arguments and
//! calls [`run`]; everything else lives here so it can be tested in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::exec::{make_weights, run_block, ExecError, Tensor};
use crate::netsim::{
    self, measured_rates, run_scenario, BatchReport, Mode, NetsimError, ScenarioFile,
};
use crate::pipeline::{PipelineError, PipelineSpec};
use crate::plan::{make_plan, ExactRate, PartitionPlan, PlanError};
use crate::scoring::{self, Distance, FeatureSet, ScoringError};
use crate::wire::{self, TensorDoc, WireError};

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration. Exit status 2.
    #[error("{0}")]
    Config(String),
    /// Inputs parsed but failed validation while running. Exit status 3.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::IndivisibleInput { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Pipeline(p) => p.into(),
            PlanError::Config(_) | PlanError::Invalid(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<NetsimError> for CliError {
    fn from(e: NetsimError) -> Self {
        match e {
            NetsimError::Config(_) | NetsimError::Invalid(_) | NetsimError::Pipeline(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ExecError> for CliError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Pipeline(p) => p.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<WireError> for CliError {
    fn from(e: WireError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::Csv(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sf,
    Cf,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sf => Mode::Sf,
            ModeArg::Cf => Mode::Cf,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "innet",
    version,
    about = "In-network anomaly abstraction: planning, execution and chain simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a pipeline into VNFs and emit the plan and its filter-rate table.
    Plan(PlanArgs),
    /// Run a scenario file (or a bundled one) and write latency reports.
    Simulate(SimulateArgs),
    /// Execute the pipeline, optionally split by a plan, and emit features and digests.
    Infer(InferArgs),
    /// Score features against a reference, or compute AUC from labeled scores.
    Score(ScoreArgs),
    /// Summarize previously written simulation reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Pipeline JSON file or preset name.
    #[arg(long, default_value = "canonical")]
    pub pipeline: String,
    #[arg(long, default_value_t = 163_840)]
    pub m: usize,
    /// Processing nodes in path order, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "client,s1,s2")]
    pub chain: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file or bundled name (theoretical, paper-calibrated, sweep).
    #[arg(long)]
    pub scenario: String,
    /// Override the mode of every scenario.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Override weight and jitter seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, default_value = "canonical")]
    pub pipeline: String,
    /// Synthetic input length (ignored with --input).
    #[arg(long, default_value_t = 16_384)]
    pub m: usize,
    /// 16-bit little-endian PCM file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of synthetic sources.
    #[arg(long, default_value_t = 4)]
    pub sources: usize,
    /// Weight and synthetic-input seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Feature JSON (as written by `infer`).
    #[arg(long, requires = "reference")]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub distance: DistanceArg,
    /// CSV of `score,label` rows; prints the AUC.
    #[arg(long, conflicts_with = "features")]
    pub labeled: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceArg {
    Euclidean,
    Cosine,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `*.report.json` files written by `simulate`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Plan(a) => cmd_plan(a).map(|s| print!("{s}")),
        Command::Simulate(a) => cmd_simulate(a).map(|s| print!("{s}")),
        Command::Infer(a) => cmd_infer(a).map(|s| print!("{s}")),
        Command::Score(a) => cmd_score(a).map(|s| print!("{s}")),
        Command::Report(a) => cmd_report(a).map(|s| print!("{s}")),
    }
}

fn load_pipeline(arg: &str) -> Result<PipelineSpec, CliError> {
    if let Some(spec) = netsim::preset(arg) {
        return Ok(spec);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{arg}: no such pipeline file or preset"
        )));
    }
    Ok(PipelineSpec::from_path(path)?)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn file_label(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Per-block shapes and filter rates as CSV.
pub fn rate_table(spec: &PipelineSpec, m: usize) -> Result<String, CliError> {
    let shapes = spec.infer_shape(m)?;
    let rates = spec.filter_rates(m)?;
    let mut s = String::from("block,name,channels,frames,rate,rate_value\n");
    for (i, ((b, sh), r)) in spec.blocks.iter().zip(&shapes).zip(&rates).enumerate() {
        let r = ExactRate(*r);
        writeln!(
            s,
            "{i},{},{},{},{r},{}",
            b.name,
            sh.channels,
            sh.frames,
            r.value()
        )
        .unwrap();
    }
    Ok(s)
}

pub fn cmd_plan(a: &PlanArgs) -> Result<String, CliError> {
    let spec = load_pipeline(&a.pipeline)?;
    let chain: Vec<String> = a
        .chain
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let plan = make_plan(&spec, a.m, &chain)?;
    let plan_json = to_json(&plan);
    let rates = rate_table(&spec, a.m)?;
    if let Some(dir) = &a.out {
        write_out(dir, "plan.json", &plan_json)?;
        write_out(dir, "rates.csv", &rates)?;
    }
    Ok(match a.format {
        Format::Json => plan_json,
        Format::Csv => rates,
    })
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    scenario: String,
    mode: Mode,
    runs: usize,
    t_s_median: f64,
    t_p_median: f64,
    t_t_median: f64,
    t_s_p05: f64,
    t_s_p95: f64,
    feature_digest: String,
}

impl SummaryRow {
    fn of(b: &BatchReport) -> Self {
        Self {
            scenario: b.report.scenario.clone(),
            mode: b.report.mode,
            runs: b.report.runs.len(),
            t_s_median: b.summary.t_s.median,
            t_p_median: b.summary.t_p.median,
            t_t_median: b.summary.t_t.median,
            t_s_p05: b.summary.t_s.p05,
            t_s_p95: b.summary.t_s.p95,
            feature_digest: b.report.feature_digest.clone().unwrap_or_default(),
        }
    }
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8")
}

/// Per-run latencies, for CDF plots.
pub fn runs_csv(b: &BatchReport) -> String {
    let mut s = String::from("run,t_p,t_t,t_s\n");
    for (i, r) in b.report.runs.iter().enumerate() {
        writeln!(s, "{i},{},{},{}", r.t_p, r.t_t, r.t_s).unwrap();
    }
    s
}

/// Per-link bytes, theoretical and measured filter rates.
pub fn links_csv(b: &BatchReport) -> String {
    let measured = measured_rates(&b.report).ok();
    let mut s =
        String::from("from,to,bytes,payload_bytes,packets,theoretical_rate,measured_rate\n");
    for (i, l) in b.report.links.iter().enumerate() {
        let m = measured
            .as_ref()
            .map(|v| v[i].to_string())
            .unwrap_or_default();
        writeln!(
            s,
            "{},{},{},{},{},{},{m}",
            l.from,
            l.to,
            l.bytes,
            l.payload_bytes,
            l.packets,
            l.theoretical_rate.value()
        )
        .unwrap();
    }
    s
}

pub fn load_scenarios(arg: &str) -> Result<ScenarioFile, CliError> {
    if let Some(f) = ScenarioFile::bundled(arg) {
        return Ok(f);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{arg}: no such scenario file or bundled scenario ({})",
            ScenarioFile::BUNDLED.join(", ")
        )));
    }
    Ok(ScenarioFile::from_path(path)?)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<String, CliError> {
    let file = load_scenarios(&a.scenario)?;
    let mut rows = Vec::new();
    let mut batches = Vec::new();
    for mut sc in file.expand() {
        if let Some(mode) = a.mode {
            sc.mode = mode.into();
        }
        if let Some(seed) = a.seed {
            sc.seed = seed;
            sc.jitter.seed = seed;
        }
        let batch = run_scenario(&sc)?;
        if let Some(dir) = &a.out {
            let label = file_label(&sc.name);
            write_out(dir, &format!("{label}.report.json"), &to_json(&batch))?;
            write_out(dir, &format!("{label}.runs.csv"), &runs_csv(&batch))?;
            write_out(dir, &format!("{label}.links.csv"), &links_csv(&batch))?;
        }
        rows.push(SummaryRow::of(&batch));
        batches.push(batch);
    }
    let csv = summary_csv(&rows);
    if let Some(dir) = &a.out {
        write_out(dir, "summary.csv", &csv)?;
    }
    Ok(match a.format {
        Format::Csv => csv,
        Format::Json => to_json(&rows),
    })
}

#[derive(Debug, Serialize, PartialEq, Eq)]
pub struct StageDigest {
    pub block: usize,
    pub name: String,
    pub channels: usize,
    pub frames: usize,
    pub digest: String,
}

/// Runs every block, crossing a serialize/deserialize boundary wherever
/// `plan` starts a new VNF. Returns the final tensor and a digest per block.
pub fn execute_with_digests(
    spec: &PipelineSpec,
    seed: u64,
    input: &Tensor,
    plan: Option<&PartitionPlan>,
) -> Result<(Tensor, Vec<StageDigest>), CliError> {
    spec.check_input_len(input.shape().frames)?;
    let boundaries: Vec<usize> = match plan {
        Some(p) => {
            p.validate()?;
            if p.block_count != spec.len() {
                return Err(CliError::Runtime(format!(
                    "plan covers {} blocks, pipeline has {}",
                    p.block_count,
                    spec.len()
                )));
            }
            p.vnfs.iter().map(|v| v.first_block).collect()
        }
        None => Vec::new(),
    };
    let weights = make_weights(spec, seed);
    let mut x = input.clone();
    let mut digests = Vec::with_capacity(spec.len());
    for (i, block) in spec.blocks.iter().enumerate() {
        if i > 0 && boundaries.contains(&i) {
            x = wire::deserialize(&wire::serialize(&x))?;
        }
        x = run_block(block, &weights.blocks[i], &x)?;
        digests.push(StageDigest {
            block: i,
            name: block.name.clone(),
            channels: x.shape().channels,
            frames: x.shape().frames,
            digest: wire::digest(&x),
        });
    }
    Ok((x, digests))
}

fn features_csv(t: &Tensor) -> String {
    let mut s = String::new();
    for c in 0..t.shape().channels {
        let row: Vec<String> = t.row(c).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn cmd_infer(a: &InferArgs) -> Result<String, CliError> {
    let spec = load_pipeline(&a.pipeline)?;
    let input = match &a.input {
        Some(path) => wire::read_pcm16(path)?,
        None => {
            spec.check_input_len(a.m)?;
            scoring::synth_mixture(a.sources, a.m, a.seed).observation
        }
    };
    let plan = a
        .plan
        .as_deref()
        .map(PartitionPlan::from_path)
        .transpose()?;
    let (features, digests) = execute_with_digests(&spec, a.seed, &input, plan.as_ref())?;
    let feat_json = to_json(&TensorDoc::from(&features));
    let digests_json = to_json(&digests);
    if let Some(dir) = &a.out {
        write_out(dir, "features.json", &feat_json)?;
        write_out(dir, "features.csv", &features_csv(&features))?;
        write_out(dir, "digests.json", &digests_json)?;
    }
    Ok(match a.format {
        Format::Json => digests_json,
        Format::Csv => features_csv(&features),
    })
}

fn read_features(path: &Path) -> Result<FeatureSet, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let doc: TensorDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(FeatureSet::new(Tensor::try_from(doc)?))
}

#[derive(Debug, Serialize)]
struct ScoreRow {
    machine: usize,
    score: f64,
    label: scoring::Label,
}

pub fn cmd_score(a: &ScoreArgs) -> Result<String, CliError> {
    if let Some(path) = &a.labeled {
        let file = fs::File::open(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let samples = scoring::read_scores_csv(file)?;
        let auc = scoring::auc(&samples)?;
        let out = match a.format {
            Format::Json => to_json(&serde_json::json!({ "samples": samples.len(), "auc": auc })),
            Format::Csv => format!("samples,auc\n{},{auc}\n", samples.len()),
        };
        if let Some(dir) = &a.out {
            write_out(dir, "auc.txt", &out)?;
        }
        return Ok(out);
    }
    let (Some(f), Some(r)) = (&a.features, &a.reference) else {
        return Err(CliError::Config(
            "score needs --features and --reference, or --labeled".into(),
        ));
    };
    let distance = match a.distance {
        DistanceArg::Euclidean => Distance::Euclidean,
        DistanceArg::Cosine => Distance::Cosine,
    };
    let scores = scoring::anomaly_score_with(&read_features(f)?, &read_features(r)?, distance)?;
    let labels = scoring::threshold_decision(&scores, a.threshold);
    let rows: Vec<ScoreRow> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(machine, (&score, label))| ScoreRow {
            machine,
            score,
            label,
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).expect("csv row");
    }
    let csv = String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8");
    if let Some(dir) = &a.out {
        write_out(dir, "scores.csv", &csv)?;
    }
    Ok(match a.format {
        Format::Json => to_json(&rows),
        Format::Csv => csv,
    })
}

pub fn cmd_report(a: &ReportArgs) -> Result<String, CliError> {
    let mut rows = Vec::new();
    let mut link_rows = String::from("scenario,from,to,bytes,theoretical_rate,measured_rate\n");
    for path in &a.reports {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let batch: BatchReport = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let measured = measured_rates(&batch.report)?;
        for (l, m) in batch.report.links.iter().zip(measured) {
            writeln!(
                link_rows,
                "{},{},{},{},{},{m}",
                batch.report.scenario,
                l.from,
                l.to,
                l.bytes,
                l.theoretical_rate.value()
            )
            .unwrap();
        }
        rows.push(SummaryRow::of(&batch));
    }
    let summary = summary_csv(&rows);
    if let Some(dir) = &a.out {
        write_out(dir, "report_summary.csv", &summary)?;
        write_out(dir, "report_links.csv", &link_rows)?;
    }
    Ok(match a.format {
        Format::Csv => format!("{summary}\n{link_rows}"),
        Format::Json => to_json(&rows),
    })
}

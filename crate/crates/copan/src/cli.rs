use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use copan_core::cop::{compute_series, SeriesOptions};
use copan_core::engine::{
    serve, Engine, EngineClient, EngineConfig, MockModel, NegamaxMock, Perspective, ScriptedMock, ServeOptions, ServeOutcome,
};
use copan_core::features::{extract_features, FeatureParams, SegmentParams};
use copan_core::quality::{game_summary, QualityOptions};
use copan_core::report::{read_json, render_chart, write_csv, write_json};
use copan_core::{parse_sgf, CopSeries, FeatureSet};

#[derive(Parser, Debug)]
#[command(name = "copan", version, about = "Cost-of-passing analysis for Go games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate every position of a game and write its cost-of-passing series.
    Analyze(AnalyzeArgs),
    /// Fit the baseline and detect segments, stages and sente.
    Features(FeaturesArgs),
    /// Per-player performance and game totals.
    Quality(QualityArgs),
    /// Vega-Lite chart of a series and its features.
    Chart(ChartArgs),
    /// Speak the engine protocol on stdin/stdout with a mock engine.
    MockEngine(MockEngineArgs),
    /// HTTP and WebSocket service.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct EngineArgs {
    /// Engine command line, split like a shell would.
    #[arg(long)]
    pub engine_cmd: String,
    #[arg(long, default_value_t = 100)]
    pub visits: u32,
    #[arg(long, default_value = "side-to-move")]
    pub perspective: Perspective,
    /// Seconds to wait for each query.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    /// File receiving the engine's stderr.
    #[arg(long)]
    pub engine_log: Option<PathBuf>,
}

impl EngineArgs {
    pub fn config(&self) -> Result<EngineConfig, CliError> {
        let command = shlex::split(&self.engine_cmd)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| CliError::Input(anyhow!("cannot parse engine command {:?}", self.engine_cmd)))?;
        Ok(EngineConfig {
            command,
            visits: self.visits,
            reporting_perspective: self.perspective,
            timeout: Duration::from_secs(self.timeout),
            max_in_flight: self.max_in_flight,
            stderr_log: self.engine_log.clone(),
            ..Default::default()
        })
    }

    pub fn spawn(&self) -> Result<EngineClient, CliError> {
        EngineClient::spawn(self.config()?).map_err(|e| CliError::Engine(e.into()))
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub game: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Also evaluate the final position, giving the last move an effect.
    #[arg(long)]
    pub include_terminal: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    pub analysis: PathBuf,
    /// Elevation threshold in points; defaults to max(3, 2 MAD).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub one_sided_frac: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QualityArgs {
    pub analysis: PathBuf,
    /// Clamp each move's realized value into [0, cost].
    #[arg(long)]
    pub clamp_realized: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChartArgs {
    pub analysis: PathBuf,
    pub features: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MockEngineArgs {
    /// JSON fixture of scripted answers; replaces the negamax model.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 12.0)]
    pub base: f64,
    #[arg(long, default_value_t = 0.05)]
    pub decay: f64,
    /// Extra value for one move, as MOVE:POINTS. Repeatable.
    #[arg(long = "spike", value_parser = parse_spike)]
    pub spikes: Vec<(usize, f64)>,
    /// Convention the answers are reported in.
    #[arg(long, default_value = "side-to-move")]
    pub perspective: Perspective,
    /// Answer in shuffled batches of up to this many requests.
    #[arg(long, default_value_t = 1)]
    pub shuffle_window: usize,
    #[arg(long, default_value_t = 0)]
    pub delay_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit without answering on the first request for this position.
    #[arg(long)]
    pub crash_at: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Static files served at the root, e.g. a built UI.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

fn parse_spike(s: &str) -> Result<(usize, f64), String> {
    let (k, v) = s.split_once(':').ok_or_else(|| format!("expected MOVE:POINTS, got {s:?}"))?;
    let k = k.trim().parse().map_err(|e| format!("bad move number {k:?}: {e}"))?;
    let v = v.trim().parse().map_err(|e| format!("bad value {v:?}: {e}"))?;
    Ok((k, v))
}

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Engine(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(1),
            CliError::Engine(_) => ExitCode::from(2),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "input error: {e:#}"),
            CliError::Engine(e) => write!(f, "engine error: {e:#}"),
        }
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Input(e.into())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display())).map_err(input),
        None => writeln!(io::stdout(), "{text}").map_err(input),
    }
}

fn emit_json<V: serde::Serialize>(out: Option<&Path>, value: &V) -> Result<(), CliError> {
    match out {
        Some(path) => write_json(path, value).map_err(input),
        None => emit(None, &serde_json::to_string_pretty(value).map_err(input)?),
    }
}

fn load_series(path: &Path) -> Result<CopSeries, CliError> {
    read_json(path).map_err(input)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Features(args) => {
            let series = load_series(&args.analysis)?;
            let params = FeatureParams {
                segments: SegmentParams { tau: args.tau, one_sided_frac: args.one_sided_frac },
                ..Default::default()
            };
            let features = extract_features(&series, &params).map_err(input)?;
            emit_json(args.out.as_deref(), &features)
        }
        Command::Quality(args) => {
            let series = load_series(&args.analysis)?;
            let options = QualityOptions { clamp_realized: args.clamp_realized, ..Default::default() };
            let summary = game_summary(&series, options).map_err(input)?;
            emit_json(args.out.as_deref(), &summary.report())
        }
        Command::Chart(args) => {
            let series = load_series(&args.analysis)?;
            let features: FeatureSet = read_json(&args.features).map_err(input)?;
            let chart = render_chart(&series, &features.baseline, &features.segments, &features.stages);
            emit(args.out.as_deref(), &chart.to_json())
        }
        Command::MockEngine(args) => mock_engine(args),
        Command::Serve(args) => crate::service::run(args),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.game).with_context(|| format!("reading {}", args.game.display())).map_err(input)?;
    let record = parse_sgf(&text).with_context(|| format!("parsing {}", args.game.display())).map_err(input)?;
    let client = args.engine.spawn()?;
    let options = SeriesOptions { include_terminal: args.include_terminal, ..Default::default() };
    let series: CopSeries =
        compute_series(&record, &client, args.engine.visits, options).map_err(|e| CliError::Engine(e.into()))?;
    log::info!("analyzed {} positions with {}", series.len(), client.describe());
    match (args.format, args.out.as_deref()) {
        (Format::Csv, Some(path)) => write_csv(path, &series).map_err(input),
        (Format::Csv, None) => Err(CliError::Input(anyhow!("--format csv needs --out"))),
        (Format::Json, out) => emit_json(out, &series),
    }
}

fn mock_engine(args: MockEngineArgs) -> Result<(), CliError> {
    let engine: Arc<dyn Engine> = match &args.fixture {
        Some(path) => Arc::new(ScriptedMock::from_file(path).map_err(input)?),
        None => {
            let model =
                MockModel { base_value: args.base, decay: args.decay, spikes: args.spikes.iter().copied().collect(), ..Default::default() };
            Arc::new(NegamaxMock::new(model).map_err(input)?)
        }
    };
    let options = ServeOptions {
        perspective: args.perspective,
        shuffle_window: args.shuffle_window.max(1),
        delay: Duration::from_millis(args.delay_ms),
        seed: args.seed,
        crash_at: args.crash_at,
        ..Default::default()
    };
    let outcome = serve(BufReader::new(io::stdin()), io::stdout(), engine.as_ref(), &options)
        .map_err(|e| CliError::Engine(e.into()))?;
    match outcome {
        ServeOutcome::Finished => Ok(()),
        ServeOutcome::Crashed => Err(CliError::Engine(anyhow!("simulated crash at position {:?}", args.crash_at))),
    }
}

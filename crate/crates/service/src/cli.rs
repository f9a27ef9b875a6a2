//! The `envforge` command line.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use envforge_core::episode::{EnvId, Episode, EpisodeConfig, Simulator};
use envforge_core::grpo::CheckInput;
use envforge_core::metrics::{self, ResultMatrix};
use envforge_core::rollout::{self, PolicyKind, PolicySpec, SuiteSpec};
use envforge_core::world::World;
use envforge_core::AugmentSpec;
use serde_json::json;

use crate::protocol::DEFAULT_MAX_SESSIONS;
use crate::server::{Server, ServerConfig};
use crate::transport::{self, Transport};

#[derive(Debug, Parser)]
#[command(name = "envforge", version, about = "Text environments, rollouts, and evaluation metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve reset/step sessions over newline-delimited JSON.
    Serve(ServeArgs),
    /// Run scripted episodes and write trajectories as JSONL.
    Rollout(RolloutArgs),
    /// Summarize a trajectory JSONL file.
    Metrics(MetricsArgs),
    /// Rank training domains from a cross-domain results table.
    Rank(RankArgs),
    /// Show one observation before and after augmentation.
    AugmentPreview(PreviewArgs),
    /// Evaluate the clipped surrogate on a logged batch.
    GrpoCheck(GrpoArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `stdio` or `tcp:HOST:PORT`.
    #[arg(long, default_value = "stdio")]
    pub transport: Transport,
    #[arg(long, default_value_t = DEFAULT_MAX_SESSIONS)]
    pub max_sessions: usize,
    /// Seed for resets that do not name one.
    #[arg(long, env = "ENVFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub env: EnvId,
    #[arg(long)]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = 128)]
    pub episodes: usize,
    #[arg(long, env = "ENVFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_steps: Option<u32>,
    #[command(flatten)]
    pub augment: AugmentArgs,
    /// Neither require nor emit `<think>` blocks.
    #[arg(long)]
    pub no_thinking: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Enables augmentation with this information volume.
    #[arg(long)]
    pub augment_epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.5, requires = "augment_epsilon")]
    pub augment_prob: f64,
    #[arg(long, default_value_t = 0.5, requires = "augment_epsilon")]
    pub augment_alpha: f64,
    /// Defaults to the rollout seed.
    #[arg(long, requires = "augment_epsilon")]
    pub augment_seed: Option<u64>,
}

impl AugmentArgs {
    fn spec(&self, default_seed: u64) -> Option<AugmentSpec> {
        self.augment_epsilon.map(|epsilon| AugmentSpec {
            epsilon,
            prob: self.augment_prob,
            alpha: self.augment_alpha,
            seed: self.augment_seed.unwrap_or(default_seed),
        })
    }
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Trajectory JSONL, or `-` for stdin.
    #[arg(long)]
    pub input: PathBuf,
    /// Length charged to failed episodes; defaults to the logged max_steps.
    #[arg(long)]
    pub t_max: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankFormat {
    Json,
    Text,
    Both,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Results JSON `{rows: [{train, evals: {domain: rate}, id_rate}]}`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tie_threshold: f64,
    #[arg(long, value_enum, default_value_t = RankFormat::Both)]
    pub format: RankFormat,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub env: EnvId,
    #[arg(long, env = "ENVFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub augment_seed: u64,
    /// Actions applied before the preview, each as a bare action string.
    #[arg(long = "action")]
    pub actions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GrpoArgs {
    /// Batch JSON, or `-` for stdin.
    #[arg(long)]
    pub input: PathBuf,
}

fn read_input(path: &Path) -> Result<String> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text)?;
    } else {
        File::open(path).with_context(|| format!("opening {}", path.display()))?.read_to_string(&mut text)?;
    }
    Ok(text)
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Rollout(a) => rollout_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Rank(a) => rank_cmd(a),
        Command::AugmentPreview(a) => preview_cmd(a),
        Command::GrpoCheck(a) => grpo_cmd(a),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let server = Server::new(ServerConfig { max_sessions: a.max_sessions, default_seed: a.seed });
    match a.transport {
        Transport::Stdio => transport::serve_stdio(&server)?,
        Transport::Tcp(addr) => {
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            transport::serve_tcp(Arc::new(server), listener)?;
        }
    }
    Ok(())
}

fn rollout_cmd(a: RolloutArgs) -> Result<()> {
    if a.episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let mut config = EpisodeConfig::for_env(a.env);
    if let Some(m) = a.max_steps {
        config.max_steps = m;
    }
    config.thinking_required = !a.no_thinking;
    let spec = SuiteSpec {
        env: a.env,
        episodes: a.episodes,
        suite_seed: a.seed,
        config,
        augment: a.augment.spec(a.seed),
        policy: PolicySpec { kind: a.policy, emits_thinking: !a.no_thinking },
    };
    let result = rollout::run_suite(&spec)?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    rollout::write_jsonl(BufWriter::new(file), &result.trajectories)?;
    print_json(&json!({ "out": a.out, "suite": spec, "summary": result.summary }))
}

fn metrics_cmd(a: MetricsArgs) -> Result<()> {
    let text = read_input(&a.input)?;
    let trajectories = rollout::read_jsonl(BufReader::new(text.as_bytes()))?;
    let Some(first) = trajectories.first() else { bail!("no trajectories in {}", a.input.display()) };
    let t_max = match a.t_max {
        Some(t) => t,
        None => {
            let t = first.config.max_steps;
            if trajectories.iter().any(|x| x.config.max_steps != t) {
                bail!("trajectories disagree on max_steps; pass --t-max");
            }
            t
        }
    };
    let summary = metrics::summarize(&trajectories, t_max)?;
    let invalid: usize = trajectories.iter().map(|t| t.invalid_steps()).sum();
    print_json(&json!({ "t_max": t_max, "summary": summary, "invalid_steps": invalid }))
}

fn rank_cmd(a: RankArgs) -> Result<()> {
    let matrix: ResultMatrix = serde_json::from_str(&read_input(&a.input)?).context("parsing results JSON")?;
    let ranking = metrics::ood_ranking(&matrix, a.tie_threshold)?;
    if matches!(a.format, RankFormat::Json | RankFormat::Both) {
        print_json(&serde_json::to_value(&ranking)?)?;
    }
    if matches!(a.format, RankFormat::Text | RankFormat::Both) {
        print!("{}", ranking.to_text());
    }
    Ok(())
}

fn preview_cmd(a: PreviewArgs) -> Result<()> {
    let mut config = EpisodeConfig::for_env(a.env);
    config.thinking_required = false;
    config.max_steps = config.max_steps.max(a.actions.len() as u32 + 1);
    let spec = AugmentSpec { epsilon: a.epsilon, prob: 1.0, alpha: a.alpha, seed: a.augment_seed };
    let mut plain = Episode::start(World::generate(a.env, a.seed, &config)?, a.seed, config, None)?;
    let mut augmented = Episode::start(World::generate(a.env, a.seed, &config)?, a.seed, config, Some(spec))?;
    for action in &a.actions {
        let raw = rollout::format_response(action, None);
        plain.apply(&raw)?;
        augmented.apply(&raw)?;
    }
    let after = augmented.observation();
    let injected: Vec<&str> = after.injected_spans.iter().map(|s| &after.text[s.start..s.end]).collect();
    print_json(&json!({
        "env": a.env,
        "seed": a.seed,
        "augment": spec,
        "before": plain.observation().text,
        "after": after.text,
        "injected_spans": after.injected_spans,
        "injected": injected,
        "stripped_matches_before": after.stripped_text() == plain.observation().text,
        "state_unchanged": plain.sim().observe().text == augmented.sim().observe().text,
    }))
}

fn grpo_cmd(a: GrpoArgs) -> Result<()> {
    let input: CheckInput = serde_json::from_str(&read_input(&a.input)?).context("parsing GRPO batch")?;
    print_json(&serde_json::to_value(input.run()?)?)
}

pub fn main() -> std::process::ExitCode {
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

//! Command-line front end: argument parsing, config overrides and output.

pub mod server;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kbforge::kbstore::{compute_stats, import_ttl};
use kbforge::pipeline::{
    EvalKind, EvalOptions, Pipeline, PipelineConfig, PipelineError, ProviderKind, Stage, StageReport,
};
use rust_decimal::Decimal;
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "kbforge", version, about = "Recursive LLM knowledge elicitation pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `state_dir` from the config.
    #[arg(long, global = true)]
    pub state_dir: Option<PathBuf>,
    /// Print full reports as JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Breadth-first elicitation from the seed entity.
    Crawl(CrawlArgs),
    /// Cluster relation or class names.
    Consolidate {
        #[arg(value_enum)]
        kind: NameKindArg,
        #[command(flatten)]
        clustering: ClusteringArgs,
    },
    /// Build the class taxonomy.
    Taxonomy,
    /// Canonicalize names and merge duplicate entities.
    Dedup {
        #[arg(long = "class")]
        class: Option<String>,
        #[arg(long = "block")]
        block: Option<String>,
    },
    /// Write the consolidated KB as Turtle.
    Export {
        #[arg(long)]
        namespace: Option<String>,
    },
    /// Counts over the most consolidated KB available.
    Stats,
    /// Serve the exported KB over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
    },
    /// Evaluate the KB; without a kind, run the eval stage.
    Eval(EvalArgs),
    /// Run every stage in order.
    Run,
    /// Show the state of every stage.
    Status,
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// Spend cap across the pipeline.
    #[arg(long)]
    pub budget: Option<Decimal>,
    /// Scripted world file.
    #[arg(long, conflicts_with = "live")]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub live: bool,
    /// Commit this layer and stop; run crawl again to continue.
    #[arg(long)]
    pub stop_after_layer: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NameKindArg {
    Relations,
    Classes,
}

#[derive(Debug, Args)]
pub struct ClusteringArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub high: Option<f64>,
    #[arg(long)]
    pub low: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalKindArg {
    Entities,
    Triples,
    Taxonomy,
    Overlap,
    Cutoff,
    Consistency,
    Bias,
}

impl From<EvalKindArg> for EvalKind {
    fn from(k: EvalKindArg) -> Self {
        match k {
            EvalKindArg::Entities => EvalKind::Entities,
            EvalKindArg::Triples => EvalKind::Triples,
            EvalKindArg::Taxonomy => EvalKind::Taxonomy,
            EvalKindArg::Overlap => EvalKind::Overlap,
            EvalKindArg::Cutoff => EvalKind::Cutoff,
            EvalKindArg::Consistency => EvalKind::Consistency,
            EvalKindArg::Bias => EvalKind::Bias,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub kind: Option<EvalKindArg>,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Consistency probe subject; defaults to the seed entity.
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub gap: Option<usize>,
}

/// Config from `--config` (or defaults) with command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.state_dir {
        cfg.state_dir = dir.clone();
    }
    match &cli.command {
        Command::Crawl(a) => {
            if let Some(s) = &a.seed {
                cfg.seed = s.clone();
            }
            if let Some(d) = a.max_depth {
                cfg.max_depth = d;
            }
            if let Some(b) = a.budget {
                cfg.budget_cap = Some(b);
            }
            if let Some(w) = &a.world {
                cfg.provider.kind = ProviderKind::Mock;
                cfg.provider.world = Some(w.clone());
            }
            if a.live {
                cfg.provider.kind = ProviderKind::Live;
            }
        }
        Command::Consolidate { clustering, .. } => {
            let c = &mut cfg.clustering;
            c.alpha = clustering.alpha.unwrap_or(c.alpha);
            c.high = clustering.high.unwrap_or(c.high);
            c.low = clustering.low.unwrap_or(c.low);
        }
        Command::Dedup { class, block } => {
            if let Some(c) = class {
                cfg.dedup.target_class = c.clone();
            }
            if let Some(b) = block {
                cfg.dedup.blocking_predicate = b.clone();
            }
        }
        Command::Export { namespace: Some(ns) } => cfg.namespace = ns.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Where a command's output goes: a rendered report, or a long-running
/// server the caller starts.
pub enum Outcome {
    Text(String),
    Serve { kb: kbforge::kbstore::KnowledgeBase, addr: SocketAddr },
}

fn render(reports: &[StageReport], json: bool) -> String {
    if json {
        let v: Vec<&StageReport> = reports.iter().collect();
        return serde_json::to_string_pretty(&v).expect("reports serialize");
    }
    let mut out = String::new();
    for r in reports {
        out.push_str(&format!(
            "== {} ({:?}, cost {}, config {})\n",
            r.stage,
            r.status,
            r.cost,
            &r.config_hash[..12]
        ));
        out.push_str(&r.table);
    }
    out
}

pub fn execute(cli: &Cli) -> Result<Outcome, PipelineError> {
    let cfg = resolve_config(cli)?;
    let mut pipeline = Pipeline::open(cfg)?;
    let json = cli.json;
    let one = |r: StageReport| Ok(Outcome::Text(render(&[r], json)));
    match &cli.command {
        Command::Crawl(a) => {
            pipeline.stop_crawl_after(a.stop_after_layer);
            one(pipeline.run_stage(Stage::Crawl)?)
        }
        Command::Consolidate { kind, .. } => one(pipeline.run_stage(match kind {
            NameKindArg::Relations => Stage::Relations,
            NameKindArg::Classes => Stage::Classes,
        })?),
        Command::Taxonomy => one(pipeline.run_stage(Stage::Taxonomy)?),
        Command::Dedup { .. } => one(pipeline.run_stage(Stage::Dedup)?),
        Command::Export { .. } => one(pipeline.run_stage(Stage::Export)?),
        Command::Run => Ok(Outcome::Text(render(&pipeline.run_all()?, json))),
        Command::Eval(a) => match a.kind {
            None => one(pipeline.run_stage(Stage::Eval)?),
            Some(kind) => {
                let base = EvalOptions::from_config(pipeline.config());
                let opts = EvalOptions {
                    sample: a.sample.unwrap_or(base.sample),
                    seed: a.seed.unwrap_or(base.seed),
                    subject: a.subject.clone(),
                    runs: a.runs.unwrap_or(base.runs),
                    gap: a.gap.unwrap_or(base.gap),
                };
                one(pipeline.run_eval(kind.into(), &opts)?)
            }
        },
        Command::Stats => {
            let stats = compute_stats(&pipeline.current_kb()?);
            Ok(Outcome::Text(if json {
                serde_json::to_string_pretty(&stats).expect("stats serialize")
            } else {
                stats.to_table()
            }))
        }
        Command::Status => {
            let state = pipeline.state();
            if json {
                return Ok(Outcome::Text(serde_json::to_string_pretty(state).expect("state serializes")));
            }
            let mut out = format!("state directory {}\nspent {}\n", pipeline.dir().display(), state.spent);
            for s in Stage::ALL {
                let line = match state.stages.get(s.name()) {
                    None => "not run".to_string(),
                    Some(r) if r.complete => "complete".to_string(),
                    Some(r) if r.usable => "usable, can continue".to_string(),
                    Some(_) => "incomplete".to_string(),
                };
                out.push_str(&format!("  {:<10} {line}\n", s.name()));
            }
            Ok(Outcome::Text(out))
        }
        Command::Serve { port, bind } => {
            let path = pipeline.exported_ttl()?;
            let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Io { path: path.clone(), source: e })?;
            let kb = import_ttl(&text).map_err(|e| PipelineError::Stage {
                stage: "serve".into(),
                message: e.to_string(),
            })?;
            // the lock is released here; serving only reads the export
            drop(pipeline);
            Ok(Outcome::Serve {
                kb,
                addr: SocketAddr::new(*bind, *port),
            })
        }
    }
}

//! Stage orchestration over a state directory.
//!
//! Stages form a DAG: crawl feeds relation and class clustering, class
//! clustering feeds the taxonomy, dedup needs both maps and the taxonomy,
//! export needs dedup and eval needs export. Each stage hashes its
//! parameters and input artifacts; a completed stage whose hash and
//! outputs are unchanged is not run again.

pub mod config;
pub mod state;

use crate::consolidate::{
    apply_cluster_map, build_kb_taxonomy, class_frequencies, cluster_names, dedup_entities, relation_frequencies,
    ClusterMap, ConsolidateError, NameKind, NgramEmbedder, TaxonomyNode,
};
use crate::crawler::{CrawlConfig, CrawlError, Crawler, StopReason};
use crate::evalharness::{
    bias_report, consistency_probe, eval_entities, eval_triples, evaluate_taxonomy, overlap_report,
    sample_entity_labels, year_histogram, EvalError, LlmJudge, MapLexicon, ReferenceKbClient, ScriptedReference,
    ScriptedSearch, SearchProvider,
};
use crate::gateway::{Gateway, GatewayConfig, GatewayError, ScriptedWorld};
use crate::kbstore::{export_ttl, KnowledgeBase};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub use config::{BatchConfig, EvalConfig, PipelineConfig, ProviderConfig, ProviderKind};
pub use state::{PipelineState, StageRecord, StateLock};

pub const CHECKPOINT: &str = "checkpoint.jsonl";
pub const KB_CRAWL: &str = "kb.crawl.jsonl";
pub const RELATION_MAP: &str = "relations.map.jsonl";
pub const CLASS_MAP: &str = "classes.map.jsonl";
pub const TAXONOMY: &str = "taxonomy.json";
pub const KB: &str = "kb.jsonl";
pub const MERGE_REPORT: &str = "merge_report.jsonl";
pub const KB_TTL: &str = "kb.ttl";

const EMBEDDER_ID: &str = "ngram-trigram-512";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("'{stage}' needs stage '{requires}' to run first (kbforge {})", .requires.command())]
    Dependency { stage: String, requires: Stage },
    #[error("state directory is locked by process {holder} ({}); delete the lock file if no pipeline is running", .path.display())]
    Locked { path: PathBuf, holder: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String },
    #[error("provider failure in stage '{stage}': {message}")]
    Provider { stage: String, message: String },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for provider failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Provider { .. } => 2,
            _ => 1,
        }
    }

    fn stage(stage: impl fmt::Display, message: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }

    fn from_gateway(stage: impl fmt::Display, e: &GatewayError) -> Self {
        match e {
            GatewayError::Provider { .. } => PipelineError::Provider {
                stage: stage.to_string(),
                message: e.to_string(),
            },
            _ => Self::stage(stage, e),
        }
    }

    fn from_consolidate(stage: Stage, e: ConsolidateError) -> Self {
        match &e {
            ConsolidateError::Gateway(g) => Self::from_gateway(stage, g),
            _ => Self::stage(stage, e),
        }
    }

    fn from_eval(stage: impl fmt::Display, e: EvalError) -> Self {
        match &e {
            EvalError::Gateway(g) => Self::from_gateway(stage, g),
            _ => Self::stage(stage, e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Crawl,
    Relations,
    Classes,
    Taxonomy,
    Dedup,
    Export,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Crawl,
        Stage::Relations,
        Stage::Classes,
        Stage::Taxonomy,
        Stage::Dedup,
        Stage::Export,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Crawl => "crawl",
            Stage::Relations => "relations",
            Stage::Classes => "classes",
            Stage::Taxonomy => "taxonomy",
            Stage::Dedup => "dedup",
            Stage::Export => "export",
            Stage::Eval => "eval",
        }
    }

    /// The CLI invocation that runs this stage.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Relations => "consolidate relations",
            Stage::Classes => "consolidate classes",
            other => other.name(),
        }
    }

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Crawl => &[],
            Stage::Relations | Stage::Classes => &[Stage::Crawl],
            Stage::Taxonomy => &[Stage::Classes],
            Stage::Dedup => &[Stage::Relations, Stage::Taxonomy],
            Stage::Export => &[Stage::Dedup],
            Stage::Eval => &[Stage::Export],
        }
    }

    /// Artifacts read by the stage.
    fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Crawl => &[],
            Stage::Relations | Stage::Classes => &[KB_CRAWL],
            Stage::Taxonomy => &[KB_CRAWL, CLASS_MAP],
            Stage::Dedup => &[KB_CRAWL, RELATION_MAP, CLASS_MAP, TAXONOMY],
            Stage::Export => &[KB],
            Stage::Eval => &[KB, TAXONOMY, KB_TTL],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Entities,
    Triples,
    Taxonomy,
    Overlap,
    Cutoff,
    Consistency,
    Bias,
}

impl EvalKind {
    pub fn name(self) -> &'static str {
        match self {
            EvalKind::Entities => "entities",
            EvalKind::Triples => "triples",
            EvalKind::Taxonomy => "taxonomy",
            EvalKind::Overlap => "overlap",
            EvalKind::Cutoff => "cutoff",
            EvalKind::Consistency => "consistency",
            EvalKind::Bias => "bias",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    UpToDate,
    /// Stopped early; running the stage again continues it.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderIds {
    pub llm: String,
    pub embedder: String,
    pub search: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub config_hash: String,
    pub input_hash: String,
    pub seed: String,
    pub random_seed: u64,
    pub providers: ProviderIds,
    /// Spend of this run, and of all stages so far.
    pub cost: String,
    pub total_spent: String,
    pub elapsed_ms: u64,
    pub summary: Value,
    pub table: String,
}

struct Outcome {
    outputs: Vec<&'static str>,
    summary: Value,
    table: String,
    usable: bool,
    complete: bool,
    cost: Decimal,
    /// Recorded, then surfaced as an error.
    failure: Option<PipelineError>,
}

impl Outcome {
    fn done(outputs: Vec<&'static str>, summary: Value, table: String, cost: Decimal) -> Self {
        Outcome {
            outputs,
            summary,
            table,
            usable: true,
            complete: true,
            cost,
            failure: None,
        }
    }
}

/// One pipeline over one state directory, holding its lock.
pub struct Pipeline {
    config: PipelineConfig,
    config_hash: String,
    dir: PathBuf,
    state: PipelineState,
    crawl_stop_after: Option<u32>,
    _lock: StateLock,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn hash_json(v: &Value) -> String {
    state::sha256_bytes(v.to_string().as_bytes())
}

impl Pipeline {
    pub fn open(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let dir = config.state_dir.clone();
        for sub in [state::ARTIFACTS, state::REPORTS] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| PipelineError::io(&p, e))?;
        }
        let lock = StateLock::acquire(&dir)?;
        let state = PipelineState::load(&dir)?;
        Ok(Pipeline {
            config_hash: config.hash(),
            config,
            dir,
            state,
            crawl_stop_after: None,
            _lock: lock,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.dir.join(state::ARTIFACTS).join(name)
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.dir.join(state::REPORTS).join(format!("{name}.json"))
    }

    /// Commit the crawl after this layer and stop; the next crawl run
    /// continues from the checkpoint.
    pub fn stop_crawl_after(&mut self, layer: Option<u32>) {
        self.crawl_stop_after = layer;
    }

    pub fn run_all(&mut self) -> Result<Vec<StageReport>, PipelineError> {
        Stage::ALL.iter().map(|&s| self.run_stage(s)).collect()
    }

    /// Fails with a dependency error unless `requires` left usable outputs.
    pub fn require(&self, stage: &str, requires: Stage) -> Result<(), PipelineError> {
        let ok = self.state.stages.get(requires.name()).is_some_and(|r| {
            r.usable && r.outputs.keys().all(|f| self.artifact(f).exists())
        });
        if ok {
            Ok(())
        } else {
            Err(PipelineError::Dependency {
                stage: stage.to_string(),
                requires,
            })
        }
    }

    /// Most consolidated KB available: dedup output, else the crawl output.
    pub fn current_kb(&self) -> Result<KnowledgeBase, PipelineError> {
        let name = if self.require("stats", Stage::Dedup).is_ok() {
            KB
        } else if self.artifact(KB_CRAWL).exists() {
            KB_CRAWL
        } else {
            return Err(PipelineError::Dependency {
                stage: "stats".into(),
                requires: Stage::Crawl,
            });
        };
        self.load_kb(name)
    }

    /// Exported TTL path; serving depends on the export stage only.
    pub fn exported_ttl(&self) -> Result<PathBuf, PipelineError> {
        self.require("serve", Stage::Export)?;
        Ok(self.artifact(KB_TTL))
    }

    fn load_kb(&self, name: &str) -> Result<KnowledgeBase, PipelineError> {
        let path = self.artifact(name);
        KnowledgeBase::load(&path).map_err(|e| PipelineError::stage(name, format!("{}: {e}", path.display())))
    }

    fn file_hash(&self, path: &Path) -> Result<Value, PipelineError> {
        Ok(if path.exists() {
            Value::String(state::sha256_file(path)?)
        } else {
            Value::Null
        })
    }

    /// Identity of the LLM (and for eval, search and reference) providers
    /// as it enters the input hash.
    fn provider_fingerprint(&self, with_eval: bool) -> Result<Value, PipelineError> {
        let p = &self.config.provider;
        let mut v = match p.kind {
            ProviderKind::Mock => json!({
                "kind": "mock",
                "world": self.file_hash(p.world.as_deref().unwrap_or(Path::new("")))?,
            }),
            ProviderKind::Live => json!({"kind": "live", "model": live_model_id()}),
        };
        if with_eval {
            for (key, path) in [
                ("search", &p.search_fixture),
                ("reference", &p.reference_fixture),
                ("lexicon", &self.config.eval.lexicon),
            ] {
                v[key] = match path {
                    Some(path) => self.file_hash(path)?,
                    None => Value::Null,
                };
            }
        }
        Ok(v)
    }

    fn provider_ids(&self) -> ProviderIds {
        let p = &self.config.provider;
        let name = |path: &Option<PathBuf>, fallback: &str| match path {
            Some(path) => format!("fixture:{}", path.display()),
            None => fallback.to_string(),
        };
        match p.kind {
            ProviderKind::Mock => ProviderIds {
                llm: format!("scripted:{}", p.world.as_deref().unwrap_or(Path::new("")).display()),
                embedder: EMBEDDER_ID.into(),
                search: name(&p.search_fixture, "none"),
                reference: name(&p.reference_fixture, "none"),
            },
            ProviderKind::Live => ProviderIds {
                llm: format!("live:{}", live_model_id()),
                embedder: EMBEDDER_ID.into(),
                search: "live:KBFORGE_SEARCH_URL".into(),
                reference: "live:KBFORGE_REFKB_URL".into(),
            },
        }
    }

    fn stage_params(&self, stage: Stage) -> Result<Value, PipelineError> {
        let c = &self.config;
        Ok(match stage {
            Stage::Crawl => json!({
                "seed": c.seed, "max_depth": c.max_depth, "batch": c.batch,
                "provider": self.provider_fingerprint(false)?,
            }),
            Stage::Relations | Stage::Classes => json!({"clustering": c.clustering, "embedder": EMBEDDER_ID}),
            Stage::Taxonomy => json!({"provider": self.provider_fingerprint(false)?}),
            Stage::Dedup => json!({"dedup": c.dedup, "embedder": EMBEDDER_ID}),
            Stage::Export => json!({"namespace": c.namespace}),
            Stage::Eval => json!({
                "eval": c.eval, "random_seed": c.random_seed,
                "provider": self.provider_fingerprint(true)?,
            }),
        })
    }

    fn input_hash(&self, stage: Stage) -> Result<String, PipelineError> {
        let mut inputs = serde_json::Map::new();
        for name in stage.inputs() {
            inputs.insert(name.to_string(), self.file_hash(&self.artifact(name))?);
        }
        Ok(hash_json(&json!({
            "stage": stage.name(),
            "params": self.stage_params(stage)?,
            "inputs": inputs,
        })))
    }

    fn up_to_date(&self, stage: Stage, input_hash: &str) -> Result<bool, PipelineError> {
        let Some(rec) = self.state.stages.get(stage.name()) else {
            return Ok(false);
        };
        if !rec.complete || rec.input_hash != input_hash {
            return Ok(false);
        }
        for (name, hash) in &rec.outputs {
            let path = self.artifact(name);
            if !path.exists() || &state::sha256_file(&path)? != hash {
                return Ok(false);
            }
        }
        Ok(self.report_path(stage.name()).exists())
    }

    fn remaining_budget(&self) -> Option<Decimal> {
        self.config
            .budget_cap
            .map(|cap| (cap - self.state.spent).max(Decimal::ZERO))
    }

    /// A gateway for one stage. Scripted worlds are reloaded so every
    /// stage sees them from the start.
    pub fn gateway(&self) -> Result<Gateway, PipelineError> {
        let b = &self.config.batch;
        let cfg = GatewayConfig {
            max_batch_size: b.max_batch_size,
            max_concurrent_batches: b.max_concurrent_batches,
            max_attempts: b.max_attempts,
            prices: self.config.provider.prices,
            budget_cap: self.remaining_budget(),
            ..GatewayConfig::default()
        };
        match self.config.provider.kind {
            ProviderKind::Mock => {
                let path = self.config.provider.world.as_deref().unwrap_or(Path::new(""));
                let world = ScriptedWorld::load(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                Ok(Gateway::new(Arc::new(world), cfg))
            }
            ProviderKind::Live => live_gateway(cfg),
        }
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<StageReport, PipelineError> {
        for &p in stage.prerequisites() {
            self.require(stage.name(), p)?;
        }
        let input_hash = self.input_hash(stage)?;
        if self.up_to_date(stage, &input_hash)? {
            return self.replay_report(stage.name());
        }
        let started = Instant::now();
        let outcome = match stage {
            Stage::Crawl => self.crawl(&input_hash)?,
            Stage::Relations => self.cluster(NameKind::Relation)?,
            Stage::Classes => self.cluster(NameKind::Class)?,
            Stage::Taxonomy => self.taxonomy()?,
            Stage::Dedup => self.dedup()?,
            Stage::Export => self.export()?,
            Stage::Eval => self.eval_all()?,
        };
        let mut outputs = std::collections::BTreeMap::new();
        for name in &outcome.outputs {
            outputs.insert(name.to_string(), state::sha256_file(&self.artifact(name))?);
        }
        self.state.spent += outcome.cost;
        self.state.stages.insert(
            stage.name().to_string(),
            StageRecord {
                input_hash: input_hash.clone(),
                outputs,
                usable: outcome.usable,
                complete: outcome.complete,
                finished_at: now(),
            },
        );
        self.state.save(&self.dir)?;
        let status = if outcome.complete {
            StageStatus::Ran
        } else {
            StageStatus::Partial
        };
        let report = self.report(stage.name(), status, input_hash, outcome.cost, started, outcome.summary, outcome.table);
        self.write_report(stage.name(), &report)?;
        match outcome.failure {
            Some(e) => Err(e),
            None => Ok(report),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        stage: &str,
        status: StageStatus,
        input_hash: String,
        cost: Decimal,
        started: Instant,
        summary: Value,
        table: String,
    ) -> StageReport {
        StageReport {
            stage: stage.to_string(),
            status,
            config_hash: self.config_hash.clone(),
            input_hash,
            seed: self.config.seed.clone(),
            random_seed: self.config.random_seed,
            providers: self.provider_ids(),
            cost: cost.to_string(),
            total_spent: self.state.spent.to_string(),
            elapsed_ms: started.elapsed().as_millis() as u64,
            summary,
            table,
        }
    }

    fn write_report(&self, name: &str, report: &StageReport) -> Result<(), PipelineError> {
        let json = serde_json::to_vec_pretty(report).expect("report serializes");
        state::write_atomic(&self.report_path(name), &json)?;
        let txt = self.dir.join(state::REPORTS).join(format!("{name}.txt"));
        state::write_atomic(&txt, report.table.as_bytes())
    }

    fn replay_report(&self, name: &str) -> Result<StageReport, PipelineError> {
        let path = self.report_path(name);
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let mut report: StageReport =
            serde_json::from_str(&text).map_err(|e| PipelineError::stage(name, format!("corrupt report: {e}")))?;
        report.status = StageStatus::UpToDate;
        report.config_hash = self.config_hash.clone();
        report.cost = Decimal::ZERO.to_string();
        report.total_spent = self.state.spent.to_string();
        report.elapsed_ms = 0;
        self.write_report(name, &report)?;
        Ok(report)
    }

    fn save_kb(&self, kb: &KnowledgeBase, name: &str) -> Result<(), PipelineError> {
        let mut buf = Vec::new();
        kb.write_jsonl(&mut buf).map_err(|e| PipelineError::stage(name, e))?;
        state::write_atomic(&self.artifact(name), &buf)
    }

    fn write_artifact(&self, name: &str, text: &str) -> Result<(), PipelineError> {
        state::write_atomic(&self.artifact(name), text.as_bytes())
    }

    fn read_artifact(&self, name: &str) -> Result<String, PipelineError> {
        let path = self.artifact(name);
        std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
    }

    fn cluster_map(&self, name: &str) -> Result<ClusterMap, PipelineError> {
        ClusterMap::from_jsonl(&self.read_artifact(name)?).map_err(|e| PipelineError::stage(name, e))
    }

    fn taxonomy_tree(&self) -> Result<TaxonomyNode, PipelineError> {
        serde_json::from_str(&self.read_artifact(TAXONOMY)?).map_err(|e| PipelineError::stage(TAXONOMY, e))
    }

    // ---- stages

    fn crawl(&mut self, input_hash: &str) -> Result<Outcome, PipelineError> {
        let ckpt = self.artifact(CHECKPOINT);
        let resume = ckpt.exists()
            && self
                .state
                .stages
                .get(Stage::Crawl.name())
                .is_some_and(|r| r.input_hash == input_hash && !r.complete);
        if !resume && ckpt.exists() {
            std::fs::remove_file(&ckpt).map_err(|e| PipelineError::io(&ckpt, e))?;
        }
        let gateway = self.gateway()?;
        let b = &self.config.batch;
        let cfg = CrawlConfig {
            max_depth: self.config.max_depth,
            ner_batch_size: b.ner_batch_size,
            max_triples_per_subject: b.max_triples_per_subject,
            batch_retries: b.batch_retries,
            stop_after_layer: self.crawl_stop_after,
            checkpoint: Some(ckpt),
        };
        let crawl_err = |e: CrawlError| match &e {
            CrawlError::Gateway(g) => PipelineError::from_gateway(Stage::Crawl, g),
            _ => PipelineError::stage(Stage::Crawl, e),
        };
        let mut crawler = if resume {
            Crawler::resume(gateway, cfg)
        } else {
            Crawler::new(gateway, cfg)
        }
        .map_err(crawl_err)?;
        crawler.seed(&self.config.seed).map_err(crawl_err)?;
        let report = crawler.crawl().map_err(crawl_err)?;
        let kb = crawler.into_kb();
        self.save_kb(&kb, KB_CRAWL)?;
        let (usable, complete, failure) = match report.stop_reason {
            StopReason::Completed => (true, true, None),
            StopReason::BudgetExhausted => (true, false, None),
            StopReason::Interrupted => (false, false, None),
            StopReason::ProviderError => (
                false,
                false,
                Some(PipelineError::Provider {
                    stage: Stage::Crawl.name().into(),
                    message: format!(
                        "crawl stopped in layer {}; run crawl again to resume",
                        report.partial_layer.unwrap_or(0)
                    ),
                }),
            ),
        };
        Ok(Outcome {
            outputs: vec![CHECKPOINT, KB_CRAWL],
            summary: json!({
                "entities": kb.len(),
                "triples": kb.triple_count(),
                "resumed": resume,
                "report": report,
            }),
            table: report.to_table(),
            usable,
            complete,
            cost: report.cost.monetary_cost,
            failure,
        })
    }

    fn cluster(&mut self, kind: NameKind) -> Result<Outcome, PipelineError> {
        let stage = match kind {
            NameKind::Relation => Stage::Relations,
            NameKind::Class => Stage::Classes,
        };
        let kb = self.load_kb(KB_CRAWL)?;
        let names = match kind {
            NameKind::Relation => relation_frequencies(&kb),
            NameKind::Class => class_frequencies(&kb),
        };
        let map = cluster_names(&names, &self.config.clustering, &NgramEmbedder::default())
            .map_err(|e| PipelineError::from_consolidate(stage, e))?;
        let out = match kind {
            NameKind::Relation => RELATION_MAP,
            NameKind::Class => CLASS_MAP,
        };
        self.write_artifact(out, &map.to_jsonl())?;
        let mut table = format!(
            "{kind} names: {}  clusters: {}  merged: {}\n",
            map.len(),
            map.cluster_count(),
            map.merges()
        );
        for id in 0..map.cluster_count() {
            let members = map.members(id);
            if members.len() > 1 {
                let names: Vec<&str> = members.keys().map(String::as_str).collect();
                table.push_str(&format!("  {} <- {}\n", map.representative_of_cluster(id), names.join(", ")));
            }
        }
        Ok(Outcome::done(
            vec![out],
            json!({"names": map.len(), "clusters": map.cluster_count(), "merged": map.merges()}),
            table,
            Decimal::ZERO,
        ))
    }

    fn taxonomy(&mut self) -> Result<Outcome, PipelineError> {
        let mut kb = self.load_kb(KB_CRAWL)?;
        let classes = self.cluster_map(CLASS_MAP)?;
        apply_cluster_map(&mut kb, &classes, NameKind::Class)
            .map_err(|e| PipelineError::from_consolidate(Stage::Taxonomy, e))?;
        let gateway = self.gateway()?;
        let (root, report) =
            build_kb_taxonomy(&kb, &gateway).map_err(|e| PipelineError::from_consolidate(Stage::Taxonomy, e))?;
        self.write_artifact(TAXONOMY, &root.to_pretty_json())?;
        let table = format!(
            "taxonomy: {} classes, height {}, root '{}'\ninserted {}  skipped {}  direct attachments {}  llm calls {}\n",
            root.size(),
            root.height(),
            root.class_name,
            report.inserted,
            report.skipped.len(),
            report.fallback_attachments.len(),
            report.llm_calls
        );
        Ok(Outcome::done(
            vec![TAXONOMY],
            json!({"size": root.size(), "height": root.height(), "report": report}),
            table,
            gateway.ledger().monetary_cost,
        ))
    }

    fn dedup(&mut self) -> Result<Outcome, PipelineError> {
        let mut kb = self.load_kb(KB_CRAWL)?;
        let err = |e| PipelineError::from_consolidate(Stage::Dedup, e);
        let rel = apply_cluster_map(&mut kb, &self.cluster_map(RELATION_MAP)?, NameKind::Relation).map_err(err)?;
        let cls = apply_cluster_map(&mut kb, &self.cluster_map(CLASS_MAP)?, NameKind::Class).map_err(err)?;
        let merges = dedup_entities(&mut kb, &self.config.dedup, &NgramEmbedder::default()).map_err(err)?;
        self.save_kb(&kb, KB)?;
        self.write_artifact(MERGE_REPORT, &merges.to_jsonl())?;
        let table = format!(
            "relation triples rewritten {}/{}\nclass triples rewritten {}/{}\ndedup: {} candidates, {} blocks, {} pairs, {} groups, {} entities merged\ntriples {} -> {}\n",
            rel.triples_rewritten,
            rel.triples_total,
            cls.triples_rewritten,
            cls.triples_total,
            merges.candidates,
            merges.blocks,
            merges.pairs_compared,
            merges.groups.len(),
            merges.merged_entities(),
            merges.triples_before,
            merges.triples_after
        );
        Ok(Outcome::done(
            vec![KB, MERGE_REPORT],
            json!({
                "relations": rel, "classes": cls,
                "candidates": merges.candidates, "groups": merges.groups.len(),
                "merged_entities": merges.merged_entities(),
                "triples_before": merges.triples_before, "triples_after": merges.triples_after,
            }),
            table,
            Decimal::ZERO,
        ))
    }

    fn export(&mut self) -> Result<Outcome, PipelineError> {
        let kb = self.load_kb(KB)?;
        let ttl = export_ttl(&kb, &self.config.namespace);
        self.write_artifact(KB_TTL, &ttl)?;
        let statements = ttl.lines().filter(|l| l.starts_with('<')).count();
        let table = format!(
            "exported {} entities, {} triples as {} statements, {} bytes\n",
            kb.len(),
            kb.triple_count(),
            statements,
            ttl.len()
        );
        Ok(Outcome::done(
            vec![KB_TTL],
            json!({"entities": kb.len(), "triples": kb.triple_count(), "statements": statements, "bytes": ttl.len()}),
            table,
            Decimal::ZERO,
        ))
    }

    fn eval_all(&mut self) -> Result<Outcome, PipelineError> {
        let mut kinds = vec![
            EvalKind::Entities,
            EvalKind::Triples,
            EvalKind::Taxonomy,
            EvalKind::Cutoff,
            EvalKind::Bias,
        ];
        if self.config.provider.kind == ProviderKind::Live || self.config.provider.reference_fixture.is_some() {
            kinds.push(EvalKind::Overlap);
        }
        let kb = self.load_kb(KB)?;
        let gateway = self.gateway()?;
        let opts = EvalOptions::from_config(&self.config);
        let mut summary = serde_json::Map::new();
        let mut table = String::new();
        for kind in kinds {
            let (value, text) = self.evaluate(kind, &kb, &gateway, &opts)?;
            state::write_atomic(
                &self.report_path(&format!("eval-{}", kind.name())),
                &serde_json::to_vec_pretty(&value).expect("report serializes"),
            )?;
            summary.insert(kind.name().to_string(), value);
            table.push_str(&text);
            table.push('\n');
        }
        Ok(Outcome::done(vec![], Value::Object(summary), table, gateway.ledger().monetary_cost))
    }

    /// Run one evaluation outside the stage graph. Needs the export stage.
    pub fn run_eval(&mut self, kind: EvalKind, opts: &EvalOptions) -> Result<StageReport, PipelineError> {
        let name = format!("eval-{}", kind.name());
        self.require(&name, Stage::Export)?;
        let started = Instant::now();
        let kb = self.load_kb(KB)?;
        let gateway = self.gateway()?;
        let (summary, table) = self.evaluate(kind, &kb, &gateway, opts)?;
        let cost = gateway.ledger().monetary_cost;
        self.state.spent += cost;
        self.state.save(&self.dir)?;
        let input_hash = hash_json(&json!({
            "eval": kind.name(), "options": opts,
            "kb": self.file_hash(&self.artifact(KB))?,
            "provider": self.provider_fingerprint(true)?,
        }));
        let report = self.report(&name, StageStatus::Ran, input_hash, cost, started, summary, table);
        self.write_report(&name, &report)?;
        Ok(report)
    }

    fn search_provider(&self) -> Result<Box<dyn SearchProvider>, PipelineError> {
        match (self.config.provider.kind, &self.config.provider.search_fixture) {
            (ProviderKind::Mock, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
                let s = ScriptedSearch::from_jsonl(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                Ok(Box::new(s))
            }
            (ProviderKind::Mock, None) => Ok(Box::new(ScriptedSearch::new())),
            (ProviderKind::Live, _) => live_search(),
        }
    }

    fn reference_client(&self) -> Result<Box<dyn ReferenceKbClient>, PipelineError> {
        match (self.config.provider.kind, &self.config.provider.reference_fixture) {
            (ProviderKind::Mock, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
                let r = ScriptedReference::from_jsonl(&text)
                    .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                Ok(Box::new(r))
            }
            (ProviderKind::Mock, None) => Err(PipelineError::Config(
                "overlap evaluation needs provider.reference_fixture or a live provider".into(),
            )),
            (ProviderKind::Live, _) => live_reference(),
        }
    }

    fn lexicon(&self) -> Result<MapLexicon, PipelineError> {
        match &self.config.eval.lexicon {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
                MapLexicon::from_csv(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
            }
            None => Ok(MapLexicon::default()),
        }
    }

    fn evaluate(
        &self,
        kind: EvalKind,
        kb: &KnowledgeBase,
        gateway: &Gateway,
        opts: &EvalOptions,
    ) -> Result<(Value, String), PipelineError> {
        let stage = format!("eval-{}", kind.name());
        let err = |e| PipelineError::from_eval(&stage, e);
        let verify = &self.config.eval.verify;
        Ok(match kind {
            EvalKind::Entities => {
                let judge = LlmJudge::new(gateway.clone());
                let r = eval_entities(kb, &*self.search_provider()?, &judge, opts.sample, opts.seed, verify).map_err(err)?;
                (to_value(&r), r.to_table())
            }
            EvalKind::Triples => {
                let judge = LlmJudge::new(gateway.clone());
                let r = eval_triples(kb, &*self.search_provider()?, &judge, opts.sample, opts.seed, verify).map_err(err)?;
                (to_value(&r), r.to_table())
            }
            EvalKind::Taxonomy => {
                let judge = LlmJudge::new(gateway.clone());
                let r = evaluate_taxonomy(&self.taxonomy_tree()?, &judge).map_err(err)?;
                let table = format!(
                    "taxonomy edges {}  approved {}  best-parent hits {}  errors {}\nedge accuracy {:.4}  best-parent accuracy {:.4}\n",
                    r.edges, r.approved, r.best_parent_hits, r.errors, r.edge_accuracy, r.best_parent_accuracy
                );
                (to_value(&r), table)
            }
            EvalKind::Overlap => {
                let labels = sample_entity_labels(kb, opts.sample, opts.seed);
                let r = overlap_report(&labels, &*self.reference_client()?).map_err(err)?;
                let table = format!(
                    "overlap of {} sampled entities ({} excluded)\nexact {:.4}  fuzzy {:.4}  novel {:.4}\n",
                    r.sampled,
                    r.excluded.len(),
                    r.exact_fraction,
                    r.fuzzy_fraction,
                    r.novel_fraction
                );
                (to_value(&r), table)
            }
            EvalKind::Cutoff => {
                let r = year_histogram(kb, self.config.eval.year_predicate.as_deref(), &self.config.eval.cutoff);
                let table = r.to_table();
                (to_value(&r), table)
            }
            EvalKind::Consistency => {
                let subject = opts.subject.as_deref().unwrap_or(&self.config.seed);
                let r = consistency_probe(subject, opts.runs, opts.gap, gateway).map_err(err)?;
                (to_value(&r), r.to_table())
            }
            EvalKind::Bias => {
                let r = bias_report(kb, &self.config.eval.bias, &self.lexicon()?);
                (to_value(&r), r.to_table())
            }
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Per-invocation evaluation settings; defaults come from the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub sample: usize,
    pub seed: u64,
    pub subject: Option<String>,
    pub runs: usize,
    pub gap: usize,
}

impl EvalOptions {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        EvalOptions {
            sample: cfg.eval.sample,
            seed: cfg.random_seed,
            subject: None,
            runs: cfg.eval.consistency_runs,
            gap: cfg.eval.consistency_gap,
        }
    }
}

fn live_model_id() -> String {
    std::env::var("KBFORGE_LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into())
}

#[cfg(feature = "live")]
fn live_gateway(cfg: GatewayConfig) -> Result<Gateway, PipelineError> {
    let provider = crate::gateway::live::ChatCompletionsProvider::from_env()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(Gateway::new(Arc::new(provider), cfg))
}

#[cfg(feature = "live")]
fn live_search() -> Result<Box<dyn SearchProvider>, PipelineError> {
    let s = crate::evalharness::live::HttpSearch::from_env().map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(Box::new(s))
}

#[cfg(feature = "live")]
fn live_reference() -> Result<Box<dyn ReferenceKbClient>, PipelineError> {
    let r = crate::evalharness::live::WikibaseClient::from_env().map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(Box::new(r))
}

#[cfg(not(feature = "live"))]
fn live_unavailable<T>() -> Result<T, PipelineError> {
    Err(PipelineError::Config(
        "provider.kind = \"live\" needs a build with the `live` feature".into(),
    ))
}

#[cfg(not(feature = "live"))]
fn live_gateway(_cfg: GatewayConfig) -> Result<Gateway, PipelineError> {
    live_unavailable()
}

#[cfg(not(feature = "live"))]
fn live_search() -> Result<Box<dyn SearchProvider>, PipelineError> {
    live_unavailable()
}

#[cfg(not(feature = "live"))]
fn live_reference() -> Result<Box<dyn ReferenceKbClient>, PipelineError> {
    live_unavailable()
}

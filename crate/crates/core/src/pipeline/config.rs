//! Pipeline configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the file.
//! Keys and endpoints for live providers are read from the environment
//! only.

use super::PipelineError;
use crate::consolidate::{ClusteringConfig, DedupConfig};
use crate::evalharness::{BiasConfig, CutoffConfig, VerifyConfig};
use crate::gateway::ledger::PriceTable;
use crate::kbstore::DEFAULT_NAMESPACE;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Scripted world file; search and reference fixtures optional.
    Mock,
    /// HTTP providers configured through `KBFORGE_*` environment variables.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub world: Option<PathBuf>,
    pub search_fixture: Option<PathBuf>,
    pub reference_fixture: Option<PathBuf>,
    pub prices: PriceTable,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            world: None,
            search_fixture: None,
            reference_fixture: None,
            prices: PriceTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub max_batch_size: usize,
    pub max_concurrent_batches: usize,
    pub max_attempts: u32,
    pub batch_retries: u32,
    pub ner_batch_size: usize,
    pub max_triples_per_subject: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            max_batch_size: 10_000,
            max_concurrent_batches: 100,
            max_attempts: 3,
            batch_retries: 2,
            ner_batch_size: 100,
            max_triples_per_subject: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Sample size per layer for entity and triple precision, and total
    /// for the overlap report.
    pub sample: usize,
    pub verify: VerifyConfig,
    pub cutoff: CutoffConfig,
    /// Restrict the year histogram to one predicate.
    pub year_predicate: Option<String>,
    pub bias: BiasConfig,
    /// `name,gender` lines for the first-name estimate.
    pub lexicon: Option<PathBuf>,
    pub consistency_runs: usize,
    pub consistency_gap: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sample: 100,
            verify: VerifyConfig::default(),
            cutoff: CutoffConfig::default(),
            year_predicate: None,
            bias: BiasConfig::default(),
            lexicon: None,
            consistency_runs: 100,
            consistency_gap: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: String,
    pub max_depth: u32,
    pub random_seed: u64,
    /// Total spend allowed across all stages, as a decimal string.
    #[serde(with = "rust_decimal::serde::str_option")]
    pub budget_cap: Option<Decimal>,
    pub state_dir: PathBuf,
    pub namespace: String,
    pub provider: ProviderConfig,
    pub batch: BatchConfig,
    pub clustering: ClusteringConfig,
    pub dedup: DedupConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: "Vannevar Bush".into(),
            max_depth: 10,
            random_seed: 42,
            budget_cap: None,
            state_dir: PathBuf::from("kbforge-state"),
            namespace: DEFAULT_NAMESPACE.into(),
            provider: ProviderConfig::default(),
            batch: BatchConfig::default(),
            clustering: ClusteringConfig::default(),
            dedup: DedupConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Read, resolve relative paths and validate.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.state_dir);
        for p in [
            &mut self.provider.world,
            &mut self.provider.search_fixture,
            &mut self.provider.reference_fixture,
            &mut self.eval.lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.seed.trim().is_empty() {
            return bad("seed label is empty".into());
        }
        if self.max_depth < 1 {
            return bad(format!("max_depth must be at least 1, got {}", self.max_depth));
        }
        if let Some(cap) = self.budget_cap {
            if cap < Decimal::ZERO {
                return bad(format!("budget_cap must be non-negative, got {cap}"));
            }
        }
        if self.batch.max_batch_size == 0 || self.batch.ner_batch_size == 0 || self.batch.max_concurrent_batches == 0 {
            return bad("batch sizes and concurrency must be positive".into());
        }
        if self.eval.sample == 0 {
            return bad("eval.sample must be positive".into());
        }
        if self.provider.kind == ProviderKind::Mock && self.provider.world.is_none() {
            return bad("provider.kind = \"mock\" needs provider.world".into());
        }
        self.clustering
            .validate()
            .and_then(|_| self.dedup.validate())
            .or_else(|e| bad(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }
}

//! Post-hoc consolidation: name clustering, taxonomy, deduplication.

pub mod cluster;
pub mod dedup;
pub mod embed;
pub mod taxonomy;

use crate::gateway::GatewayError;
use thiserror::Error;

pub use cluster::{
    adaptive_threshold, apply_cluster_map, class_frequencies, cluster_names, relation_frequencies,
    ClusterEntry, ClusterMap, ClusteringConfig, NameKind, RewriteReport,
};
pub use dedup::{dedup_entities, DedupConfig, MergeGroup, MergeReport};
pub use embed::{EmbedError, EmbeddingProvider, NgramEmbedder, ScriptedEmbedder};
pub use taxonomy::{build_kb_taxonomy, TaxonomyBuilder, TaxonomyNode, TaxonomyReport};

#[derive(Debug, Error)]
pub enum ConsolidateError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{kind} name '{name}' is not covered by the cluster map")]
    Unmapped { kind: NameKind, name: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed document: {0}")]
    Malformed(String),
}

#[cfg(test)]
mod tests;

//! Greedy frequency-ordered clustering of relation and class names.

use super::embed::EmbeddingProvider;
use super::ConsolidateError;
use crate::kbstore::KnowledgeBase;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub alpha: f64,
    pub high: f64,
    pub low: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            alpha: 1.4,
            high: 0.95,
            low: 0.75,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<(), ConsolidateError> {
        let ok = self.alpha > 0.0 && self.low > 0.0 && self.low <= self.high && self.high <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(ConsolidateError::InvalidConfig(format!(
                "need alpha > 0 and 0 < low <= high <= 1, got alpha={} high={} low={}",
                self.alpha, self.high, self.low
            )))
        }
    }
}

/// `clip(alpha * ln(freq_r) / ln(freq_max), low, high)`, and `high` when
/// `freq_max` is 1.
pub fn adaptive_threshold(freq_r: u64, freq_max: u64, cfg: &ClusteringConfig) -> f64 {
    if freq_max <= 1 {
        return cfg.high;
    }
    let raw = cfg.alpha * (freq_r.max(1) as f64).ln() / (freq_max as f64).ln();
    raw.clamp(cfg.low, cfg.high)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameKind {
    Relation,
    Class,
}

impl fmt::Display for NameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NameKind::Relation => "relation",
            NameKind::Class => "class",
        })
    }
}

/// One line of a serialized cluster map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub name: String,
    pub cluster: usize,
    pub representative: String,
    pub frequency: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterMap {
    assignment: BTreeMap<String, usize>,
    representatives: Vec<String>,
    members: Vec<BTreeMap<String, u64>>,
}

impl ClusterMap {
    /// Every name in its own cluster, in the clustering processing order.
    pub fn identity(names: &[(String, u64)]) -> Self {
        let mut map = ClusterMap::default();
        for (name, freq) in sorted_by_frequency(names) {
            map.open(name, freq);
        }
        map
    }

    fn open(&mut self, name: &str, freq: u64) -> usize {
        let id = self.representatives.len();
        self.representatives.push(name.to_string());
        self.members.push(BTreeMap::from([(name.to_string(), freq)]));
        self.assignment.insert(name.to_string(), id);
        id
    }

    fn join(&mut self, name: &str, freq: u64, id: usize) {
        self.members[id].insert(name.to_string(), freq);
        self.assignment.insert(name.to_string(), id);
    }

    pub fn cluster_of(&self, name: &str) -> Option<usize> {
        self.assignment.get(name).copied()
    }

    pub fn representative(&self, name: &str) -> Option<&str> {
        self.cluster_of(name).map(|id| self.representatives[id].as_str())
    }

    pub fn representative_of_cluster(&self, id: usize) -> &str {
        &self.representatives[id]
    }

    pub fn members(&self, id: usize) -> &BTreeMap<String, u64> {
        &self.members[id]
    }

    pub fn cluster_count(&self) -> usize {
        self.representatives.len()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Names that joined an existing cluster.
    pub fn merges(&self) -> usize {
        self.len() - self.cluster_count()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.assignment.keys().map(String::as_str)
    }

    pub fn entries(&self) -> Vec<ClusterEntry> {
        let mut out = Vec::with_capacity(self.len());
        for (id, members) in self.members.iter().enumerate() {
            for (name, freq) in members {
                out.push(ClusterEntry {
                    name: name.clone(),
                    cluster: id,
                    representative: self.representatives[id].clone(),
                    frequency: *freq,
                });
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(&e).expect("cluster entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ConsolidateError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ClusterEntry = serde_json::from_str(line).map_err(|e| {
                ConsolidateError::Malformed(format!("cluster map line {}: {e}", i + 1))
            })?;
            entries.push(e);
        }
        entries.sort_by_key(|e| e.cluster);
        let mut map = ClusterMap::default();
        for e in entries {
            if map.assignment.contains_key(&e.name) {
                return Err(ConsolidateError::Malformed(format!("name '{}' mapped twice", e.name)));
            }
            if e.cluster == map.cluster_count() {
                map.representatives.push(e.representative.clone());
                map.members.push(BTreeMap::new());
            } else if e.cluster > map.cluster_count() {
                return Err(ConsolidateError::Malformed(format!("cluster ids skip to {}", e.cluster)));
            }
            if map.representatives[e.cluster] != e.representative {
                return Err(ConsolidateError::Malformed(format!(
                    "cluster {} has two representatives",
                    e.cluster
                )));
            }
            map.join(&e.name, e.frequency, e.cluster);
        }
        for (id, rep) in map.representatives.iter().enumerate() {
            if !map.members[id].contains_key(rep) {
                return Err(ConsolidateError::Malformed(format!(
                    "representative '{rep}' is not a member of cluster {id}"
                )));
            }
        }
        Ok(map)
    }
}

/// Descending frequency, ties lexicographically ascending.
pub fn sorted_by_frequency(names: &[(String, u64)]) -> Vec<(&str, u64)> {
    let mut v: Vec<(&str, u64)> = names.iter().map(|(n, f)| (n.as_str(), *f)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v
}

pub fn cluster_names(
    names: &[(String, u64)],
    cfg: &ClusteringConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<ClusterMap, ConsolidateError> {
    cfg.validate()?;
    let mut seen = HashSet::new();
    for (name, freq) in names {
        if *freq == 0 {
            return Err(ConsolidateError::InvalidInput(format!("'{name}' has frequency 0")));
        }
        if !seen.insert(name.as_str()) {
            return Err(ConsolidateError::InvalidInput(format!("'{name}' listed twice")));
        }
    }
    let order = sorted_by_frequency(names);
    let mut vectors = Vec::with_capacity(order.len());
    for (name, _) in &order {
        vectors.push(embedder.embed(name)?);
    }

    let mut map = ClusterMap::default();
    let Some(&(first, freq_max)) = order.first() else {
        return Ok(map);
    };
    map.open(first, freq_max);
    for i in 1..order.len() {
        let (name, freq) = order[i];
        // earlier names come in preference order, so the first maximum wins
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for j in 0..i {
            let sim = embedder.similarity(&vectors[i], &vectors[j]);
            if sim > best_sim {
                best = j;
                best_sim = sim;
            }
        }
        if best_sim > adaptive_threshold(freq, freq_max, cfg) {
            let id = map.assignment[order[best].0];
            map.join(name, freq, id);
        } else {
            map.open(name, freq);
        }
    }
    Ok(map)
}

/// Relation name → number of triples using it.
pub fn relation_frequencies(kb: &KnowledgeBase) -> Vec<(String, u64)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in kb.triples() {
        *counts.entry(t.predicate_raw.clone()).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Class name → number of typing triples with it as object.
pub fn class_frequencies(kb: &KnowledgeBase) -> Vec<(String, u64)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in kb.triples().filter(|t| t.is_instance_of()) {
        *counts.entry(t.object_value.clone()).or_default() += 1;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteReport {
    pub kind: NameKind,
    pub triples_total: usize,
    pub triples_rewritten: usize,
    pub raw_names: usize,
    pub canonical_names: usize,
}

/// Point every triple at its cluster representative. The raw name is kept
/// alongside; a name that is its own representative leaves the triple as
/// it was.
pub fn apply_cluster_map(
    kb: &mut KnowledgeBase,
    map: &ClusterMap,
    kind: NameKind,
) -> Result<RewriteReport, ConsolidateError> {
    let raw = |t: &crate::triple::Triple| -> Option<String> {
        match kind {
            NameKind::Relation => Some(t.predicate_raw.clone()),
            NameKind::Class => t.is_instance_of().then(|| t.object_value.clone()),
        }
    };
    let raw_names: BTreeSet<String> = kb.triples().filter_map(raw).collect();
    if let Some(missing) = raw_names.iter().find(|n| map.cluster_of(n).is_none()) {
        return Err(ConsolidateError::Unmapped {
            kind,
            name: missing.clone(),
        });
    }

    let mut rewritten = 0;
    let mut canonical = BTreeSet::new();
    for record in kb.records_mut() {
        for t in &mut record.triples {
            let Some(name) = raw(t) else { continue };
            let rep = map.representative(&name).expect("coverage checked");
            canonical.insert(rep.to_string());
            let new = (rep != name).then(|| rep.to_string());
            let slot = match kind {
                NameKind::Relation => &mut t.predicate,
                NameKind::Class => &mut t.object_canonical,
            };
            if new.is_some() {
                rewritten += 1;
            }
            *slot = new;
        }
    }
    kb.refresh_all_classes();
    Ok(RewriteReport {
        kind,
        triples_total: kb.triple_count(),
        triples_rewritten: rewritten,
        raw_names: raw_names.len(),
        canonical_names: canonical.len(),
    })
}

//! Blocking-based entity deduplication.

use super::embed::EmbeddingProvider;
use super::ConsolidateError;
use crate::kbstore::{EntityRecord, KnowledgeBase};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub label_similarity_threshold: f64,
    pub triple_overlap_threshold: f64,
    pub blocking_predicate: String,
    pub target_class: String,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            label_similarity_threshold: 0.85,
            triple_overlap_threshold: 0.30,
            blocking_predicate: "birth_date".into(),
            target_class: "Person".into(),
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), ConsolidateError> {
        for (name, t) in [
            ("label_similarity_threshold", self.label_similarity_threshold),
            ("triple_overlap_threshold", self.triple_overlap_threshold),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ConsolidateError::InvalidConfig(format!("{name} must be in (0, 1], got {t}")));
            }
        }
        Ok(())
    }
}

/// Lowercase alphanumeric skeleton, so `birth_date` matches `birthDate`.
pub fn predicate_skeleton(p: &str) -> String {
    p.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub canonical: String,
    pub merged: Vec<String>,
    pub block: String,
    pub triples_after: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub candidates: usize,
    pub blocks: usize,
    pub pairs_compared: usize,
    pub groups: Vec<MergeGroup>,
    pub triples_before: usize,
    pub triples_after: usize,
}

impl MergeReport {
    pub fn merged_entities(&self) -> usize {
        self.groups.iter().map(|g| g.merged.len()).sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            out.push_str(&serde_json::to_string(g).expect("merge group serializes"));
            out.push('\n');
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn fact_set(r: &EntityRecord) -> HashSet<(&str, &str)> {
    r.triples
        .iter()
        .map(|t| (t.effective_predicate(), t.effective_object()))
        .collect()
}

/// Share of exactly shared `(predicate, object)` facts over the smaller
/// triple count.
pub fn triple_overlap(a: &EntityRecord, b: &EntityRecord) -> f64 {
    let denom = a.triples.len().min(b.triples.len());
    if denom == 0 {
        return 0.0;
    }
    let fa = fact_set(a);
    let shared = fact_set(b).intersection(&fa).count();
    shared as f64 / denom as f64
}

pub fn dedup_entities(
    kb: &mut KnowledgeBase,
    cfg: &DedupConfig,
    embedder: &dyn EmbeddingProvider,
) -> Result<MergeReport, ConsolidateError> {
    cfg.validate()?;
    let block_key = predicate_skeleton(&cfg.blocking_predicate);
    let candidates: Vec<&EntityRecord> = kb
        .records()
        .filter(|r| r.has_class(&cfg.target_class))
        .collect();

    let mut blocks: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in candidates.iter().enumerate() {
        let values: BTreeSet<&str> = r
            .triples
            .iter()
            .filter(|t| predicate_skeleton(t.effective_predicate()) == block_key)
            .map(|t| t.effective_object())
            .collect();
        for v in values {
            blocks.entry(v).or_default().push(i);
        }
    }

    let mut vectors: Vec<Option<Vec<f64>>> = vec![None; candidates.len()];
    for members in blocks.values().filter(|m| m.len() > 1) {
        for &i in members {
            if vectors[i].is_none() {
                vectors[i] = Some(embedder.embed(&candidates[i].label)?);
            }
        }
    }

    let mut uf = UnionFind::new(candidates.len());
    let mut first_block: BTreeMap<usize, &str> = BTreeMap::new();
    let mut pairs = 0;
    for (value, members) in &blocks {
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                pairs += 1;
                let (va, vb) = (vectors[a].as_ref().unwrap(), vectors[b].as_ref().unwrap());
                if embedder.similarity(va, vb) > cfg.label_similarity_threshold
                    && triple_overlap(candidates[a], candidates[b]) >= cfg.triple_overlap_threshold
                {
                    uf.union(a, b);
                    first_block.entry(a).or_insert(value);
                    first_block.entry(b).or_insert(value);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..candidates.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let plan: Vec<(String, Vec<String>, String)> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let target = *g
                .iter()
                .max_by(|&&a, &&b| {
                    candidates[a]
                        .triples
                        .len()
                        .cmp(&candidates[b].triples.len())
                        .then_with(|| candidates[b].label.cmp(&candidates[a].label))
                })
                .unwrap();
            let mut others: Vec<String> = g
                .iter()
                .filter(|&&i| i != target)
                .map(|&i| candidates[i].label.clone())
                .collect();
            others.sort();
            let block = first_block[&target].to_string();
            (candidates[target].label.clone(), others, block)
        })
        .collect();

    let mut report = MergeReport {
        candidates: candidates.len(),
        blocks: blocks.len(),
        pairs_compared: pairs,
        triples_before: kb.triple_count(),
        ..MergeReport::default()
    };
    for (canonical, others, block) in plan {
        let triples_after = merge_into(kb, &canonical, &others);
        report.groups.push(MergeGroup {
            canonical,
            merged: others,
            block,
            triples_after,
        });
    }
    report.triples_after = kb.triple_count();
    Ok(report)
}

/// Move the triples of `others` into `canonical` under its label and make
/// the others aliases. Returns the merged record's triple count.
fn merge_into(kb: &mut KnowledgeBase, canonical: &str, others: &[String]) -> usize {
    let mut target = kb.remove_record(canonical).expect("canonical record exists");
    let mut present: HashSet<(String, String)> = target
        .triples
        .iter()
        .map(|t| (t.predicate_raw.clone(), t.object_value.clone()))
        .collect();
    let mut aliases = Vec::new();
    for label in others {
        let Some(rec) = kb.remove_record(label) else { continue };
        for mut t in rec.triples {
            if present.insert((t.predicate_raw.clone(), t.object_value.clone())) {
                t.subject = canonical.to_string();
                target.triples.push(t);
            }
        }
        target.depth = target.depth.min(rec.depth);
        aliases.push(label.clone());
        aliases.extend(rec.aliases);
    }
    let count = target.triples.len();
    kb.put_record(target);
    for a in aliases {
        kb.add_alias(&a, canonical);
    }
    count
}

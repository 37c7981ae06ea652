//! Label-keyed triple store.

pub mod stats;
pub mod ttl;

use crate::crawler::ElicitationResult;
use crate::triple::{EntityStatus, Triple};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub use stats::{compute_stats, KbStats, LayerStats};
pub use ttl::{export_ttl, import_ttl, TtlError, DEFAULT_NAMESPACE};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("store file line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub label: String,
    pub depth: u32,
    pub status: EntityStatus,
    pub triples: Vec<Triple>,
    /// Objects of this entity's typing triples, canonical once class
    /// clustering ran.
    #[serde(default)]
    pub classes: Vec<String>,
    /// Labels merged into this record by deduplication.
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl EntityRecord {
    pub fn new(label: impl Into<String>, depth: u32, status: EntityStatus) -> Self {
        EntityRecord {
            label: label.into(),
            depth,
            status,
            triples: Vec::new(),
            classes: Vec::new(),
            aliases: Vec::new(),
        }
    }

    pub fn refresh_classes(&mut self) {
        let mut seen = HashSet::new();
        self.classes = self
            .triples
            .iter()
            .filter(|t| t.is_instance_of())
            .map(|t| t.effective_object().to_string())
            .filter(|c| seen.insert(c.clone()))
            .collect();
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    records: BTreeMap<String, EntityRecord>,
    /// alias label → canonical label
    aliases: HashMap<String, String>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add the triples of one elicitation. Exact duplicates of
    /// `(subject, predicate_raw, object_value)` already in the record are
    /// skipped; returns how many triples were new.
    pub fn insert_triples(&mut self, result: &ElicitationResult) -> usize {
        let record = self
            .records
            .entry(result.subject.clone())
            .or_insert_with(|| EntityRecord::new(&result.subject, result.depth, result.status));
        record.status = merge_status(record.status, result.status);
        let mut present: HashSet<(String, String, String)> = record
            .triples
            .iter()
            .map(|t| owned_key(t.raw_key()))
            .collect();
        let mut inserted = 0;
        for t in &result.triples {
            if present.insert(owned_key(t.raw_key())) {
                record.triples.push(t.clone());
                inserted += 1;
            }
        }
        if !record.triples.is_empty() {
            record.status = EntityStatus::DoneNonempty;
        }
        record.refresh_classes();
        inserted
    }

    /// Insert or replace a whole record.
    pub fn put_record(&mut self, mut record: EntityRecord) {
        record.refresh_classes();
        for alias in &record.aliases {
            self.aliases.insert(alias.clone(), record.label.clone());
        }
        self.records.insert(record.label.clone(), record);
    }

    pub fn remove_record(&mut self, label: &str) -> Option<EntityRecord> {
        self.records.remove(label)
    }

    pub fn add_alias(&mut self, alias: &str, canonical: &str) {
        if let Some(rec) = self.records.get_mut(canonical) {
            if !rec.aliases.iter().any(|a| a == alias) {
                rec.aliases.push(alias.to_string());
            }
        }
        self.aliases.insert(alias.to_string(), canonical.to_string());
    }

    pub fn canonical_label<'a>(&'a self, label: &'a str) -> &'a str {
        self.aliases.get(label).map(String::as_str).unwrap_or(label)
    }

    /// Exact-label lookup, following dedup aliases.
    pub fn query_subject(&self, label: &str) -> Option<&EntityRecord> {
        self.records
            .get(label)
            .or_else(|| self.aliases.get(label).and_then(|c| self.records.get(c)))
    }

    /// Labels of entities typed with `class`, in label order.
    pub fn query_class(&self, class: &str) -> Vec<String> {
        self.records
            .values()
            .filter(|r| r.has_class(class))
            .map(|r| r.label.clone())
            .collect()
    }

    pub fn get(&self, label: &str) -> Option<&EntityRecord> {
        self.records.get(label)
    }

    pub fn get_mut(&mut self, label: &str) -> Option<&mut EntityRecord> {
        self.records.get_mut(label)
    }

    pub fn records(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.values()
    }

    pub fn records_mut(&mut self) -> impl Iterator<Item = &mut EntityRecord> {
        self.records.values_mut()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.records.values().flat_map(|r| r.triples.iter())
    }

    pub fn triple_count(&self) -> usize {
        self.records.values().map(|r| r.triples.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn alias_map(&self) -> &HashMap<String, String> {
        &self.aliases
    }

    pub fn refresh_all_classes(&mut self) {
        for r in self.records.values_mut() {
            r.refresh_classes();
        }
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<(), StoreError> {
        let mut out = BufWriter::new(out);
        for r in self.records.values() {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: std::io::Read>(input: R) -> Result<Self, StoreError> {
        let mut kb = KnowledgeBase::new();
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EntityRecord =
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            kb.put_record(record);
        }
        Ok(kb)
    }

    /// Write atomically: a crash mid-write leaves the previous file intact.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("jsonl.tmp");
        self.write_jsonl(std::fs::File::create(&tmp)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::read_jsonl(std::fs::File::open(path)?)
    }
}

fn owned_key((s, p, o): (&str, &str, &str)) -> (String, String, String) {
    (s.to_string(), p.to_string(), o.to_string())
}

fn merge_status(old: EntityStatus, new: EntityStatus) -> EntityStatus {
    match (old, new) {
        (EntityStatus::DoneNonempty, _) | (_, EntityStatus::DoneNonempty) => {
            EntityStatus::DoneNonempty
        }
        (_, new) => new,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::templates::ParseStatus;
    use crate::triple::ObjectKind;

    pub(crate) fn result(subject: &str, depth: u32, triples: &[(&str, &str, ObjectKind)]) -> ElicitationResult {
        let triples: Vec<Triple> = triples
            .iter()
            .map(|(p, o, k)| Triple::new(subject, *p, *o, *k, depth))
            .collect();
        ElicitationResult::from_triples(subject.to_string(), depth, triples, ParseStatus::Ok)
    }

    fn bush(n: usize) -> ElicitationResult {
        let mut triples = vec![("instanceOf", "Person".to_string())];
        for i in 1..n {
            triples.push(("notableWork", format!("Work {i}")));
        }
        let triples: Vec<Triple> = triples
            .into_iter()
            .map(|(p, o)| Triple::new("Vannevar Bush", p, o, ObjectKind::Literal, 1))
            .collect();
        ElicitationResult::from_triples("Vannevar Bush".into(), 1, triples, ParseStatus::Ok)
    }

    #[test]
    fn insertion_is_idempotent() {
        let mut kb = KnowledgeBase::new();
        assert_eq!(kb.insert_triples(&bush(41)), 41);
        assert_eq!(kb.query_subject("Vannevar Bush").unwrap().triples.len(), 41);
        assert_eq!(kb.insert_triples(&bush(41)), 0);
        assert_eq!(kb.triple_count(), 41);
        assert_eq!(kb.get("Vannevar Bush").unwrap().classes, ["Person"]);
    }

    #[test]
    fn empty_result_marks_done_empty() {
        let mut kb = KnowledgeBase::new();
        let r = ElicitationResult::from_triples("Nobody".into(), 3, vec![], ParseStatus::Empty);
        assert_eq!(kb.insert_triples(&r), 0);
        let rec = kb.get("Nobody").unwrap();
        assert_eq!(rec.status, EntityStatus::DoneEmpty);
        assert!(rec.triples.is_empty());
        assert_eq!(rec.depth, 3);
    }

    #[test]
    fn class_and_subject_queries() {
        let mut kb = KnowledgeBase::new();
        for name in ["Ada", "Bob", "Cy"] {
            kb.insert_triples(&result(name, 1, &[("instanceOf", "Person", ObjectKind::Literal)]));
        }
        kb.insert_triples(&result("MIT", 1, &[("isA", "University", ObjectKind::Literal)]));
        assert_eq!(kb.query_class("Person"), ["Ada", "Bob", "Cy"]);
        assert_eq!(kb.query_class("University"), ["MIT"]);
        assert!(kb.query_class("Film").is_empty());
        assert!(kb.query_subject("Unknown").is_none());
        kb.add_alias("Robert", "Bob");
        assert_eq!(kb.query_subject("Robert").unwrap().label, "Bob");
    }

    #[test]
    fn jsonl_persistence() {
        let mut kb = KnowledgeBase::new();
        kb.insert_triples(&bush(5));
        kb.insert_triples(&result("MIT", 2, &[("locatedIn", "Cambridge", ObjectKind::NamedEntity)]));
        kb.add_alias("V. Bush", "Vannevar Bush");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.jsonl");
        kb.save(&path).unwrap();
        let back = KnowledgeBase::load(&path).unwrap();
        assert_eq!(back, kb);
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(
            KnowledgeBase::load(&path),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }
}

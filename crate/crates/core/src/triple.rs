//! Triples and entity labels shared by every pipeline stage.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("label is empty after normalization")]
pub struct EmptyLabel;

/// Trim the label and collapse internal whitespace runs to a single space.
///
/// Case is preserved: "John F. Kennedy" and "John Fitzgerald Kennedy" stay
/// distinct here and are only reconciled by entity deduplication.
pub fn normalize_label(raw: &str) -> Result<String, EmptyLabel> {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    if out.is_empty() {
        Err(EmptyLabel)
    } else {
        Ok(out)
    }
}

/// Lowercased alphanumeric skeleton of a predicate, used to recognise the
/// spelling variants of the typing relation (`instanceOf`, `instance_of`,
/// `isA`, `InstanceOf`, ...).
fn predicate_skeleton(predicate: &str) -> String {
    predicate
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn is_instance_of_predicate(predicate: &str) -> bool {
    matches!(predicate_skeleton(predicate).as_str(), "instanceof" | "isa")
}

/// Lifecycle of a label on the crawl frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityStatus {
    Queued,
    InFlight,
    DoneNonempty,
    DoneEmpty,
    ParseFailed,
}

impl EntityStatus {
    pub fn is_done(self) -> bool {
        matches!(
            self,
            EntityStatus::DoneNonempty | EntityStatus::DoneEmpty | EntityStatus::ParseFailed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    /// Short string awaiting the NER verdict.
    EntityCandidate,
    NamedEntity,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub layer: u32,
    #[serde(default)]
    pub batch_id: String,
    #[serde(default)]
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate_raw: String,
    /// Cluster representative once relation clustering has run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    pub object_value: String,
    /// Cluster representative of the class, for typing triples only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_canonical: Option<String>,
    pub object_kind: ObjectKind,
    pub provenance: Provenance,
}

impl Triple {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        kind: ObjectKind,
        layer: u32,
    ) -> Self {
        Triple {
            subject: subject.into(),
            predicate_raw: predicate.into(),
            predicate: None,
            object_value: object.into(),
            object_canonical: None,
            object_kind: kind,
            provenance: Provenance {
                layer,
                ..Provenance::default()
            },
        }
    }

    /// Canonical predicate if consolidation ran, raw predicate otherwise.
    pub fn effective_predicate(&self) -> &str {
        self.predicate.as_deref().unwrap_or(&self.predicate_raw)
    }

    pub fn effective_object(&self) -> &str {
        self.object_canonical.as_deref().unwrap_or(&self.object_value)
    }

    pub fn is_instance_of(&self) -> bool {
        is_instance_of_predicate(&self.predicate_raw)
            || self.predicate.as_deref().is_some_and(is_instance_of_predicate)
    }

    /// Identity used for idempotent insertion within one subject record.
    pub fn raw_key(&self) -> (&str, &str, &str) {
        (&self.subject, &self.predicate_raw, &self.object_value)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.subject,
            self.effective_predicate(),
            self.effective_object()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_is_collapsed() {
        assert_eq!(normalize_label("  Vannevar  Bush ").unwrap(), "Vannevar Bush");
        assert_eq!(normalize_label("a\t\nb").unwrap(), "a b");
    }

    #[test]
    fn identity_and_case() {
        assert_eq!(normalize_label("MIT").unwrap(), "MIT");
        assert_ne!(
            normalize_label("John F. Kennedy").unwrap(),
            normalize_label("John Fitzgerald Kennedy").unwrap()
        );
        assert_ne!(normalize_label("mit").unwrap(), "MIT");
    }

    #[test]
    fn blank_labels_are_rejected() {
        assert_eq!(normalize_label("   "), Err(EmptyLabel));
        assert_eq!(normalize_label(""), Err(EmptyLabel));
    }

    #[test]
    fn typing_predicate_variants() {
        for p in ["instanceOf", "InstanceOf", "instance_of", "isA", "is a", "instance of"] {
            assert!(is_instance_of_predicate(p), "{p}");
        }
        for p in ["birthPlace", "type", "instance"] {
            assert!(!is_instance_of_predicate(p), "{p}");
        }
    }
}

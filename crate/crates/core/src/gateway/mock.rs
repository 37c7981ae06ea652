//! Deterministic scripted provider for offline runs.
//!
//! A world file is line-delimited JSON, one record per line:
//!
//! ```text
//! {"template":"elicit","key":"Vannevar Bush","payload":{"triples":[...]}}
//! {"template":"ner","key":"MIT","payload":true}
//! {"template":"taxo_score","key":"Person","payload":"general"}
//! {"template":"elicit","key":"Flaky","error":"transport"}
//! ```
//!
//! A string payload is returned verbatim as the model's text, anything
//! else is serialized. Several records under one `(template, key)` are
//! served in order and then cycle. Unmatched requests get an empty answer.
//! NER requests are answered phrase by phrase from `ner` records keyed by
//! the phrase, unless a record matches the whole newline-joined list of a
//! multi-phrase request.

use super::ledger::{estimate_tokens, Usage};
use super::templates::{RenderedPrompt, TemplateId};
use super::{Completion, PromptRequest, Provider, ProviderError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Mutex;
use thiserror::Error;

pub const WILDCARD: &str = "*";

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cannot read world file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldRecord {
    pub template: TemplateId,
    #[serde(default)]
    pub key: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
enum Scripted {
    Text(String),
    Transport(String),
}

#[derive(Debug, Default)]
pub struct ScriptedWorld {
    model_id: String,
    records: Vec<WorldRecord>,
    index: HashMap<(TemplateId, String), Vec<Scripted>>,
    cursors: Mutex<HashMap<(TemplateId, String), usize>>,
    failing_batches: Mutex<HashSet<u64>>,
}

impl ScriptedWorld {
    pub fn new() -> Self {
        ScriptedWorld {
            model_id: "scripted-world".to_string(),
            ..Default::default()
        }
    }

    pub fn from_records(records: impl IntoIterator<Item = WorldRecord>) -> Self {
        let mut world = ScriptedWorld::new();
        for r in records {
            world.add(r);
        }
        world
    }

    pub fn from_jsonl(text: &str) -> Result<Self, WorldError> {
        let mut world = ScriptedWorld::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let record: WorldRecord =
                serde_json::from_str(line).map_err(|e| WorldError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            world.add(record);
        }
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("world record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    pub fn add(&mut self, record: WorldRecord) {
        let scripted = match &record.error {
            Some(e) => Scripted::Transport(e.clone()),
            None => Scripted::Text(match &record.payload {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string(),
            }),
        };
        self.index
            .entry((record.template, record.key.clone()))
            .or_default()
            .push(scripted);
        self.records.push(record);
    }

    pub fn push(&mut self, template: TemplateId, key: impl Into<String>, payload: Value) {
        self.add(WorldRecord {
            template,
            key: key.into(),
            payload,
            error: None,
        });
    }

    pub fn push_transport_error(&mut self, template: TemplateId, key: impl Into<String>) {
        self.add(WorldRecord {
            template,
            key: key.into(),
            payload: Value::Null,
            error: Some("scripted transport failure".into()),
        });
    }

    /// The batch with this sequence number fails provider-side.
    pub fn fail_batch(&self, seq: u64) {
        self.failing_batches.lock().unwrap().insert(seq);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn next(&self, template: TemplateId, key: &str) -> Option<Scripted> {
        let k = (template, key.to_string());
        let seq = self.index.get(&k)?;
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(k).or_insert(0);
        let item = seq[*cursor % seq.len()].clone();
        *cursor += 1;
        Some(item)
    }

    fn lookup_keys(request: &PromptRequest) -> Vec<String> {
        let template = request.template_id;
        let Some(var) = template.key_variable() else {
            return vec![String::new(), WILDCARD.to_string()];
        };
        let key = request.variables.get(var).cloned().unwrap_or_default();
        let mut keys = Vec::with_capacity(3);
        if let Some(node) = request.variables.get("node") {
            keys.push(format!("{key}|{node}"));
        }
        keys.push(key);
        keys.push(WILDCARD.to_string());
        keys
    }

    fn answer_ner_by_phrase(&self, phrases: &str) -> String {
        let entities: Vec<Value> = phrases
            .lines()
            .map(|phrase| {
                let verdict = match self.next(TemplateId::Ner, phrase) {
                    Some(Scripted::Text(t)) => parse_bool(&t),
                    _ => false,
                };
                serde_json::json!({"phrase": phrase, "is_named_entity": verdict})
            })
            .collect();
        serde_json::json!({ "entities": entities }).to_string()
    }
}

fn parse_bool(text: &str) -> bool {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Bool(b)) => b,
        Ok(Value::Object(m)) => m.get("is_named_entity").and_then(Value::as_bool).unwrap_or(false),
        _ => text.trim().eq_ignore_ascii_case("true"),
    }
}

impl Provider for ScriptedWorld {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn open_batch(&self, seq: u64, _size: usize) -> Result<(), ProviderError> {
        if self.failing_batches.lock().unwrap().remove(&seq) {
            return Err(ProviderError::BatchFailed(format!("scripted failure of batch {seq}")));
        }
        Ok(())
    }

    fn complete(
        &self,
        request: &PromptRequest,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, ProviderError> {
        let mut answer = None;
        let phrases = request.variables.get("phrases").map(String::as_str).unwrap_or("");
        let per_phrase = request.template_id == TemplateId::Ner && !phrases.contains('\n');
        for key in Self::lookup_keys(request).into_iter().filter(|_| !per_phrase) {
            if let Some(s) = self.next(request.template_id, &key) {
                answer = Some(s);
                break;
            }
        }
        let text = match answer {
            Some(Scripted::Text(t)) => t,
            Some(Scripted::Transport(e)) => return Err(ProviderError::Transport(e)),
            None if request.template_id == TemplateId::Ner => self.answer_ner_by_phrase(phrases),
            None => String::new(),
        };
        let usage = Usage::new(estimate_tokens(&prompt.text), estimate_tokens(&text));
        Ok(Completion { text, usage })
    }
}

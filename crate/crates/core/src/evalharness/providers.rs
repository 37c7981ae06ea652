//! Search, judge and reference-KB interfaces with scripted and LLM-backed
//! implementations.

use super::{EntityVerdict, TripleVerdict};
use crate::gateway::templates::TemplateId;
use crate::gateway::{Gateway, GatewayError, PromptRequest};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderFailure {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unusable answer: {0}")]
    Unusable(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    #[serde(default)]
    pub title: String,
    pub snippet: String,
    #[serde(default)]
    pub url: String,
}

impl SearchHit {
    pub fn snippet(text: impl Into<String>) -> Self {
        SearchHit {
            title: String::new(),
            snippet: text.into(),
            url: String::new(),
        }
    }
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderFailure>;
}

/// Judges claims against snippets only.
pub trait JudgeProvider: Send + Sync {
    fn judge_entity(&self, label: &str, snippets: &[SearchHit]) -> Result<EntityVerdict, ProviderFailure>;
    fn judge_triple(&self, claim: &str, snippets: &[SearchHit]) -> Result<TripleVerdict, ProviderFailure>;
}

pub trait TaxonomyJudge: Send + Sync {
    /// Is `child` a subclass of `parent`?
    fn edge_ok(&self, child: &str, parent: &str) -> Result<bool, ProviderFailure>;
    /// The most fitting direct superclass among `candidates`.
    fn best_parent(&self, child: &str, candidates: &[&str]) -> Result<Option<String>, ProviderFailure>;
}

pub trait ReferenceKbClient: Send + Sync {
    fn exact_label_lookup(&self, label: &str) -> Result<bool, ProviderFailure>;
    fn fuzzy_search(&self, label: &str) -> Result<bool, ProviderFailure>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

pub trait NameGenderLexicon: Send + Sync {
    fn gender(&self, first_name: &str) -> Option<Gender>;
}

/// Case-insensitive first-name table.
#[derive(Debug, Clone, Default)]
pub struct MapLexicon {
    names: HashMap<String, Gender>,
}

impl MapLexicon {
    pub fn new(entries: impl IntoIterator<Item = (impl Into<String>, Gender)>) -> Self {
        MapLexicon {
            names: entries
                .into_iter()
                .map(|(n, g)| (n.into().to_lowercase(), g))
                .collect(),
        }
    }

    /// `name,female` / `name,male` lines; `#` starts a comment.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut names = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, g) = line
                .split_once(',')
                .ok_or_else(|| format!("line {}: expected name,gender", i + 1))?;
            let g = match g.trim().to_ascii_lowercase().as_str() {
                "female" | "f" => Gender::Female,
                "male" | "m" => Gender::Male,
                other => return Err(format!("line {}: unknown gender '{other}'", i + 1)),
            };
            names.insert(name.trim().to_lowercase(), g);
        }
        Ok(MapLexicon { names })
    }
}

impl NameGenderLexicon for MapLexicon {
    fn gender(&self, first_name: &str) -> Option<Gender> {
        self.names.get(&first_name.to_lowercase()).copied()
    }
}

// ---- scripted

/// Canned search results per query. Unknown queries return nothing.
#[derive(Debug, Default)]
pub struct ScriptedSearch {
    results: HashMap<String, Vec<SearchHit>>,
    failing: HashSet<String>,
    calls: AtomicUsize,
}

impl ScriptedSearch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, query: &str, hits: Vec<SearchHit>) -> Self {
        self.results.insert(query.to_string(), hits);
        self
    }

    pub fn insert(&mut self, query: &str, hits: Vec<SearchHit>) {
        self.results.insert(query.to_string(), hits);
    }

    pub fn fail(&mut self, query: &str) {
        self.failing.insert(query.to_string());
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// One `{"query": .., "hits": [{title, snippet, url}]}` document per
    /// line; `#` starts a comment.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Line {
            query: String,
            #[serde(default)]
            hits: Vec<SearchHit>,
        }
        let mut out = ScriptedSearch::new();
        for (i, line) in fixture_lines(text) {
            let l: Line = serde_json::from_str(line).map_err(|e| format!("line {i}: {e}"))?;
            out.insert(&l.query, l.hits);
        }
        Ok(out)
    }
}

fn fixture_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

impl SearchProvider for ScriptedSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.failing.contains(query) {
            return Err(ProviderFailure::Transport(format!("scripted failure for '{query}'")));
        }
        let mut hits = self.results.get(query).cloned().unwrap_or_default();
        hits.truncate(k);
        Ok(hits)
    }
}

/// Fixed verdicts per label or claim, with fallbacks.
#[derive(Debug, Clone)]
pub struct ScriptedJudge {
    pub entities: HashMap<String, EntityVerdict>,
    pub triples: HashMap<String, TripleVerdict>,
    pub default_entity: EntityVerdict,
    pub default_triple: TripleVerdict,
}

impl Default for ScriptedJudge {
    fn default() -> Self {
        ScriptedJudge {
            entities: HashMap::new(),
            triples: HashMap::new(),
            default_entity: EntityVerdict::Unverifiable,
            default_triple: TripleVerdict::Plausible,
        }
    }
}

impl JudgeProvider for ScriptedJudge {
    fn judge_entity(&self, label: &str, _snippets: &[SearchHit]) -> Result<EntityVerdict, ProviderFailure> {
        Ok(self.entities.get(label).copied().unwrap_or(self.default_entity))
    }

    fn judge_triple(&self, claim: &str, _snippets: &[SearchHit]) -> Result<TripleVerdict, ProviderFailure> {
        Ok(self.triples.get(claim).copied().unwrap_or(self.default_triple))
    }
}

/// Edge approvals and best-parent picks keyed by child class.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTaxonomyJudge {
    pub approved: HashSet<String>,
    pub best: HashMap<String, String>,
}

impl TaxonomyJudge for ScriptedTaxonomyJudge {
    fn edge_ok(&self, child: &str, _parent: &str) -> Result<bool, ProviderFailure> {
        Ok(self.approved.contains(child))
    }

    fn best_parent(&self, child: &str, candidates: &[&str]) -> Result<Option<String>, ProviderFailure> {
        Ok(self
            .best
            .get(child)
            .filter(|b| candidates.contains(&b.as_str()))
            .cloned())
    }
}

#[derive(Debug, Default)]
pub struct ScriptedReference {
    pub exact: HashSet<String>,
    pub fuzzy: HashSet<String>,
    pub failing: HashSet<String>,
}

impl ScriptedReference {
    /// One `{"label": .., "exact": bool, "fuzzy": bool}` document per line.
    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct Line {
            label: String,
            #[serde(default)]
            exact: bool,
            #[serde(default)]
            fuzzy: bool,
        }
        let mut out = ScriptedReference::default();
        for (i, line) in fixture_lines(text) {
            let l: Line = serde_json::from_str(line).map_err(|e| format!("line {i}: {e}"))?;
            if l.exact {
                out.exact.insert(l.label.clone());
            }
            if l.fuzzy || l.exact {
                out.fuzzy.insert(l.label);
            }
        }
        Ok(out)
    }
}

impl ReferenceKbClient for ScriptedReference {
    fn exact_label_lookup(&self, label: &str) -> Result<bool, ProviderFailure> {
        if self.failing.contains(label) {
            return Err(ProviderFailure::Transport(format!("lookup of '{label}' failed")));
        }
        Ok(self.exact.contains(label))
    }

    fn fuzzy_search(&self, label: &str) -> Result<bool, ProviderFailure> {
        Ok(self.fuzzy.contains(label))
    }
}

// ---- LLM-backed

pub fn format_snippets(snippets: &[SearchHit]) -> String {
    if snippets.is_empty() {
        return "(no results)".to_string();
    }
    snippets
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let mut line = format!("[{}] ", i + 1);
            if !h.title.is_empty() {
                line.push_str(&h.title);
                line.push_str(": ");
            }
            line.push_str(&h.snippet);
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Judges through the entailment and taxonomy prompt templates.
pub struct LlmJudge {
    gateway: Gateway,
    seq: Mutex<usize>,
}

impl LlmJudge {
    pub fn new(gateway: Gateway) -> Self {
        LlmJudge {
            gateway,
            seq: Mutex::new(0),
        }
    }

    fn ask(&self, template: TemplateId, vars: &[(&str, &str)]) -> Result<serde_json::Value, ProviderFailure> {
        let id = {
            let mut s = self.seq.lock().unwrap();
            *s += 1;
            format!("{}-{}", template.as_str(), *s)
        };
        let req = PromptRequest::new(id, template, vars.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        let resp = self.gateway.complete_structured(&req)?;
        match (resp.is_ok(), resp.payload) {
            (true, Some(p)) => Ok(p),
            _ => Err(ProviderFailure::Unusable(format!("{template} answer did not parse"))),
        }
    }
}

impl JudgeProvider for LlmJudge {
    fn judge_entity(&self, label: &str, snippets: &[SearchHit]) -> Result<EntityVerdict, ProviderFailure> {
        let p = self.ask(
            TemplateId::EntailEntity,
            &[("label", label), ("snippets", &format_snippets(snippets))],
        )?;
        p["verdict"]
            .as_str()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ProviderFailure::Unusable(p.to_string()))
    }

    fn judge_triple(&self, claim: &str, snippets: &[SearchHit]) -> Result<TripleVerdict, ProviderFailure> {
        let p = self.ask(
            TemplateId::EntailTriple,
            &[("claim", claim), ("snippets", &format_snippets(snippets))],
        )?;
        p["verdict"]
            .as_str()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ProviderFailure::Unusable(p.to_string()))
    }
}

impl TaxonomyJudge for LlmJudge {
    fn edge_ok(&self, child: &str, parent: &str) -> Result<bool, ProviderFailure> {
        let p = self.ask(TemplateId::JudgeEdge, &[("child", child), ("parent", parent)])?;
        p["answer"]
            .as_bool()
            .ok_or_else(|| ProviderFailure::Unusable(p.to_string()))
    }

    fn best_parent(&self, child: &str, candidates: &[&str]) -> Result<Option<String>, ProviderFailure> {
        let joined = candidates.join(", ");
        let p = self.ask(TemplateId::JudgeParent, &[("child", child), ("candidates", &joined)])?;
        Ok(p["branch"]
            .as_str()
            .map(str::trim)
            .filter(|b| candidates.contains(b))
            .map(str::to_string))
    }
}

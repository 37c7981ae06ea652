//! Breadth-first knowledge elicitation.
//!
//! Starting from one or more seed labels, every label on the frontier is
//! prompted once for all the triples the model knows about it. Objects that
//! survive the literal pre-screen are sent to the NER prompt, and those
//! judged to be named entities are queued one layer deeper. Layers are
//! strict: all of depth `d` is elicited, classified and committed to the
//! checkpoint before anything at `d + 1` is prompted.

pub mod checkpoint;
pub mod screen;

use crate::gateway::ledger::CostLedger;
use crate::gateway::templates::{ParseStatus, TemplateId};
use crate::gateway::{
    BatchState, FailureKind, Gateway, GatewayError, PromptRequest, RequestFailure,
    StructuredResponse,
};
use crate::kbstore::KnowledgeBase;
use crate::triple::{normalize_label, EntityStatus, ObjectKind, Provenance, Triple};
use checkpoint::{read_checkpoint, repair, CheckpointError, CheckpointWriter};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::time::Instant;
use thiserror::Error;

pub use screen::is_obvious_literal;

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("seed label is empty")]
    EmptySeed,
    #[error("max_depth must be at least 1")]
    InvalidDepth,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationResult {
    pub subject: String,
    pub depth: u32,
    pub status: EntityStatus,
    pub triples: Vec<Triple>,
    pub has_instance_of: bool,
    pub parse_status: ParseStatus,
}

impl ElicitationResult {
    pub fn from_triples(
        subject: String,
        depth: u32,
        triples: Vec<Triple>,
        parse_status: ParseStatus,
    ) -> Self {
        let status = if parse_status == ParseStatus::ParseFailed {
            EntityStatus::ParseFailed
        } else if triples.is_empty() {
            EntityStatus::DoneEmpty
        } else {
            EntityStatus::DoneNonempty
        };
        let has_instance_of = triples.iter().any(Triple::is_instance_of);
        ElicitationResult {
            subject,
            depth,
            status,
            triples,
            has_instance_of,
            parse_status,
        }
    }

    /// Parse a structured elicitation answer into triples about `subject`.
    ///
    /// The subject named inside each returned triple is ignored. Empty
    /// predicates or objects are skipped, exact repeats collapse, and at
    /// most `cap` triples are kept.
    pub fn from_response(
        subject: &str,
        depth: u32,
        response: &StructuredResponse,
        provenance: &Provenance,
        cap: usize,
    ) -> Self {
        let mut triples = Vec::new();
        if let (ParseStatus::Ok, Some(payload)) = (response.parse_status, &response.payload) {
            let mut seen = HashSet::new();
            for item in payload["triples"].as_array().into_iter().flatten() {
                let (Ok(predicate), Ok(object)) = (
                    normalize_label(item["predicate"].as_str().unwrap_or_default()),
                    normalize_label(item["object"].as_str().unwrap_or_default()),
                ) else {
                    continue;
                };
                if !seen.insert((predicate.clone(), object.clone())) {
                    continue;
                }
                let kind = if is_obvious_literal(&object) {
                    ObjectKind::Literal
                } else {
                    ObjectKind::EntityCandidate
                };
                let mut t = Triple::new(subject, predicate, object, kind, depth);
                t.provenance = provenance.clone();
                triples.push(t);
                if triples.len() == cap {
                    log::warn!("'{subject}': answer truncated at {cap} triples");
                    break;
                }
            }
        }
        Self::from_triples(subject.to_string(), depth, triples, response.parse_status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub label: String,
    pub depth: u32,
    pub status: EntityStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerVerdict {
    pub phrase: String,
    pub is_named_entity: bool,
}

#[derive(Debug, Clone)]
pub struct CrawlConfig {
    pub max_depth: u32,
    pub ner_batch_size: usize,
    pub max_triples_per_subject: usize,
    /// Resubmissions of a batch that failed provider-side.
    pub batch_retries: u32,
    /// Stop cleanly once this layer is committed, as if the process died.
    pub stop_after_layer: Option<u32>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            max_depth: 10,
            ner_batch_size: 100,
            max_triples_per_subject: 500,
            batch_retries: 2,
            stop_after_layer: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Frontier exhausted within the depth limit.
    Completed,
    BudgetExhausted,
    ProviderError,
    Interrupted,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: u32,
    pub prompted: u64,
    pub nonempty: u64,
    pub empty: u64,
    pub parse_failed: u64,
    pub new_entities: u64,
    /// Non-empty answers without a typing triple.
    pub typeless: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub layers: Vec<LayerReport>,
    pub total_triples: u64,
    pub wall_clock_ms: u64,
    pub cost: CostLedger,
    pub stop_reason: StopReason,
    /// Layer left incomplete by a budget or provider stop.
    pub partial_layer: Option<u32>,
    pub model_id: String,
}

impl CrawlReport {
    pub fn prompted(&self) -> u64 {
        self.layers.iter().map(|l| l.prompted).sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("layer  prompted  nonempty     empty  parse_failed  new_entities\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{:>5} {:>9} {:>9} {:>9} {:>13} {:>13}\n",
                l.layer, l.prompted, l.nonempty, l.empty, l.parse_failed, l.new_entities
            ));
        }
        out.push_str(&format!(
            "triples: {}  cost: {}  stop: {:?}{}\n",
            self.total_triples,
            self.cost.monetary_cost,
            self.stop_reason,
            self.partial_layer
                .map(|l| format!(" (layer {l} partial)"))
                .unwrap_or_default()
        ));
        out
    }
}

struct Outcome {
    responses: HashMap<String, (StructuredResponse, String)>,
    failures: Vec<RequestFailure>,
}

pub struct Crawler {
    gateway: Gateway,
    config: CrawlConfig,
    entries: HashMap<String, FrontierEntry>,
    /// Labels per depth in discovery order.
    order: BTreeMap<u32, Vec<String>>,
    ner_cache: HashMap<String, bool>,
    kb: KnowledgeBase,
    layers: BTreeMap<u32, LayerReport>,
    writer: Option<CheckpointWriter>,
}

impl Crawler {
    pub fn new(gateway: Gateway, config: CrawlConfig) -> Result<Self, CrawlError> {
        if config.max_depth < 1 {
            return Err(CrawlError::InvalidDepth);
        }
        let writer = match &config.checkpoint {
            Some(path) => Some(CheckpointWriter::append(path)?),
            None => None,
        };
        Ok(Crawler {
            gateway,
            config,
            entries: HashMap::new(),
            order: BTreeMap::new(),
            ner_cache: HashMap::new(),
            kb: KnowledgeBase::new(),
            layers: BTreeMap::new(),
            writer,
        })
    }

    /// Rebuild frontier, verdict cache and store from the configured
    /// checkpoint, then continue appending to it. Seeds must be passed
    /// again through [`Crawler::seed`]; already-visited seeds are no-ops.
    pub fn resume(gateway: Gateway, config: CrawlConfig) -> Result<Self, CrawlError> {
        let records = match &config.checkpoint {
            Some(path) => {
                repair(path)?;
                read_checkpoint(path)?
            }
            None => Vec::new(),
        };
        let mut crawler = Crawler::new(gateway, config)?;
        for mut record in records {
            if !crawler.entries.contains_key(&record.subject) {
                crawler.enqueue(&record.subject, record.depth);
            }
            for t in &record.triples {
                match t.object_kind {
                    ObjectKind::NamedEntity => {
                        crawler.ner_cache.insert(t.object_value.clone(), true);
                    }
                    ObjectKind::Literal if !is_obvious_literal(&t.object_value) => {
                        crawler.ner_cache.entry(t.object_value.clone()).or_insert(false);
                    }
                    _ => {}
                }
            }
            let new_entries = crawler.expand_frontier(&mut record);
            crawler.record(record, new_entries.len() as u64);
        }
        Ok(crawler)
    }

    /// Queue a seed at depth 1.
    pub fn seed(&mut self, label: &str) -> Result<bool, CrawlError> {
        let label = normalize_label(label).map_err(|_| CrawlError::EmptySeed)?;
        if self.entries.contains_key(&label) {
            return Ok(false);
        }
        self.enqueue(&label, 1);
        Ok(true)
    }

    pub fn frontier_entry(&self, label: &str) -> Option<&FrontierEntry> {
        self.entries.get(label)
    }

    pub fn is_visited(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    /// Labels discovered at `depth`, in discovery order.
    pub fn layer_labels(&self, depth: u32) -> &[String] {
        self.order.get(&depth).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn into_kb(self) -> KnowledgeBase {
        self.kb
    }

    fn enqueue(&mut self, label: &str, depth: u32) {
        self.entries.insert(
            label.to_string(),
            FrontierEntry {
                label: label.to_string(),
                depth,
                status: EntityStatus::Queued,
            },
        );
        self.order.entry(depth).or_default().push(label.to_string());
    }

    /// Prompt once for one subject.
    pub fn elicit_triples(&self, subject: &str, depth: u32) -> Result<ElicitationResult, GatewayError> {
        let req = PromptRequest::new(subject, TemplateId::Elicit, []).var("subject", subject);
        let response = self.gateway.complete_structured(&req)?;
        let provenance = Provenance {
            layer: depth,
            batch_id: "single".into(),
            model_id: self.gateway.model_id(),
        };
        Ok(ElicitationResult::from_response(
            subject,
            depth,
            &response,
            &provenance,
            self.config.max_triples_per_subject,
        ))
    }

    /// Judge which phrases are named entities. Obvious literals are decided
    /// locally, cached phrases are not re-asked, and a chunk whose answer
    /// does not parse defaults every phrase in it to `false`.
    ///
    /// On a budget or provider stop the phrases judged so far stay cached
    /// and the error is returned.
    pub fn classify_named_entities(&mut self, candidates: &[String]) -> Result<Vec<NerVerdict>, CrawlInterrupt> {
        let mut pending: Vec<&str> = Vec::new();
        let mut queued = HashSet::new();
        for c in candidates {
            if self.ner_cache.contains_key(c) {
                continue;
            }
            if is_obvious_literal(c) {
                self.ner_cache.insert(c.clone(), false);
            } else if queued.insert(c.as_str()) {
                pending.push(c);
            }
        }
        let mut interrupt = None;
        if !pending.is_empty() {
            let chunks: Vec<Vec<&str>> = pending
                .chunks(self.config.ner_batch_size.max(1))
                .map(<[&str]>::to_vec)
                .collect();
            let requests: Vec<(PromptRequest, String)> = chunks
                .iter()
                .enumerate()
                .map(|(i, chunk)| {
                    let req = PromptRequest::new(format!("ner-{i}"), TemplateId::Ner, [])
                        .var("phrases", chunk.join("\n"));
                    (req, String::new())
                })
                .collect();
            let outcome = self.run_requests(requests);
            for (i, chunk) in chunks.iter().enumerate() {
                let Some((response, _)) = outcome.responses.get(&format!("ner-{i}")) else {
                    continue;
                };
                let mut verdicts: HashMap<&str, bool> = HashMap::new();
                if response.parse_status == ParseStatus::Ok {
                    if let Some(items) = response.payload.as_ref().and_then(|p| p["entities"].as_array()) {
                        for item in items {
                            if let (Some(p), Some(v)) =
                                (item["phrase"].as_str(), item["is_named_entity"].as_bool())
                            {
                                verdicts.insert(p, v);
                            }
                        }
                    }
                } else {
                    log::warn!("NER chunk {i} unusable ({:?}), defaulting to literal", response.parse_status);
                }
                for phrase in chunk {
                    let v = verdicts.get(phrase).copied().unwrap_or(false);
                    self.ner_cache.insert(phrase.to_string(), v);
                }
            }
            interrupt = CrawlInterrupt::from_failures(&outcome.failures);
        }
        if let Some(i) = interrupt {
            return Err(i);
        }
        Ok(candidates
            .iter()
            .map(|c| NerVerdict {
                phrase: c.clone(),
                is_named_entity: self.ner_cache[c],
            })
            .collect())
    }

    /// Resolve candidate objects from the verdict cache and queue new named
    /// entities one layer below the subject. Nothing is queued from the
    /// last allowed layer.
    pub fn expand_frontier(&mut self, result: &mut ElicitationResult) -> Vec<FrontierEntry> {
        let mut fresh = Vec::new();
        for t in &mut result.triples {
            if t.object_kind == ObjectKind::EntityCandidate {
                t.object_kind = if self.entries.contains_key(&t.object_value)
                    || self.ner_cache.get(&t.object_value).copied().unwrap_or(false)
                {
                    ObjectKind::NamedEntity
                } else {
                    ObjectKind::Literal
                };
            }
            if t.object_kind != ObjectKind::NamedEntity
                || result.depth >= self.config.max_depth
                || self.entries.contains_key(&t.object_value)
            {
                continue;
            }
            self.enqueue(&t.object_value, result.depth + 1);
            fresh.push(self.entries[&t.object_value].clone());
        }
        fresh
    }

    fn record(&mut self, result: ElicitationResult, new_entities: u64) {
        if let Some(entry) = self.entries.get_mut(&result.subject) {
            entry.status = result.status;
        }
        let layer = self.layers.entry(result.depth).or_insert_with(|| LayerReport {
            layer: result.depth,
            ..LayerReport::default()
        });
        layer.prompted += 1;
        layer.new_entities += new_entities;
        match result.status {
            EntityStatus::DoneNonempty => {
                layer.nonempty += 1;
                if !result.has_instance_of {
                    layer.typeless += 1;
                }
            }
            EntityStatus::DoneEmpty => layer.empty += 1,
            _ => layer.parse_failed += 1,
        }
        self.kb.insert_triples(&result);
    }

    fn run_requests(&self, requests: Vec<(PromptRequest, String)>) -> Outcome {
        let mut outcome = Outcome {
            responses: HashMap::new(),
            failures: Vec::new(),
        };
        let limit = self.gateway.config().max_batch_size.max(1);
        let mut pending: Vec<Vec<(PromptRequest, String)>> = Vec::new();
        let mut rest = requests;
        while !rest.is_empty() {
            let tail = rest.split_off(rest.len().min(limit));
            pending.push(rest);
            rest = tail;
        }
        let mut attempt = 0;
        while !pending.is_empty() {
            let mut submitted = Vec::new();
            for chunk in pending.drain(..) {
                let reqs: Vec<PromptRequest> = chunk.iter().map(|(r, _)| r.clone()).collect();
                match self.gateway.submit_batch(reqs) {
                    Ok(h) => submitted.push((h, chunk)),
                    Err(e) => outcome.failures.extend(chunk.iter().map(|(r, _)| RequestFailure {
                        request_id: r.request_id.clone(),
                        kind: FailureKind::Provider,
                        message: e.to_string(),
                    })),
                }
            }
            for (handle, chunk) in submitted {
                let status = match self.gateway.wait_batch(&handle) {
                    Ok(s) => s,
                    Err(e) => {
                        outcome.failures.extend(chunk.iter().map(|(r, _)| RequestFailure {
                            request_id: r.request_id.clone(),
                            kind: FailureKind::Provider,
                            message: e.to_string(),
                        }));
                        continue;
                    }
                };
                if status.state == BatchState::Failed && attempt < self.config.batch_retries {
                    log::warn!("batch {handle} failed provider-side, resubmitting");
                    pending.push(chunk);
                    continue;
                }
                let labels: HashMap<&str, &str> =
                    chunk.iter().map(|(r, l)| (r.request_id.as_str(), l.as_str())).collect();
                for r in status.results.into_iter().flatten() {
                    let label = labels.get(r.request_id.as_str()).copied().unwrap_or_default();
                    outcome.responses.insert(r.request_id.clone(), (r, label.to_string()));
                }
                outcome.failures.extend(status.failures);
            }
            attempt += 1;
        }
        outcome
    }

    /// Run layers until the frontier is exhausted or a stop condition hits.
    pub fn crawl(&mut self) -> Result<CrawlReport, CrawlError> {
        let started = Instant::now();
        let (stop_reason, partial_layer) = loop {
            let next = self.order.iter().find_map(|(depth, labels)| {
                labels
                    .iter()
                    .any(|l| self.entries[l].status == EntityStatus::Queued)
                    .then_some(*depth)
            });
            let Some(depth) = next else {
                break (StopReason::Completed, None);
            };
            if self.config.stop_after_layer.is_some_and(|k| depth > k) {
                break (StopReason::Interrupted, None);
            }
            if let Some(interrupt) = self.run_layer(depth)? {
                break (interrupt.reason(), Some(depth));
            }
        };
        Ok(CrawlReport {
            layers: self.layers.values().cloned().collect(),
            total_triples: self.kb.triple_count() as u64,
            wall_clock_ms: started.elapsed().as_millis() as u64,
            cost: self.gateway.ledger(),
            stop_reason,
            partial_layer,
            model_id: self.gateway.model_id(),
        })
    }

    fn run_layer(&mut self, depth: u32) -> Result<Option<CrawlInterrupt>, CrawlError> {
        let subjects: Vec<String> = self.order[&depth]
            .iter()
            .filter(|l| self.entries[*l].status == EntityStatus::Queued)
            .cloned()
            .collect();
        log::info!("layer {depth}: eliciting {} subjects", subjects.len());
        for s in &subjects {
            self.entries.get_mut(s).expect("queued label").status = EntityStatus::InFlight;
        }
        let limit = self.gateway.config().max_batch_size.max(1);
        let requests = subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let req = PromptRequest::new(s.clone(), TemplateId::Elicit, []).var("subject", s.clone());
                (req, format!("L{depth}-B{}", i / limit))
            })
            .collect();
        let outcome = self.run_requests(requests);
        let mut interrupt = CrawlInterrupt::from_failures(&outcome.failures);

        let model_id = self.gateway.model_id();
        let mut results = Vec::new();
        for s in &subjects {
            let Some((response, batch_id)) = outcome.responses.get(s) else {
                continue;
            };
            let provenance = Provenance {
                layer: depth,
                batch_id: batch_id.clone(),
                model_id: model_id.clone(),
            };
            results.push(ElicitationResult::from_response(
                s,
                depth,
                response,
                &provenance,
                self.config.max_triples_per_subject,
            ));
        }

        let mut candidates = Vec::new();
        let mut seen = HashSet::new();
        for r in &results {
            for t in &r.triples {
                if t.object_kind == ObjectKind::EntityCandidate
                    && !self.entries.contains_key(&t.object_value)
                    && seen.insert(t.object_value.as_str())
                {
                    candidates.push(t.object_value.clone());
                }
            }
        }
        if let Err(i) = self.classify_named_entities(&candidates) {
            interrupt.get_or_insert(i);
        }

        let mut committed = HashSet::new();
        for mut result in results {
            let resolved = result.triples.iter().all(|t| {
                t.object_kind != ObjectKind::EntityCandidate
                    || self.entries.contains_key(&t.object_value)
                    || self.ner_cache.contains_key(&t.object_value)
            });
            if !resolved {
                continue;
            }
            let fresh = self.expand_frontier(&mut result);
            if let Some(w) = self.writer.as_mut() {
                w.write(&result)?;
            }
            committed.insert(result.subject.clone());
            self.record(result, fresh.len() as u64);
        }
        for s in &subjects {
            if !committed.contains(s) {
                self.entries.get_mut(s).expect("layer label").status = EntityStatus::Queued;
            }
        }
        if let Some(w) = self.writer.as_mut() {
            w.commit()?;
        }
        Ok(interrupt)
    }
}

/// Why a layer could not be finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrawlInterrupt {
    Budget,
    Provider(String),
}

impl CrawlInterrupt {
    fn from_failures(failures: &[RequestFailure]) -> Option<Self> {
        if failures.iter().any(|f| f.kind == FailureKind::Budget) {
            Some(CrawlInterrupt::Budget)
        } else {
            failures.first().map(|f| CrawlInterrupt::Provider(f.message.clone()))
        }
    }

    fn reason(&self) -> StopReason {
        match self {
            CrawlInterrupt::Budget => StopReason::BudgetExhausted,
            CrawlInterrupt::Provider(_) => StopReason::ProviderError,
        }
    }
}

/// Crawl from a single seed with a fresh store.
pub fn crawl(
    gateway: Gateway,
    seed: &str,
    config: CrawlConfig,
) -> Result<(CrawlReport, KnowledgeBase), CrawlError> {
    let mut crawler = Crawler::new(gateway, config)?;
    crawler.seed(seed)?;
    let report = crawler.crawl()?;
    Ok((report, crawler.into_kb()))
}

#[cfg(test)]
mod tests;

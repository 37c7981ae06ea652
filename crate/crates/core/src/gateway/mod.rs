//! Uniform access to chat-style LLM providers.
//!
//! The [`Gateway`] renders templated prompts, enforces the spend cap before
//! anything is sent, retries transport failures with exponential backoff and
//! validates every answer against the template's structured-output schema.
//! Parse failures are returned as data and never retried.
//!
//! Batches run on background threads. At most `max_concurrent_batches` run
//! at once; the rest wait in a local queue in submission order.

pub mod ledger;
#[cfg(feature = "live")]
pub mod live;
pub mod mock;
pub mod templates;

use ledger::{estimate_tokens, CostLedger, PriceTable, Usage};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use templates::{render, validate, ParseStatus, RenderedPrompt, SchemaId, TemplateId};
use thiserror::Error;

pub use mock::ScriptedWorld;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Network-level failure; retried.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("provider-side batch failure: {0}")]
    BatchFailed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("unknown schema '{0}'")]
    UnknownSchema(String),
    #[error("template {template} expects schema {expected}, request names {got}")]
    SchemaMismatch {
        template: TemplateId,
        expected: SchemaId,
        got: String,
    },
    #[error("template {template} requires variable '{variable}'")]
    MissingVariable {
        template: TemplateId,
        variable: &'static str,
    },
    #[error("budget cap reached, request not sent")]
    BudgetExceeded,
    #[error("provider error after {attempts} attempt(s): {source}")]
    Provider {
        attempts: u32,
        source: ProviderError,
    },
    #[error("batch of {size} requests exceeds the limit of {limit}")]
    BatchTooLarge { size: usize, limit: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("duplicate request id '{0}' in batch")]
    DuplicateRequestId(String),
    #[error("unknown batch handle '{0}'")]
    UnknownHandle(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub request_id: String,
    pub template_id: TemplateId,
    pub variables: BTreeMap<String, String>,
    pub schema_id: String,
}

impl PromptRequest {
    /// Build a request bound to the template's registered schema.
    pub fn new(
        request_id: impl Into<String>,
        template_id: TemplateId,
        variables: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        PromptRequest {
            request_id: request_id.into(),
            template_id,
            variables: variables.into_iter().collect(),
            schema_id: template_id.schema().as_str().to_string(),
        }
    }

    pub fn var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.variables.insert(name.to_string(), value.into());
        self
    }

    fn check(&self) -> Result<SchemaId, GatewayError> {
        let schema = SchemaId::lookup(&self.schema_id)
            .ok_or_else(|| GatewayError::UnknownSchema(self.schema_id.clone()))?;
        if schema != self.template_id.schema() {
            return Err(GatewayError::SchemaMismatch {
                template: self.template_id,
                expected: self.template_id.schema(),
                got: self.schema_id.clone(),
            });
        }
        for var in self.template_id.required_variables() {
            if !self.variables.contains_key(*var) {
                return Err(GatewayError::MissingVariable {
                    template: self.template_id,
                    variable: var,
                });
            }
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub request_id: String,
    pub payload: Option<Value>,
    pub parse_status: ParseStatus,
    #[serde(default)]
    pub usage: Usage,
}

impl StructuredResponse {
    pub fn is_ok(&self) -> bool {
        self.parse_status == ParseStatus::Ok
    }
}

pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

/// A chat model endpoint.
pub trait Provider: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(
        &self,
        request: &PromptRequest,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, ProviderError>;

    /// Called once before a batch's requests are executed. An error fails
    /// the whole batch.
    fn open_batch(&self, _seq: u64, _size: usize) -> Result<(), ProviderError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub max_batch_size: usize,
    pub max_concurrent_batches: usize,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub prices: PriceTable,
    pub budget_cap: Option<Decimal>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            max_batch_size: 10_000,
            max_concurrent_batches: 100,
            max_attempts: 3,
            backoff_base: Duration::from_millis(200),
            prices: PriceTable::default(),
            budget_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BatchHandle(pub String);

impl std::fmt::Display for BatchHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchState {
    Queued,
    Running,
    Complete,
    Failed,
}

impl BatchState {
    pub fn is_terminal(self) -> bool {
        matches!(self, BatchState::Complete | BatchState::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Budget,
    Provider,
    Batch,
}

/// A request that produced no response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFailure {
    pub request_id: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStatus {
    pub handle: BatchHandle,
    pub state: BatchState,
    /// Present iff `state == Complete`.
    pub results: Option<Vec<StructuredResponse>>,
    pub failures: Vec<RequestFailure>,
}

struct BatchEntry {
    seq: u64,
    state: BatchState,
    requests: Vec<PromptRequest>,
    results: Vec<StructuredResponse>,
    failures: Vec<RequestFailure>,
}

#[derive(Default)]
struct BatchTable {
    batches: HashMap<BatchHandle, BatchEntry>,
    queue: VecDeque<BatchHandle>,
    running: usize,
    next_seq: u64,
}

struct Inner {
    provider: Arc<dyn Provider>,
    config: GatewayConfig,
    ledger: Mutex<CostLedger>,
    table: Mutex<BatchTable>,
    changed: Condvar,
}

/// Shared, thread-safe handle to a provider. Cloning is cheap.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: GatewayConfig) -> Self {
        let ledger = CostLedger::new(config.prices, config.budget_cap);
        Gateway {
            inner: Arc::new(Inner {
                provider,
                config,
                ledger: Mutex::new(ledger),
                table: Mutex::new(BatchTable::default()),
                changed: Condvar::new(),
            }),
        }
    }

    pub fn model_id(&self) -> String {
        self.inner.provider.model_id().to_string()
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.inner.config
    }

    pub fn ledger(&self) -> CostLedger {
        self.inner.ledger.lock().unwrap().clone()
    }

    pub fn budget_exceeded(&self) -> bool {
        self.inner.ledger.lock().unwrap().exceeded()
    }

    /// Record usage not made through this gateway. Returns the updated
    /// ledger and whether the cap is now exceeded.
    pub fn charge(&self, usage: Usage) -> (CostLedger, bool) {
        let mut ledger = self.inner.ledger.lock().unwrap();
        let exceeded = ledger.charge(usage);
        (ledger.clone(), exceeded)
    }

    pub fn complete_structured(
        &self,
        request: &PromptRequest,
    ) -> Result<StructuredResponse, GatewayError> {
        let schema = request.check()?;
        self.inner.execute(request, schema)
    }

    pub fn submit_batch(&self, requests: Vec<PromptRequest>) -> Result<BatchHandle, GatewayError> {
        if requests.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let limit = self.inner.config.max_batch_size;
        if requests.len() > limit {
            return Err(GatewayError::BatchTooLarge {
                size: requests.len(),
                limit,
            });
        }
        let mut seen = HashSet::with_capacity(requests.len());
        for r in &requests {
            r.check()?;
            if !seen.insert(r.request_id.as_str()) {
                return Err(GatewayError::DuplicateRequestId(r.request_id.clone()));
            }
        }
        let handle = {
            let mut table = self.inner.table.lock().unwrap();
            table.next_seq += 1;
            let seq = table.next_seq;
            let handle = BatchHandle(format!("batch-{seq:06}"));
            table.batches.insert(
                handle.clone(),
                BatchEntry {
                    seq,
                    state: BatchState::Queued,
                    requests,
                    results: Vec::new(),
                    failures: Vec::new(),
                },
            );
            table.queue.push_back(handle.clone());
            handle
        };
        Inner::pump(&self.inner);
        Ok(handle)
    }

    pub fn poll_batch(&self, handle: &BatchHandle) -> Result<BatchStatus, GatewayError> {
        let table = self.inner.table.lock().unwrap();
        Self::status_of(&table, handle)
    }

    /// Block until the batch reaches a terminal state.
    pub fn wait_batch(&self, handle: &BatchHandle) -> Result<BatchStatus, GatewayError> {
        let mut table = self.inner.table.lock().unwrap();
        loop {
            let status = Self::status_of(&table, handle)?;
            if status.state.is_terminal() {
                return Ok(status);
            }
            table = self.inner.changed.wait(table).unwrap();
        }
    }

    /// Submit in chunks of the batch-size limit and wait for all of them.
    pub fn run_all(&self, requests: Vec<PromptRequest>) -> Result<Vec<BatchStatus>, GatewayError> {
        let limit = self.inner.config.max_batch_size.max(1);
        let mut handles = Vec::new();
        let mut requests = requests;
        while !requests.is_empty() {
            let rest = requests.split_off(requests.len().min(limit));
            handles.push(self.submit_batch(requests)?);
            requests = rest;
        }
        handles.iter().map(|h| self.wait_batch(h)).collect()
    }

    fn status_of(table: &BatchTable, handle: &BatchHandle) -> Result<BatchStatus, GatewayError> {
        let entry = table
            .batches
            .get(handle)
            .ok_or_else(|| GatewayError::UnknownHandle(handle.0.clone()))?;
        Ok(BatchStatus {
            handle: handle.clone(),
            state: entry.state,
            results: (entry.state == BatchState::Complete).then(|| entry.results.clone()),
            failures: if entry.state.is_terminal() {
                entry.failures.clone()
            } else {
                Vec::new()
            },
        })
    }
}

impl Inner {
    fn pump(this: &Arc<Inner>) {
        let mut table = this.table.lock().unwrap();
        while table.running < this.config.max_concurrent_batches.max(1) {
            let Some(handle) = table.queue.pop_front() else {
                break;
            };
            let entry = table.batches.get_mut(&handle).expect("queued batch exists");
            entry.state = BatchState::Running;
            let seq = entry.seq;
            let requests = std::mem::take(&mut entry.requests);
            table.running += 1;
            this.changed.notify_all();
            let worker = Arc::clone(this);
            std::thread::spawn(move || worker.run_batch(handle, seq, requests));
        }
    }

    fn run_batch(self: Arc<Self>, handle: BatchHandle, seq: u64, requests: Vec<PromptRequest>) {
        let mut results = Vec::with_capacity(requests.len());
        let mut failures = Vec::new();
        let state = match self.provider.open_batch(seq, requests.len()) {
            Err(e) => {
                failures.extend(requests.iter().map(|r| RequestFailure {
                    request_id: r.request_id.clone(),
                    kind: FailureKind::Batch,
                    message: e.to_string(),
                }));
                BatchState::Failed
            }
            Ok(()) => {
                for r in &requests {
                    let schema = r.template_id.schema();
                    match self.execute(r, schema) {
                        Ok(resp) => results.push(resp),
                        Err(e) => failures.push(RequestFailure {
                            request_id: r.request_id.clone(),
                            kind: if e == GatewayError::BudgetExceeded {
                                FailureKind::Budget
                            } else {
                                FailureKind::Provider
                            },
                            message: e.to_string(),
                        }),
                    }
                }
                BatchState::Complete
            }
        };
        {
            let mut table = self.table.lock().unwrap();
            let entry = table.batches.get_mut(&handle).expect("running batch exists");
            entry.state = state;
            entry.results = results;
            entry.failures = failures;
            table.running -= 1;
        }
        self.changed.notify_all();
        Inner::pump(&self);
    }

    fn execute(
        &self,
        request: &PromptRequest,
        schema: SchemaId,
    ) -> Result<StructuredResponse, GatewayError> {
        let prompt = render(request.template_id, &request.variables);
        let estimate = estimate_tokens(&prompt.text);
        let max_attempts = self.config.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            if self.ledger.lock().unwrap().would_exceed(estimate) {
                return Err(GatewayError::BudgetExceeded);
            }
            match self.provider.complete(request, &prompt) {
                Ok(completion) => {
                    self.ledger.lock().unwrap().charge(completion.usage);
                    let (parse_status, payload) = validate(schema, &completion.text);
                    return Ok(StructuredResponse {
                        request_id: request.request_id.clone(),
                        payload,
                        parse_status,
                        usage: completion.usage,
                    });
                }
                Err(ProviderError::Transport(msg)) if attempt < max_attempts => {
                    log::warn!(
                        "transport failure on {} (attempt {attempt}): {msg}",
                        request.request_id
                    );
                    let delay = self.config.backoff_base * 2u32.pow(attempt - 1);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(source) => {
                    return Err(GatewayError::Provider {
                        attempts: attempt,
                        source,
                    })
                }
            }
        }
    }
}

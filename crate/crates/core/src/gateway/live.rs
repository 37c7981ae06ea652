//! OpenAI-compatible chat-completions adapter.
//!
//! Configured from the environment:
//! `KBFORGE_LLM_URL` (default `https://api.openai.com/v1/chat/completions`),
//! `KBFORGE_LLM_API_KEY` (required) and `KBFORGE_LLM_MODEL`
//! (default `gpt-4o-mini`).

use super::ledger::Usage;
use super::templates::RenderedPrompt;
use super::{Completion, PromptRequest, Provider, ProviderError};
use serde_json::{json, Value};
use std::time::Duration;

pub struct ChatCompletionsProvider {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
    model: String,
}

impl ChatCompletionsProvider {
    pub fn new(url: String, api_key: String, model: String) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(ChatCompletionsProvider {
            client,
            url,
            api_key,
            model,
        })
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let api_key = std::env::var("KBFORGE_LLM_API_KEY")
            .map_err(|_| ProviderError::Rejected("KBFORGE_LLM_API_KEY is not set".into()))?;
        let url = std::env::var("KBFORGE_LLM_URL")
            .unwrap_or_else(|_| "https://api.openai.com/v1/chat/completions".into());
        let model = std::env::var("KBFORGE_LLM_MODEL").unwrap_or_else(|_| "gpt-4o-mini".into());
        Self::new(url, api_key, model)
    }

    fn body(&self, prompt: &RenderedPrompt) -> Value {
        let name = prompt.schema.as_str().replace('/', "_");
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": name, "schema": prompt.schema.json_schema()}
            }
        })
    }
}

impl Provider for ChatCompletionsProvider {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(
        &self,
        _request: &PromptRequest,
        prompt: &RenderedPrompt,
    ) -> Result<Completion, ProviderError> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&self.body(prompt))
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Rejected(format!("HTTP {status}")));
        }
        let body: Value = response
            .json()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let text = body["choices"][0]["message"]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let usage = Usage::new(
            body["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            body["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        );
        Ok(Completion { text, usage })
    }
}

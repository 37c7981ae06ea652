//! HTTP search and reference-KB clients.
//!
//! Search: `KBFORGE_SEARCH_URL` is called as `GET <url>?q=<query>&count=<k>`
//! with `KBFORGE_SEARCH_API_KEY` sent as a bearer token. The response is a
//! JSON list of `{title, snippet, url}` objects, or an object holding such
//! a list under `results`.
//!
//! Reference KB: a MediaWiki `wbsearchentities` endpoint, `KBFORGE_REFKB_URL`
//! (default Wikidata).

use super::providers::{ProviderFailure, ReferenceKbClient, SearchHit, SearchProvider};
use serde_json::Value;
use std::time::Duration;

fn client() -> Result<reqwest::blocking::Client, ProviderFailure> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .user_agent("kbforge-eval/0.1")
        .build()
        .map_err(|e| ProviderFailure::Transport(e.to_string()))
}

pub struct HttpSearch {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpSearch {
    pub fn from_env() -> Result<Self, ProviderFailure> {
        let url = std::env::var("KBFORGE_SEARCH_URL")
            .map_err(|_| ProviderFailure::Unusable("KBFORGE_SEARCH_URL is not set".into()))?;
        Ok(HttpSearch {
            client: client()?,
            url,
            api_key: std::env::var("KBFORGE_SEARCH_API_KEY").ok(),
        })
    }
}

impl SearchProvider for HttpSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderFailure> {
        let mut req = self
            .client
            .get(&self.url)
            .query(&[("q", query), ("count", &k.to_string())]);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let body: Value = req
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ProviderFailure::Transport(e.to_string()))?;
        let list = match &body {
            Value::Array(_) => body.clone(),
            _ => body["results"].clone(),
        };
        let mut hits: Vec<SearchHit> =
            serde_json::from_value(list).map_err(|e| ProviderFailure::Unusable(e.to_string()))?;
        hits.truncate(k);
        Ok(hits)
    }
}

pub struct WikibaseClient {
    client: reqwest::blocking::Client,
    url: String,
}

impl WikibaseClient {
    pub fn from_env() -> Result<Self, ProviderFailure> {
        Ok(WikibaseClient {
            client: client()?,
            url: std::env::var("KBFORGE_REFKB_URL").unwrap_or_else(|_| "https://www.wikidata.org/w/api.php".into()),
        })
    }

    fn search(&self, label: &str) -> Result<Vec<Value>, ProviderFailure> {
        let body: Value = self
            .client
            .get(&self.url)
            .query(&[
                ("action", "wbsearchentities"),
                ("search", label),
                ("language", "en"),
                ("format", "json"),
                ("limit", "10"),
            ])
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ProviderFailure::Transport(e.to_string()))?;
        Ok(body["search"].as_array().cloned().unwrap_or_default())
    }
}

impl ReferenceKbClient for WikibaseClient {
    fn exact_label_lookup(&self, label: &str) -> Result<bool, ProviderFailure> {
        Ok(self
            .search(label)?
            .iter()
            .any(|hit| hit["label"].as_str() == Some(label)))
    }

    fn fuzzy_search(&self, label: &str) -> Result<bool, ProviderFailure> {
        Ok(!self.search(label)?.is_empty())
    }
}

//! Read-only HTTP queries over an exported KB.

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use kbforge::kbstore::{compute_stats, KbStats, KnowledgeBase};
use kbforge::triple::ObjectKind;
use serde::Serialize;
use serde_json::json;
use std::net::SocketAddr;
use std::sync::Arc;

#[derive(Clone)]
struct AppState {
    kb: Arc<KnowledgeBase>,
    stats: Arc<KbStats>,
}

#[derive(Debug, Serialize)]
pub struct FactDoc {
    pub predicate: String,
    pub object: String,
    pub object_kind: ObjectKind,
}

#[derive(Debug, Serialize)]
pub struct EntityDoc {
    pub label: String,
    pub classes: Vec<String>,
    pub aliases: Vec<String>,
    pub triples: Vec<FactDoc>,
}

#[derive(Debug, Serialize)]
pub struct ClassDoc {
    pub class: String,
    pub count: usize,
    pub entities: Vec<String>,
}

fn not_found(what: String) -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": what }))).into_response()
}

async fn entity(State(st): State<AppState>, Path(label): Path<String>) -> Response {
    let Some(r) = st.kb.query_subject(&label) else {
        return not_found(format!("no entity '{label}'"));
    };
    Json(EntityDoc {
        label: r.label.clone(),
        classes: r.classes.clone(),
        aliases: r.aliases.clone(),
        triples: r
            .triples
            .iter()
            .map(|t| FactDoc {
                predicate: t.effective_predicate().to_string(),
                object: t.effective_object().to_string(),
                object_kind: t.object_kind,
            })
            .collect(),
    })
    .into_response()
}

async fn class(State(st): State<AppState>, Path(name): Path<String>) -> Response {
    let entities = st.kb.query_class(&name);
    if entities.is_empty() {
        return not_found(format!("no entities of class '{name}'"));
    }
    Json(ClassDoc {
        class: name,
        count: entities.len(),
        entities,
    })
    .into_response()
}

async fn stats_doc(State(st): State<AppState>) -> Json<KbStats> {
    Json((*st.stats).clone())
}

pub fn router(kb: KnowledgeBase) -> Router {
    let stats = Arc::new(compute_stats(&kb));
    Router::new()
        .route("/entity/{label}", get(entity))
        .route("/class/{name}", get(class))
        .route("/stats", get(stats_doc))
        .with_state(AppState { kb: Arc::new(kb), stats })
}

pub async fn serve(kb: KnowledgeBase, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(kb)).await
}

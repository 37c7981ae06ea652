use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use kbforge::kbstore::{export_ttl, import_ttl, EntityRecord, KnowledgeBase, DEFAULT_NAMESPACE};
use kbforge::triple::{EntityStatus, ObjectKind, Triple};
use kbforge_cli::server::router;
use serde_json::Value;
use tower::ServiceExt;

fn kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for (label, class, facts) in [
        ("Vannevar Bush", "Person", vec![("employer", "MIT", ObjectKind::NamedEntity), ("birthDate", "1890-03-11", ObjectKind::Literal)]),
        ("Claude Shannon", "Person", vec![("doctoralAdvisor", "Vannevar Bush", ObjectKind::NamedEntity)]),
        ("MIT", "University", vec![("note", "a \"quoted\", multi-line\nliteral", ObjectKind::Literal)]),
    ] {
        let mut r = EntityRecord::new(label, 1, EntityStatus::DoneNonempty);
        r.triples.push(Triple::new(label, "instanceOf", class, ObjectKind::EntityCandidate, 1));
        for (p, o, k) in facts {
            r.triples.push(Triple::new(label, p, o, k, 1));
        }
        kb.put_record(r);
    }
    // served from the export, as the CLI does
    import_ttl(&export_ttl(&kb, DEFAULT_NAMESPACE)).unwrap()
}

async fn get(uri: &str) -> (StatusCode, Value) {
    let resp = router(kb())
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn entity_lookup() {
    let (status, v) = get("/entity/Vannevar%20Bush").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["label"], "Vannevar Bush");
    assert_eq!(v["classes"], serde_json::json!(["Person"]));
    let facts = v["triples"].as_array().unwrap();
    assert_eq!(facts.len(), 3);
    assert!(facts.iter().any(|f| f["predicate"] == "employer" && f["object"] == "MIT"));

    let (_, v) = get("/entity/MIT").await;
    assert!(v["triples"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["object"] == "a \"quoted\", multi-line\nliteral"));

    let (status, v) = get("/entity/Nobody").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("Nobody"));
}

#[tokio::test]
async fn class_lookup() {
    let (status, v) = get("/class/Person").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["count"], 2);
    assert_eq!(v["entities"], serde_json::json!(["Claude Shannon", "Vannevar Bush"]));
    let (status, _) = get("/class/Spaceship").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stats_document() {
    let (status, v) = get("/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["entities"], 3);
    assert_eq!(v["triples"], 7);
}

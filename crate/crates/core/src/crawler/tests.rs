use super::*;
use crate::fixtures::GraphWorld;
use crate::gateway::{GatewayConfig, ScriptedWorld};
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;

fn gateway(world: ScriptedWorld) -> Gateway {
    Gateway::new(
        Arc::new(world),
        GatewayConfig {
            backoff_base: Duration::ZERO,
            ..GatewayConfig::default()
        },
    )
}

fn config(max_depth: u32) -> CrawlConfig {
    CrawlConfig {
        max_depth,
        ..CrawlConfig::default()
    }
}

fn bush_world() -> ScriptedWorld {
    let mut w = ScriptedWorld::new();
    let mut triples = vec![
        json!({"subject": "Vannevar Bush", "predicate": "instanceOf", "object": "Person"}),
        json!({"subject": "Vannevar Bush", "predicate": "affiliation", "object": "MIT"}),
        json!({"subject": "Vannevar Bush", "predicate": "birthPlace", "object": "Everett, MA"}),
        json!({"subject": "Vannevar Bush", "predicate": "birthYear", "object": "1890"}),
        json!({"subject": "Vannevar Bush", "predicate": "knownFor", "object": "the concept of hypertext"}),
    ];
    for i in 0..36 {
        triples.push(json!({"subject": "Vannevar Bush", "predicate": "award", "object": format!("Award number {i}")}));
    }
    w.push(TemplateId::Elicit, "Vannevar Bush", json!({ "triples": triples }));
    w.push(TemplateId::Elicit, "Broken", json!("{\"triples\": [{\"sub"));
    w.push(TemplateId::Ner, "MIT", json!(true));
    w.push(TemplateId::Ner, "Everett, MA", json!(true));
    w.push(TemplateId::Ner, "the concept of hypertext", json!(false));
    w
}

#[test]
fn elicitation_outcomes() {
    let crawler = Crawler::new(gateway(bush_world()), config(10)).unwrap();
    let r = crawler.elicit_triples("Vannevar Bush", 1).unwrap();
    assert_eq!(r.triples.len(), 41);
    assert!(r.has_instance_of);
    assert_eq!(r.status, EntityStatus::DoneNonempty);
    assert!(r
        .triples
        .iter()
        .any(|t| t.predicate_raw == "instanceOf" && t.object_value == "Person"));
    let year = r.triples.iter().find(|t| t.object_value == "1890").unwrap();
    assert_eq!(year.object_kind, ObjectKind::Literal);
    let mit = r.triples.iter().find(|t| t.object_value == "MIT").unwrap();
    assert_eq!(mit.object_kind, ObjectKind::EntityCandidate);

    let unknown = crawler.elicit_triples("Nobody", 1).unwrap();
    assert_eq!(unknown.status, EntityStatus::DoneEmpty);
    assert!(unknown.triples.is_empty());

    let broken = crawler.elicit_triples("Broken", 1).unwrap();
    assert_eq!(broken.status, EntityStatus::ParseFailed);
    assert_eq!(broken.parse_status, ParseStatus::ParseFailed);
    assert!(broken.triples.is_empty());
}

#[test]
fn typeless_answers_are_kept_and_flagged() {
    let mut w = ScriptedWorld::new();
    w.push(
        TemplateId::Elicit,
        "Untyped",
        json!({"triples": [{"subject": "Untyped", "predicate": "color", "object": "red"}]}),
    );
    let mut c = Crawler::new(gateway(w), config(1)).unwrap();
    c.seed("Untyped").unwrap();
    let report = c.crawl().unwrap();
    assert_eq!(report.layers[0].typeless, 1);
    assert_eq!(c.kb().triple_count(), 1);
}

#[test]
fn parse_cap_and_duplicate_collapse() {
    let mut w = ScriptedWorld::new();
    let mut triples: Vec<_> = (0..600)
        .map(|i| json!({"subject": "Big", "predicate": "p", "object": format!("value {i}")}))
        .collect();
    triples.insert(1, triples[0].clone());
    triples.insert(2, json!({"subject": "Big", "predicate": "  ", "object": "x"}));
    w.push(TemplateId::Elicit, "Big", json!({ "triples": triples }));
    let c = Crawler::new(gateway(w), config(1)).unwrap();
    let r = c.elicit_triples("Big", 1).unwrap();
    assert_eq!(r.triples.len(), 500);
    assert_eq!(r.triples[1].object_value, "value 1");
}

#[test]
fn ner_verdicts() {
    let mut w = ScriptedWorld::new();
    w.push(TemplateId::Ner, "MIT", json!(true));
    w.push(TemplateId::Ner, "Everett, MA", json!(true));
    let mut c = Crawler::new(gateway(w), config(10)).unwrap();
    let got = c
        .classify_named_entities(&[
            "MIT".into(),
            "1945-07-01".into(),
            "the concept of hypertext".into(),
        ])
        .unwrap();
    let flags: Vec<bool> = got.iter().map(|v| v.is_named_entity).collect();
    assert_eq!(flags, [true, false, false]);
    assert!(c.classify_named_entities(&[]).unwrap().is_empty());
    let got = c.classify_named_entities(&["Everett, MA".into()]).unwrap();
    assert!(got[0].is_named_entity);
}

#[test]
fn ner_verdicts_are_cached() {
    let mut w = ScriptedWorld::new();
    w.push(TemplateId::Ner, "MIT", json!(true));
    let gw = gateway(w);
    let mut c = Crawler::new(gw.clone(), config(10)).unwrap();
    c.classify_named_entities(&["MIT".into(), "Kyoto".into()]).unwrap();
    let after_first = gw.ledger().prompt_count;
    c.classify_named_entities(&["MIT".into(), "Kyoto".into()]).unwrap();
    assert_eq!(gw.ledger().prompt_count, after_first);
}

#[test]
fn malformed_ner_answer_defaults_to_literal() {
    let mut w = ScriptedWorld::new();
    w.push(TemplateId::Ner, "MIT\nKyoto", json!("entities: MIT"));
    let mut c = Crawler::new(gateway(w), config(10)).unwrap();
    let got = c.classify_named_entities(&["MIT".into(), "Kyoto".into()]).unwrap();
    assert!(got.iter().all(|v| !v.is_named_entity));
}

#[test]
fn ner_chunks_respect_batch_size() {
    let gw = gateway(ScriptedWorld::new());
    let mut c = Crawler::new(
        gw.clone(),
        CrawlConfig {
            ner_batch_size: 3,
            ..config(10)
        },
    )
    .unwrap();
    let phrases: Vec<String> = (0..7).map(|i| format!("Name {i}")).collect();
    c.classify_named_entities(&phrases).unwrap();
    assert_eq!(gw.ledger().prompt_count, 3);
}

#[test]
fn expansion_follows_verdicts_and_visited_set() {
    let mut c = Crawler::new(gateway(bush_world()), config(10)).unwrap();
    c.seed("Vannevar Bush").unwrap();
    let mut r = ElicitationResult::from_triples(
        "Vannevar Bush".into(),
        1,
        vec![
            Triple::new("Vannevar Bush", "affiliation", "MIT", ObjectKind::EntityCandidate, 1),
            Triple::new("Vannevar Bush", "birthPlace", "Everett, MA", ObjectKind::EntityCandidate, 1),
            Triple::new("Vannevar Bush", "year", "1945", ObjectKind::Literal, 1),
            Triple::new("Vannevar Bush", "self", "Vannevar Bush", ObjectKind::EntityCandidate, 1),
        ],
        ParseStatus::Ok,
    );
    c.classify_named_entities(&["MIT".into(), "Everett, MA".into()]).unwrap();
    let fresh = c.expand_frontier(&mut r);
    let labels: Vec<(&str, u32)> = fresh.iter().map(|e| (e.label.as_str(), e.depth)).collect();
    assert_eq!(labels, [("MIT", 2), ("Everett, MA", 2)]);
    assert!(fresh.iter().all(|e| e.status == EntityStatus::Queued));
    assert_eq!(r.triples[0].object_kind, ObjectKind::NamedEntity);
    assert_eq!(r.triples[2].object_kind, ObjectKind::Literal);
    assert_eq!(r.triples[3].object_kind, ObjectKind::NamedEntity);

    // second sighting: already visited
    let mut again = r.clone();
    for t in &mut again.triples {
        t.object_kind = ObjectKind::EntityCandidate;
    }
    assert!(c.expand_frontier(&mut again).is_empty());
}

#[test]
fn nothing_is_queued_from_the_last_layer() {
    let mut c = Crawler::new(gateway(bush_world()), config(2)).unwrap();
    c.classify_named_entities(&["MIT".into()]).unwrap();
    let mut r = ElicitationResult::from_triples(
        "X".into(),
        2,
        vec![Triple::new("X", "affiliation", "MIT", ObjectKind::EntityCandidate, 2)],
        ParseStatus::Ok,
    );
    assert!(c.expand_frontier(&mut r).is_empty());
    assert_eq!(r.triples[0].object_kind, ObjectKind::NamedEntity);
}

#[test]
fn bfs_trace_on_small_world() {
    let g = GraphWorld::from_edges(&[("A", &["B", "C"]), ("B", &["C", "D"]), ("C", &[]), ("D", &[])]);
    let gw = gateway(g.world());
    let mut c = Crawler::new(gw, config(3)).unwrap();
    c.seed("A").unwrap();
    let report = c.crawl().unwrap();
    assert_eq!(report.stop_reason, StopReason::Completed);
    assert_eq!(c.layer_labels(1), ["A"]);
    assert_eq!(c.layer_labels(2), ["B", "C"]);
    assert_eq!(c.layer_labels(3), ["D"]);
    let prompted: Vec<u64> = report.layers.iter().map(|l| l.prompted).collect();
    assert_eq!(prompted, [1, 2, 1]);
    assert_eq!(report.prompted(), 4);
    for t in c.kb().triples() {
        assert_eq!(t.provenance.layer, c.frontier_entry(&t.subject).unwrap().depth);
    }
}

#[test]
fn depth_one_prompts_only_the_seed() {
    let g = GraphWorld::from_edges(&[("A", &["B", "C"])]);
    let (report, kb) = crawl(gateway(g.world()), "A", config(1)).unwrap();
    assert_eq!(report.prompted(), 1);
    assert_eq!(report.layers[0].new_entities, 0);
    assert_eq!(kb.len(), 1);
}

#[test]
fn empty_seed_halts_the_crawl() {
    let (report, _) = crawl(gateway(ScriptedWorld::new()), "Unknown", config(10)).unwrap();
    assert_eq!(report.layers.len(), 1);
    assert_eq!(report.layers[0].prompted, 1);
    assert_eq!(report.layers[0].nonempty, 0);
    assert_eq!(report.layers[0].empty, 1);
    assert_eq!(report.stop_reason, StopReason::Completed);
}

#[test]
fn invalid_arguments() {
    assert!(matches!(
        Crawler::new(gateway(ScriptedWorld::new()), config(0)),
        Err(CrawlError::InvalidDepth)
    ));
    let mut c = Crawler::new(gateway(ScriptedWorld::new()), config(1)).unwrap();
    assert!(matches!(c.seed("   "), Err(CrawlError::EmptySeed)));
    assert!(c.seed(" A ").unwrap());
    assert!(!c.seed("A").unwrap());
}

#[test]
fn literals_never_become_subjects() {
    let g = GraphWorld::random(60, 7);
    let (_, kb) = crawl(gateway(g.world()), "E0", config(10)).unwrap();
    let literals: HashSet<&str> = kb
        .triples()
        .filter(|t| t.object_kind == ObjectKind::Literal)
        .map(|t| t.object_value.as_str())
        .collect();
    for r in kb.records() {
        assert!(!literals.contains(r.label.as_str()), "{}", r.label);
    }
}

#[test]
fn provider_batch_failure_is_resubmitted() {
    let g = GraphWorld::from_edges(&[("A", &["B"])]);
    let world = g.world();
    world.fail_batch(1);
    let (report, kb) = crawl(gateway(world), "A", config(3)).unwrap();
    assert_eq!(report.stop_reason, StopReason::Completed);
    assert_eq!(kb.len(), 2);
}

#[test]
fn budget_stop_is_graceful_and_resumable() {
    use rust_decimal::Decimal;
    let g = GraphWorld::random(80, 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.jsonl");

    let seed = g
        .adjacency
        .keys()
        .max_by_key(|l| (g.bfs_depths(l, 10).len(), std::cmp::Reverse(l.to_string())))
        .unwrap()
        .clone();
    assert!(g.bfs_depths(&seed, 10).len() > 10);

    let (reference, reference_kb) = crawl(gateway(g.world()), &seed, config(10)).unwrap();
    assert_eq!(reference.stop_reason, StopReason::Completed);

    let tight = Gateway::new(
        Arc::new(g.world()),
        GatewayConfig {
            budget_cap: Some(reference.cost.monetary_cost / Decimal::from(2)),
            backoff_base: Duration::ZERO,
            ..GatewayConfig::default()
        },
    );
    let cfg = CrawlConfig {
        checkpoint: Some(path.clone()),
        ..config(10)
    };
    let (partial, _) = crawl(tight, &seed, cfg.clone()).unwrap();
    assert_eq!(partial.stop_reason, StopReason::BudgetExhausted);
    assert!(partial.partial_layer.is_some());
    assert!(partial.prompted() < reference.prompted());

    let mut resumed = Crawler::resume(gateway(g.world()), cfg).unwrap();
    resumed.seed(&seed).unwrap();
    let report = resumed.crawl().unwrap();
    assert_eq!(report.stop_reason, StopReason::Completed);
    assert_eq!(report.prompted(), reference.prompted());
    let key = |kb: &KnowledgeBase| {
        let mut v: Vec<_> = kb
            .triples()
            .map(|t| (t.subject.clone(), t.predicate_raw.clone(), t.object_value.clone(), t.object_kind, t.provenance.layer))
            .collect();
        v.sort();
        v
    };
    assert_eq!(key(resumed.kb()), key(&reference_kb));
}

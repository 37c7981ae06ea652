use super::*;
use crate::gateway::templates::{RenderedPrompt, TemplateId};
use crate::gateway::{Completion, Gateway, GatewayConfig, PromptRequest, Provider, ProviderError, ScriptedWorld};
use crate::kbstore::{EntityRecord, KnowledgeBase};
use crate::triple::{EntityStatus, ObjectKind, Triple};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

fn names(list: &[(&str, u64)]) -> Vec<(String, u64)> {
    list.iter().map(|(n, f)| (n.to_string(), *f)).collect()
}

fn axis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn tilted(dim: usize, i: usize, j: usize, sim: f64) -> Vec<f64> {
    ScriptedEmbedder::pair(dim, i, j, sim).1
}

struct Counting<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: EmbeddingProvider> EmbeddingProvider for Counting<E> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(text)
    }
}

// ---- thresholds and clustering

#[test]
fn threshold_examples() {
    let cfg = ClusteringConfig::default();
    assert_eq!(adaptive_threshold(100, 100, &cfg), 0.95);
    assert_eq!(adaptive_threshold(1, 100, &cfg), 0.75);
    assert_eq!(adaptive_threshold(1, 1, &cfg), 0.95);
    // 1.4 * log(1e3) / log(1e6) = 0.70, floored
    let direct = 1.4 * 3.0 / 6.0;
    assert!((direct - 0.70f64).abs() < 1e-12);
    assert_eq!(adaptive_threshold(1000, 1_000_000, &cfg), 0.75);
    // inside the band the formula is returned as is
    let mid = adaptive_threshold(50, 1000, &cfg);
    assert!((mid - 1.4 * 50f64.log10() / 3.0).abs() < 1e-12);
}

#[test]
fn invalid_config_is_rejected() {
    let bad = ClusteringConfig {
        low: 0.9,
        high: 0.8,
        ..ClusteringConfig::default()
    };
    let e = ScriptedEmbedder::new().with("a", vec![1.0]);
    assert!(matches!(
        cluster_names(&names(&[("a", 1)]), &bad, &e),
        Err(ConsolidateError::InvalidConfig(_))
    ));
}

#[test]
fn instance_of_absorbs_is_a() {
    let e = ScriptedEmbedder::new()
        .with("instanceOf", axis(3, 0))
        .with("isA", tilted(3, 0, 1, 0.97))
        .with("birthPlace", axis(3, 2));
    let input = names(&[("birthPlace", 40), ("isA", 60), ("instanceOf", 100)]);
    let map = cluster_names(&input, &ClusteringConfig::default(), &e).unwrap();
    assert_eq!(map.cluster_of("instanceOf"), Some(0));
    assert_eq!(map.cluster_of("isA"), Some(0));
    assert_eq!(map.cluster_of("birthPlace"), Some(1));
    assert_eq!(map.representative("isA"), Some("instanceOf"));
    assert_eq!(map.cluster_count(), 2);
    assert_eq!(map.merges(), 1);
}

#[test]
fn single_name_is_its_own_cluster() {
    let e = ScriptedEmbedder::new().with("spouse", axis(2, 0));
    let map = cluster_names(&names(&[("spouse", 7)]), &ClusteringConfig::default(), &e).unwrap();
    assert_eq!(map.representative("spouse"), Some("spouse"));
    assert_eq!(map.cluster_count(), 1);
}

#[test]
fn similarity_equal_to_threshold_does_not_merge() {
    let e = ScriptedEmbedder::new()
        .with("a", axis(2, 0))
        .with("b", tilted(2, 0, 1, 0.95));
    let map = cluster_names(&names(&[("a", 10), ("b", 10)]), &ClusteringConfig::default(), &e).unwrap();
    assert_eq!(adaptive_threshold(10, 10, &ClusteringConfig::default()), 0.95);
    assert_eq!(map.cluster_count(), 2);
}

#[test]
fn chaining_inherits_the_cluster_of_the_nearest_name() {
    // c is closest to b, which already joined a
    let e = ScriptedEmbedder::new()
        .with("a", vec![1.0, 0.0, 0.0])
        .with("b", vec![0.97, 0.2431, 0.0])
        .with("c", vec![0.90, 0.4359, 0.0]);
    let map = cluster_names(
        &names(&[("a", 5), ("b", 1), ("c", 1)]),
        &ClusteringConfig::default(),
        &e,
    )
    .unwrap();
    assert_eq!(map.cluster_of("c"), Some(0));
    assert_eq!(map.representative("c"), Some("a"));
}

#[test]
fn embedder_failure_aborts() {
    let e = ScriptedEmbedder::new().with("a", axis(1, 0));
    let r = cluster_names(&names(&[("a", 2), ("ghost", 1)]), &ClusteringConfig::default(), &e);
    assert!(matches!(r, Err(ConsolidateError::Embed(EmbedError::Unknown(_)))));
}

#[test]
fn cluster_map_round_trips_through_jsonl() {
    let e = ScriptedEmbedder::new()
        .with("instanceOf", axis(3, 0))
        .with("isA", tilted(3, 0, 1, 0.97))
        .with("birthPlace", axis(3, 2));
    let input = names(&[("birthPlace", 40), ("isA", 60), ("instanceOf", 100)]);
    let map = cluster_names(&input, &ClusteringConfig::default(), &e).unwrap();
    let text = map.to_jsonl();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(ClusterMap::from_jsonl(&text).unwrap(), map);
    assert!(ClusterMap::from_jsonl("{\"name\":\"x\",\"cluster\":3,\"representative\":\"x\",\"frequency\":1}").is_err());
}

// ---- independent oracle: a literal step-by-step transcription

fn oracle(input: &[(String, u64)], vecs: &HashMap<String, Vec<f64>>, cfg: &ClusteringConfig) -> BTreeMap<String, String> {
    let mut order: Vec<(String, u64)> = input.to_vec();
    order.sort_by_key(|(n, f)| (std::cmp::Reverse(*f), n.clone()));
    let dot = |a: &str, b: &str| -> f64 {
        let s: f64 = vecs[a].iter().zip(&vecs[b]).map(|(x, y)| x * y).sum();
        s.clamp(-1.0, 1.0)
    };
    let fmax = order[0].1;
    let mut cluster_rep: BTreeMap<String, String> = BTreeMap::new();
    cluster_rep.insert(order[0].0.clone(), order[0].0.clone());
    for idx in 1..order.len() {
        let (r, fr) = &order[idx];
        let thr = if fmax == 1 {
            cfg.high
        } else {
            (cfg.alpha * (*fr as f64).log2() / (fmax as f64).log2()).max(cfg.low).min(cfg.high)
        };
        let mut cands: Vec<(f64, u64, String)> = order[..idx]
            .iter()
            .map(|(s, fs)| (dot(r, s), *fs, s.clone()))
            .collect();
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(b.1.cmp(&a.1))
                .then(a.2.cmp(&b.2))
        });
        let (sim, _, s) = &cands[0];
        let rep = if *sim > thr { cluster_rep[s].clone() } else { r.clone() };
        cluster_rep.insert(r.clone(), rep);
    }
    cluster_rep
}

type NamesAndVectors = (Vec<(String, u64)>, HashMap<String, Vec<f64>>);

fn world_strategy() -> impl Strategy<Value = NamesAndVectors> {
    (1usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(1u64..200, n),
            // coarse coordinates make exact ties and exact threshold hits likely
            prop::collection::vec(prop::collection::vec(-2i8..=3, 3), n),
        )
            .prop_map(move |(freqs, coords)| {
                let mut list = Vec::new();
                let mut vecs = HashMap::new();
                for (i, (f, c)) in freqs.into_iter().zip(coords).enumerate() {
                    let name = format!("rel{i}");
                    let mut v: Vec<f64> = c.into_iter().map(f64::from).collect();
                    if v.iter().all(|x| *x == 0.0) {
                        v[0] = 1.0;
                    }
                    vecs.insert(name.clone(), embed::normalize(v));
                    list.push((name, f));
                }
                (list, vecs)
            })
    })
}

fn scripted(vecs: &HashMap<String, Vec<f64>>) -> ScriptedEmbedder {
    let mut e = ScriptedEmbedder::new();
    for (k, v) in vecs {
        e.insert(k, v.clone());
    }
    e
}

proptest! {
    #[test]
    fn clustering_matches_the_oracle((input, vecs) in world_strategy(), low in 0.3f64..0.9) {
        let cfg = ClusteringConfig { low, ..ClusteringConfig::default() };
        let map = cluster_names(&input, &cfg, &scripted(&vecs)).unwrap();
        let expected = oracle(&input, &vecs, &cfg);
        for (name, rep) in expected {
            prop_assert_eq!(map.representative(&name), Some(rep.as_str()), "name {}", name);
        }
    }

    #[test]
    fn clustering_invariants((input, vecs) in world_strategy()) {
        let counting = Counting { inner: scripted(&vecs), calls: AtomicUsize::new(0) };
        let map = cluster_names(&input, &ClusteringConfig::default(), &counting).unwrap();
        prop_assert!(counting.calls.load(Ordering::SeqCst) <= input.len());
        prop_assert_eq!(map.len(), input.len());
        let freq: HashMap<&str, u64> = input.iter().map(|(n, f)| (n.as_str(), *f)).collect();
        for (name, f) in &input {
            let rep = map.representative(name).unwrap();
            prop_assert!(freq[rep] >= *f);
        }
        let top = cluster::sorted_by_frequency(&input)[0].0;
        prop_assert_eq!(map.representative(top), Some(top));
    }

    #[test]
    fn raising_thresholds_never_adds_merges(
        (input, vecs) in world_strategy(),
        low in 0.3f64..0.9,
        dl in 0.0f64..0.1,
        high in 0.9f64..0.99,
        dh in 0.0f64..0.01,
    ) {
        let e = scripted(&vecs);
        let base = ClusteringConfig { low, high, ..ClusteringConfig::default() };
        let raised = ClusteringConfig { low: (low + dl).min(high + dh), high: high + dh, ..base };
        let a = cluster_names(&input, &base, &e).unwrap();
        let b = cluster_names(&input, &raised, &e).unwrap();
        prop_assert!(b.merges() <= a.merges());
    }
}

// ---- applying cluster maps

fn record(label: &str, facts: &[(&str, &str)]) -> EntityRecord {
    let mut r = EntityRecord::new(label, 1, EntityStatus::DoneNonempty);
    r.triples = facts
        .iter()
        .map(|(p, o)| Triple::new(label, *p, *o, ObjectKind::EntityCandidate, 1))
        .collect();
    r
}

fn seven_relation_kb() -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    kb.put_record(record("A", &[("instanceOf", "Person"), ("birthPlace", "X"), ("spouse", "B"), ("award", "Prize")]));
    kb.put_record(record("B", &[("instanceOf", "Person"), ("birthPlace", "Y"), ("spouse", "A"), ("isA", "human")]));
    kb.put_record(record("C", &[("instanceOf", "City"), ("isA", "Town"), ("InstanceOf", "Place")]));
    kb.put_record(record("D", &[("instanceOf", "Person"), ("isA", "human"), ("birthPlace", "C"), ("placeOfBirth", "C"), ("spouse", "E")]));
    kb.put_record(record("E", &[("instanceOf", "Person"), ("InstanceOf", "human"), ("birthPlace", "Z"), ("placeOfBirth", "Z")]));
    kb
}

fn seven_relation_embedder() -> ScriptedEmbedder {
    ScriptedEmbedder::new()
        .with("instanceOf", axis(6, 0))
        .with("isA", tilted(6, 0, 1, 0.97))
        .with("InstanceOf", tilted(6, 0, 3, 0.99))
        .with("birthPlace", axis(6, 2))
        .with("placeOfBirth", tilted(6, 2, 4, 0.96))
        .with("spouse", axis(6, 4))
        .with("award", axis(6, 5))
}

#[test]
fn relation_rewrite_reduces_seven_names_to_four() {
    let mut kb = seven_relation_kb();
    let freqs = relation_frequencies(&kb);
    assert_eq!(freqs.len(), 7);
    let map = cluster_names(&freqs, &ClusteringConfig::default(), &seven_relation_embedder()).unwrap();
    let before = kb.triple_count();
    let report = apply_cluster_map(&mut kb, &map, NameKind::Relation).unwrap();
    assert_eq!((report.raw_names, report.canonical_names), (7, 4));
    assert_eq!(report.triples_total, before);
    assert_eq!(kb.triple_count(), before);
    let typing: Vec<&str> = kb
        .triples()
        .filter(|t| ["instanceOf", "isA", "InstanceOf"].contains(&t.predicate_raw.as_str()))
        .map(|t| t.effective_predicate())
        .collect();
    assert_eq!(typing.len(), 10);
    assert!(typing.iter().all(|p| *p == "instanceOf"));
    assert!(kb.triples().all(|t| t.predicate_raw != "placeOfBirth" || t.effective_predicate() == "birthPlace"));
}

#[test]
fn identity_map_leaves_the_kb_unchanged() {
    let mut kb = seven_relation_kb();
    let original = kb.clone();
    let map = ClusterMap::identity(&relation_frequencies(&kb));
    let report = apply_cluster_map(&mut kb, &map, NameKind::Relation).unwrap();
    assert_eq!(report.triples_rewritten, 0);
    assert_eq!(kb, original);
}

#[test]
fn unmapped_name_aborts_without_touching_the_kb() {
    let mut kb = seven_relation_kb();
    let original = kb.clone();
    let partial = ClusterMap::identity(&names(&[("instanceOf", 9)]));
    let r = apply_cluster_map(&mut kb, &partial, NameKind::Relation);
    assert!(matches!(r, Err(ConsolidateError::Unmapped { .. })));
    assert_eq!(kb, original);
}

#[test]
fn class_rewrite_canonicalizes_typing_objects() {
    let mut kb = seven_relation_kb();
    let freqs = class_frequencies(&kb);
    assert_eq!(freqs.iter().map(|(_, f)| f).sum::<u64>(), 10);
    let e = ScriptedEmbedder::new()
        .with("Person", axis(4, 0))
        .with("human", tilted(4, 0, 1, 0.97))
        .with("City", axis(4, 2))
        .with("Town", tilted(4, 2, 3, 0.9))
        .with("Place", axis(4, 3));
    let map = cluster_names(&freqs, &ClusteringConfig::default(), &e).unwrap();
    assert_eq!(map.representative("human"), Some("Person"));
    let report = apply_cluster_map(&mut kb, &map, NameKind::Class).unwrap();
    assert_eq!(report.kind, NameKind::Class);
    assert_eq!(kb.get("B").unwrap().classes, ["Person"]);
    assert_eq!(kb.query_class("Person"), ["A", "B", "D", "E"]);
}

// ---- taxonomy

fn taxo_gateway(world: ScriptedWorld) -> Gateway {
    Gateway::new(
        Arc::new(world),
        GatewayConfig {
            backoff_base: Duration::ZERO,
            ..GatewayConfig::default()
        },
    )
}

fn seed_world() -> ScriptedWorld {
    let mut w = ScriptedWorld::new();
    w.push(TemplateId::TaxoSeed, "", json!({"Thing": {"Agent": {}, "Work": {}}}));
    w
}

#[test]
fn generality_scores() {
    let mut w = ScriptedWorld::new();
    w.push(TemplateId::TaxoScore, "entity-like root class", json!(1));
    w.push(TemplateId::TaxoScore, "Baroque chamber organ", json!({"score": 10}));
    w.push(TemplateId::TaxoScore, "Vague", json!("general"));
    w.push(TemplateId::TaxoScore, "Wobbly", json!(42));
    w.push(TemplateId::TaxoScore, "Wobbly", json!(3));
    let gw = taxo_gateway(w);
    let mut b = TaxonomyBuilder::new(&gw);
    assert_eq!(b.score_generality("entity-like root class").unwrap(), 1);
    assert_eq!(b.score_generality("Baroque chamber organ").unwrap(), 10);
    let calls = b.report.llm_calls;
    assert_eq!(b.score_generality("Vague").unwrap(), 10);
    assert_eq!(b.report.llm_calls - calls, 2);
    assert_eq!(b.score_generality("Wobbly").unwrap(), 3);
}

#[test]
fn person_lands_under_agent() {
    let mut w = seed_world();
    w.push(TemplateId::TaxoSuperclass, "Person|Thing", json!("Agent"));
    w.push(TemplateId::TaxoUpdate, "Person|Agent", json!({"Agent": {"Person": {}}}));
    let gw = taxo_gateway(w);
    let mut b = TaxonomyBuilder::new(&gw);
    let root = b.build(&[("Person".into(), 4)]).unwrap();
    assert_eq!(root.parent_of("Person"), Some("Agent"));
    assert_eq!(root.parent_of("Agent"), Some("Thing"));
    assert_eq!(root.find("Person").unwrap().generality_score, Some(4));
    assert_eq!(root.find("Agent").unwrap().generality_score, None);
    let doc = root.to_pretty_json();
    assert!(doc.contains("\n  \"class_name\": \"Thing\""));
    assert_eq!(serde_json::from_str::<TaxonomyNode>(&doc).unwrap(), root);
}

#[test]
fn non_candidate_branch_counts_as_null() {
    let mut w = seed_world();
    w.push(TemplateId::TaxoSuperclass, "Person|Thing", json!("Banana"));
    w.push(TemplateId::TaxoUpdate, "Person|Thing", json!({"Thing": {"Agent": {}, "Work": {}, "Person": {}}}));
    let gw = taxo_gateway(w);
    let mut b = TaxonomyBuilder::new(&gw);
    let mut root = b.seed_taxonomy().unwrap();
    let placed = b.insert_class_recursive(&mut root, "Thing", "Person", Some(5)).unwrap();
    assert_eq!(placed, taxonomy::Placement::Updated { anchor: "Thing".into() });
    assert_eq!(root.parent_of("Person"), Some("Thing"));
}

#[test]
fn updates_that_drop_classes_fall_back_to_direct_attachment() {
    let mut w = seed_world();
    w.push(TemplateId::TaxoSuperclass, "Person|Thing", json!("NULL"));
    w.push(TemplateId::TaxoUpdate, "Person|Thing", json!({"Thing": {"Person": {}}}));
    let gw = taxo_gateway(w);
    let mut b = TaxonomyBuilder::new(&gw);
    let mut root = b.seed_taxonomy().unwrap();
    let calls = b.report.llm_calls;
    let placed = b.insert_class_recursive(&mut root, "Thing", "Person", None).unwrap();
    assert_eq!(placed, taxonomy::Placement::Fallback { anchor: "Thing".into() });
    // superclass question, then two rejected updates
    assert_eq!(b.report.llm_calls - calls, 3);
    let children: Vec<&str> = root.children.iter().map(|c| c.class_name.as_str()).collect();
    assert_eq!(children, ["Agent", "Work", "Person"]);
    assert_eq!(b.report.fallback_attachments, ["Person"]);
}

#[test]
fn existing_names_and_empty_input() {
    let gw = taxo_gateway(seed_world());
    let mut b = TaxonomyBuilder::new(&gw);
    let root = b.build(&[]).unwrap();
    assert_eq!(root, TaxonomyNode::from_nested_json(&json!({"Thing": {"Agent": {}, "Work": {}}})).unwrap());

    let gw = taxo_gateway(seed_world());
    let mut b = TaxonomyBuilder::new(&gw);
    let root = b.build(&[("Agent".into(), 2)]).unwrap();
    assert_eq!(root.size(), 3);
    assert_eq!(b.report.skipped, ["Agent"]);
    assert_eq!(root.find("Agent").unwrap().generality_score, Some(2));
}

#[test]
fn seed_failure_falls_back_to_generic_root() {
    let mut w = ScriptedWorld::new();
    w.push(TemplateId::TaxoSeed, "", json!("not json at all"));
    let gw = taxo_gateway(w);
    let mut b = TaxonomyBuilder::new(&gw);
    let root = b.seed_taxonomy().unwrap();
    assert_eq!(root, TaxonomyNode::leaf(taxonomy::FALLBACK_ROOT));
    assert!(b.report.seed_fallback);
    assert_eq!(b.report.llm_calls, 2);
}

#[test]
fn nested_json_accepts_lists_and_nulls() {
    let t = TaxonomyNode::from_nested_json(&json!({"Thing": ["Agent", {"Work": {"Book": null}}]})).unwrap();
    assert_eq!(t.names(), ["Thing", "Agent", "Work", "Book"]);
    assert_eq!(t.height(), 3);
    assert!(TaxonomyNode::from_nested_json(&json!({"A": {}, "B": {}})).is_err());
    assert!(TaxonomyNode::from_nested_json(&json!([1])).is_err());
}

/// Answers taxonomy prompts at random, often badly.
struct Chaotic {
    rng: Mutex<ChaCha8Rng>,
}

impl Provider for Chaotic {
    fn model_id(&self) -> &str {
        "chaotic"
    }

    fn complete(&self, req: &PromptRequest, _prompt: &RenderedPrompt) -> Result<Completion, ProviderError> {
        let mut rng = self.rng.lock().unwrap();
        let class = req.variables.get("class").cloned().unwrap_or_default();
        let text = match req.template_id {
            TemplateId::TaxoSeed => match rng.gen_range(0..4) {
                0 => "garbage".to_string(),
                1 => json!({"Thing": {"Agent": {"Agent": {}}}}).to_string(),
                _ => json!({"Thing": {"Agent": {"Person": {}}, "Work": {}, "Place": {}}}).to_string(),
            },
            TemplateId::TaxoScore => rng.gen_range(-1..13).to_string(),
            TemplateId::TaxoSuperclass => {
                let branches: Vec<&str> = req.variables["branches"].split(", ").collect();
                match rng.gen_range(0..4) {
                    0 => "NULL".to_string(),
                    1 => "Banana".to_string(),
                    _ => branches[rng.gen_range(0..branches.len())].to_string(),
                }
            }
            TemplateId::TaxoUpdate => {
                let shown: Value = serde_json::from_str(&req.variables["taxonomy"]).unwrap();
                let mut tree = TaxonomyNode::from_nested_json(&shown).unwrap();
                match rng.gen_range(0..5) {
                    0 => json!({"Thing": {}}).to_string(),
                    1 => "{".to_string(),
                    2 => {
                        tree.children.clear();
                        tree.children.push(TaxonomyNode::leaf(class));
                        tree.to_nested_json().to_string()
                    }
                    _ => {
                        let mid = format!("Group of {class}");
                        let leaf = TaxonomyNode::leaf(class);
                        if rng.gen_bool(0.5) && !tree.contains(&mid) {
                            tree.children.push(TaxonomyNode::with_children(mid, vec![leaf]));
                        } else {
                            tree.children.push(leaf);
                        }
                        tree.to_nested_json().to_string()
                    }
                }
            }
            _ => String::new(),
        };
        Ok(Completion {
            usage: Default::default(),
            text,
        })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn taxonomy_invariants_hold_under_arbitrary_answers(seed in any::<u64>(), n in 0usize..25) {
        let gw = Gateway::new(
            Arc::new(Chaotic { rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) }),
            GatewayConfig { backoff_base: Duration::ZERO, ..GatewayConfig::default() },
        );
        let classes: Vec<String> = (0..n).map(|i| format!("C{}", i % 20)).chain(["Person".to_string()]).collect();
        let mut b = TaxonomyBuilder::new(&gw);
        let mut scored = Vec::new();
        for c in classes.iter().collect::<std::collections::BTreeSet<_>>() {
            let s = b.score_generality(c).unwrap();
            prop_assert!((1..=10).contains(&s));
            scored.push((c.clone(), s));
        }
        let root = b.build(&scored).unwrap();
        prop_assert!(root.check(classes.iter().map(String::as_str)).is_ok(), "{:?}", root.check(classes.iter().map(String::as_str)));
    }
}

// ---- dedup

fn person(label: &str, birth: Option<&str>, shared: usize, own: usize) -> EntityRecord {
    let mut facts: Vec<(String, String)> = vec![("instanceOf".into(), "Person".into())];
    if let Some(b) = birth {
        facts.push(("birth_date".into(), b.into()));
    }
    let mut i = 0;
    while facts.len() < shared {
        facts.push(("notableWork".into(), format!("Shared work {i}")));
        i += 1;
    }
    for j in 0..own {
        facts.push(("memberOf".into(), format!("{label} club {j}")));
    }
    let mut r = EntityRecord::new(label, 2, EntityStatus::DoneNonempty);
    r.triples = facts
        .iter()
        .map(|(p, o)| Triple::new(label, p.as_str(), o.as_str(), ObjectKind::EntityCandidate, 2))
        .collect();
    r
}

fn kennedy_embedder(sim: f64) -> ScriptedEmbedder {
    ScriptedEmbedder::new()
        .with("John F. Kennedy", axis(3, 0))
        .with("John Fitzgerald Kennedy", tilted(3, 0, 1, sim))
        .with("JFK", tilted(3, 0, 2, 0.99))
}

#[test]
fn kennedy_pair_merges_at_forty_percent_overlap() {
    let mut kb = KnowledgeBase::new();
    kb.put_record(person("John F. Kennedy", Some("1917-05-29"), 4, 6));
    kb.put_record(person("John Fitzgerald Kennedy", Some("1917-05-29"), 4, 8));
    let a = kb.get("John F. Kennedy").unwrap();
    let b = kb.get("John Fitzgerald Kennedy").unwrap();
    assert_eq!((a.triples.len(), b.triples.len()), (10, 12));
    assert!((dedup::triple_overlap(a, b) - 0.40).abs() < 1e-12);

    let report = dedup_entities(&mut kb, &DedupConfig::default(), &kennedy_embedder(0.92)).unwrap();
    assert_eq!(report.groups.len(), 1);
    let g = &report.groups[0];
    assert_eq!(g.canonical, "John Fitzgerald Kennedy");
    assert_eq!(g.merged, ["John F. Kennedy"]);
    assert_eq!(g.block, "1917-05-29");
    assert_eq!(kb.len(), 1);
    assert_eq!(kb.triple_count(), 18);
    assert_eq!(kb.canonical_label("John F. Kennedy"), "John Fitzgerald Kennedy");
    assert_eq!(kb.query_subject("John F. Kennedy").unwrap().label, "John Fitzgerald Kennedy");
}

#[test]
fn twenty_percent_overlap_is_not_enough() {
    let mut kb = KnowledgeBase::new();
    kb.put_record(person("John F. Kennedy", Some("1917-05-29"), 2, 8));
    kb.put_record(person("John Fitzgerald Kennedy", Some("1917-05-29"), 2, 10));
    let report = dedup_entities(&mut kb, &DedupConfig::default(), &kennedy_embedder(0.92)).unwrap();
    assert!(report.groups.is_empty());
    assert_eq!(report.pairs_compared, 1);
    assert_eq!(kb.len(), 2);
}

#[test]
fn thresholds_are_inclusive_for_overlap_and_strict_for_labels() {
    let build = || {
        let mut kb = KnowledgeBase::new();
        kb.put_record(person("John F. Kennedy", Some("1917-05-29"), 3, 7));
        kb.put_record(person("John Fitzgerald Kennedy", Some("1917-05-29"), 3, 9));
        kb
    };
    let mut kb = build();
    assert_eq!(dedup_entities(&mut kb, &DedupConfig::default(), &kennedy_embedder(0.92)).unwrap().groups.len(), 1);
    let mut kb = build();
    assert!(dedup_entities(&mut kb, &DedupConfig::default(), &kennedy_embedder(0.85)).unwrap().groups.is_empty());
}

#[test]
fn entities_without_the_blocking_fact_are_never_merged() {
    let mut kb = KnowledgeBase::new();
    kb.put_record(person("John F. Kennedy", Some("1917-05-29"), 4, 6));
    let mut jfk = person("JFK", None, 0, 0);
    jfk.triples.extend(kb.get("John F. Kennedy").unwrap().triples.iter().filter(|t| t.predicate_raw != "birth_date").map(|t| {
        Triple::new("JFK", t.predicate_raw.as_str(), t.object_value.as_str(), t.object_kind, 2)
    }));
    kb.put_record(jfk);
    let report = dedup_entities(&mut kb, &DedupConfig::default(), &kennedy_embedder(0.92)).unwrap();
    assert!(report.groups.is_empty());
    assert_eq!(report.pairs_compared, 0);
}

#[test]
fn blocking_predicate_matches_across_spellings() {
    let mut kb = KnowledgeBase::new();
    let mut a = person("John F. Kennedy", None, 4, 6);
    a.triples.push(Triple::new("John F. Kennedy", "birthDate", "1917-05-29", ObjectKind::Literal, 2));
    kb.put_record(a);
    kb.put_record(person("John Fitzgerald Kennedy", Some("1917-05-29"), 4, 8));
    let report = dedup_entities(&mut kb, &DedupConfig::default(), &kennedy_embedder(0.92)).unwrap();
    assert_eq!(report.blocks, 1);
    assert_eq!(report.pairs_compared, 1);
}

#[test]
fn duplicates_close_transitively() {
    // a~b and b~c hold, a~c fails on label similarity
    let e = ScriptedEmbedder::new()
        .with("A", vec![1.0, 0.0])
        .with("B", vec![0.9, 0.43589])
        .with("C", vec![0.62, 0.78460]);
    let mut kb = KnowledgeBase::new();
    kb.put_record(person("A", Some("1900"), 5, 1));
    kb.put_record(person("B", Some("1900"), 5, 2));
    kb.put_record(person("C", Some("1900"), 5, 1));
    let report = dedup_entities(&mut kb, &DedupConfig::default(), &e).unwrap();
    assert_eq!(report.groups.len(), 1);
    assert_eq!(report.groups[0].canonical, "B");
    assert_eq!(report.groups[0].merged, ["A", "C"]);
    assert_eq!(kb.len(), 1);
}

proptest! {
    #[test]
    fn dedup_keeps_every_fact_and_aliases_form_a_function(seed in any::<u64>(), n in 2usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kb = KnowledgeBase::new();
        let mut e = ScriptedEmbedder::new();
        for i in 0..n {
            let label = format!("P{i}");
            let birth = format!("19{:02}", rng.gen_range(0..3));
            let mut r = person(&label, Some(&birth), rng.gen_range(2..6), rng.gen_range(0..4));
            if rng.gen_bool(0.2) {
                r.triples.retain(|t| t.predicate_raw != "birth_date");
            }
            kb.put_record(r);
            e.insert(&label, vec![1.0, rng.gen_range(0.0..0.5)]);
        }
        let facts = |kb: &KnowledgeBase| -> std::collections::BTreeSet<(String, String, String)> {
            kb.triples()
                .map(|t| (kb.canonical_label(&t.subject).to_string(), t.predicate_raw.clone(), t.object_value.clone()))
                .collect()
        };
        let before: Vec<(String, String, String)> = kb.triples().map(|t| (t.subject.clone(), t.predicate_raw.clone(), t.object_value.clone())).collect();
        let report = dedup_entities(&mut kb, &DedupConfig::default(), &e).unwrap();
        let after = facts(&kb);
        for (s, p, o) in before {
            let canon = kb.canonical_label(&s).to_string();
            prop_assert!(after.contains(&(canon, p, o)));
        }
        let mut seen = HashMap::new();
        for g in &report.groups {
            for m in &g.merged {
                prop_assert!(seen.insert(m.clone(), g.canonical.clone()).is_none());
                prop_assert!(kb.get(m).is_none());
            }
        }
        for (alias, canonical) in kb.alias_map() {
            prop_assert!(kb.get(canonical).is_some(), "{} -> {}", alias, canonical);
        }
    }
}

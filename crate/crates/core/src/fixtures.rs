//! Synthetic scripted worlds for tests, demos and offline runs.

use crate::gateway::templates::TemplateId;
use crate::gateway::ScriptedWorld;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashSet, VecDeque};

/// Elicitation payload: one typing triple, one literal, and one `linkedTo`
/// triple per neighbour.
pub fn entity_payload(label: &str, class: &str, neighbours: &[String]) -> Value {
    let mut triples = vec![
        json!({"subject": label, "predicate": "instanceOf", "object": class}),
        json!({"subject": label, "predicate": "inceptionYear", "object": "1900"}),
    ];
    for n in neighbours {
        triples.push(json!({"subject": label, "predicate": "linkedTo", "object": n}));
    }
    json!({ "triples": triples })
}

/// A directed entity graph scripted as a world: every node answers the
/// elicitation prompt with its out-edges, and every node label is judged a
/// named entity.
#[derive(Debug, Clone, Default)]
pub struct GraphWorld {
    pub adjacency: BTreeMap<String, Vec<String>>,
    /// Nodes whose elicitation returns an empty list.
    pub empty: HashSet<String>,
    /// Nodes whose elicitation returns malformed output.
    pub malformed: HashSet<String>,
}

impl GraphWorld {
    pub fn from_edges(edges: &[(&str, &[&str])]) -> Self {
        let mut g = GraphWorld::default();
        for (from, to) in edges {
            g.adjacency
                .entry(from.to_string())
                .or_default()
                .extend(to.iter().map(|s| s.to_string()));
            for t in *to {
                g.adjacency.entry(t.to_string()).or_default();
            }
        }
        g
    }

    /// Random graph over `n` nodes `E0..E{n-1}` with out-degree in 0..=4.
    /// Some nodes answer empty or malformed.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<String> = (0..n).map(|i| format!("E{i}")).collect();
        let mut g = GraphWorld::default();
        for (i, label) in labels.iter().enumerate() {
            let degree = rng.gen_range(0..=4usize);
            let mut out: Vec<String> = labels
                .choose_multiple(&mut rng, degree)
                .filter(|l| *l != label)
                .cloned()
                .collect();
            out.sort();
            g.adjacency.insert(label.clone(), out);
            if i > 0 {
                match rng.gen_range(0..20) {
                    0 => {
                        g.empty.insert(label.clone());
                    }
                    1 => {
                        g.malformed.insert(label.clone());
                    }
                    _ => {}
                }
            }
        }
        g
    }

    pub fn world(&self) -> ScriptedWorld {
        let mut w = ScriptedWorld::new();
        for (label, out) in &self.adjacency {
            if self.empty.contains(label) {
                w.push(TemplateId::Elicit, label.clone(), json!({"triples": []}));
            } else if self.malformed.contains(label) {
                w.push(TemplateId::Elicit, label.clone(), json!("{\"triples\": [{\"subject\""));
            } else {
                w.push(TemplateId::Elicit, label.clone(), entity_payload(label, "Thing", out));
            }
            w.push(TemplateId::Ner, label.clone(), json!(true));
        }
        w
    }

    /// Shortest discovery depth of every node reachable from `seed` within
    /// `max_depth` layers, following only edges of nodes that answer.
    pub fn bfs_depths(&self, seed: &str, max_depth: u32) -> BTreeMap<String, u32> {
        let mut depth = BTreeMap::from([(seed.to_string(), 1)]);
        let mut queue = VecDeque::from([seed.to_string()]);
        while let Some(node) = queue.pop_front() {
            let d = depth[&node];
            if d >= max_depth || self.empty.contains(&node) || self.malformed.contains(&node) {
                continue;
            }
            for next in self.adjacency.get(&node).into_iter().flatten() {
                if !depth.contains_key(next) {
                    depth.insert(next.clone(), d + 1);
                    queue.push_back(next.clone());
                }
            }
        }
        depth
    }
}

/// Small world around one seed for end-to-end runs. It has spelling
/// variants of relation and class names, a duplicated person sharing a
/// birth date, scripted taxonomy answers and judge verdicts.
pub fn demo_world() -> ScriptedWorld {
    let entities: &[(&str, &[(&str, &str)])] = &[
        (
            "Vannevar Bush",
            &[
                ("instanceOf", "Person"),
                ("birthDate", "1890-03-11"),
                ("birthPlace", "Everett"),
                ("employer", "MIT"),
                ("knownFor", "Memex"),
                ("doctoralStudent", "Claude Shannon"),
                ("nationality", "American"),
                ("gender", "male"),
                ("award", "a National Medal of Science"),
            ],
        ),
        (
            "Claude Shannon",
            &[
                ("instanceOf", "Person"),
                ("birth_date", "1916-04-30"),
                ("birthPlace", "Petoskey"),
                ("employer", "Bell Labs"),
                ("doctoralAdvisor", "Vannevar Bush"),
                ("nationality", "American"),
                ("gender", "male"),
            ],
        ),
        (
            "Claude E. Shannon",
            &[
                ("instance_of", "person"),
                ("birthDate", "1916-04-30"),
                ("birthPlace", "Petoskey"),
                ("employer", "Bell Labs"),
                ("nationality", "American"),
            ],
        ),
        (
            "Everett",
            &[("instanceOf", "City"), ("country", "United States"), ("inceptionYear", "1893")],
        ),
        (
            "Petoskey",
            &[("instanceOf", "City"), ("country", "United States"), ("inceptionYear", "1879")],
        ),
        (
            "MIT",
            &[
                ("instanceOf", "University"),
                ("locatedIn", "Cambridge"),
                ("inceptionYear", "1861"),
                ("notableAlumnus", "Claude E. Shannon"),
            ],
        ),
        (
            "Bell Labs",
            &[("instanceOf", "Company"), ("inceptionYear", "1925"), ("locatedIn", "Murray Hill")],
        ),
        (
            "Memex",
            &[("instanceOf", "Device"), ("inventor", "Vannevar Bush"), ("describedIn", "As We May Think")],
        ),
        (
            "As We May Think",
            &[("instanceOf", "Essay"), ("author", "Vannevar Bush"), ("publicationYear", "1945")],
        ),
        ("Cambridge", &[("instanceOf", "City"), ("country", "United States")]),
        ("Murray Hill", &[("instanceOf", "City"), ("country", "United States")]),
        ("United States", &[("instanceOf", "Country"), ("inceptionYear", "1776")]),
    ];
    let mut w = ScriptedWorld::new().with_model_id("demo-world");
    for (label, facts) in entities {
        let triples: Vec<Value> = facts
            .iter()
            .map(|(p, o)| json!({"subject": label, "predicate": p, "object": o}))
            .collect();
        w.push(TemplateId::Elicit, *label, json!({ "triples": triples }));
        w.push(TemplateId::Ner, *label, json!(true));
        w.push(TemplateId::EntailEntity, *label, json!({"verdict": "verifiable"}));
    }
    w.push(TemplateId::TaxoSeed, "", json!({"Thing": {"Agent": {}, "Place": {}, "Work": {}}}));
    for (class, score) in [("Person", 3), ("Company", 4), ("University", 4), ("City", 4), ("Country", 3), ("Device", 5), ("Essay", 5)] {
        w.push(TemplateId::TaxoScore, class, json!(score));
    }
    for (class, branch) in [
        ("Person", "Agent"),
        ("Company", "Agent"),
        ("University", "Agent"),
        ("City", "Place"),
        ("Country", "Place"),
        ("Device", "Work"),
        ("Essay", "Work"),
    ] {
        w.push(TemplateId::TaxoSuperclass, format!("{class}|Thing"), json!(branch));
    }
    w.push(TemplateId::TaxoSuperclass, "University|Agent", json!("Organization"));
    w.push(TemplateId::TaxoSuperclass, "Company|Agent", json!("NULL"));
    w.push(TemplateId::TaxoUpdate, "Person|Agent", json!({"Agent": {"Person": {}}}));
    w.push(TemplateId::TaxoUpdate, "Company|Agent", json!({"Agent": {"Person": {}, "Organization": {"Company": {}}}}));
    w.push(TemplateId::TaxoUpdate, "University|Organization", json!({"Organization": {"Company": {}, "University": {}}}));
    w.push(TemplateId::TaxoUpdate, "Country|Place", json!({"Place": {"Country": {}}}));
    w.push(TemplateId::TaxoUpdate, "City|Place", json!({"Place": {"Country": {}, "City": {}}}));
    w.push(TemplateId::TaxoUpdate, "Device|Work", json!({"Work": {"Device": {}}}));
    w.push(TemplateId::TaxoUpdate, "Essay|Work", json!({"Work": {"Device": {}, "Essay": {}}}));
    w.push(TemplateId::EntailEntity, "*", json!({"verdict": "plausible"}));
    w.push(TemplateId::EntailTriple, "*", json!({"verdict": "entailed"}));
    w.push(TemplateId::JudgeEdge, "*", json!("yes"));
    for (child, parent) in [("Agent", "Thing"), ("Place", "Thing"), ("Work", "Thing"), ("Person", "Agent"), ("Organization", "Agent"), ("Company", "Organization"), ("University", "Organization"), ("City", "Place"), ("Country", "Place"), ("Device", "Work"), ("Essay", "Work")] {
        w.push(TemplateId::JudgeParent, child, json!(parent));
    }
    w
}

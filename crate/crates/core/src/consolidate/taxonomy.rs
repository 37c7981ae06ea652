//! LLM-guided taxonomy construction by recursive insertion.

use super::ConsolidateError;
use crate::gateway::templates::TemplateId;
use crate::gateway::{Gateway, PromptRequest};
use crate::kbstore::KnowledgeBase;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet, HashMap};

pub const FALLBACK_ROOT: &str = "Thing";
pub const DEFAULT_SCORE: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generality_score: Option<u8>,
    #[serde(default)]
    pub children: Vec<TaxonomyNode>,
}

impl TaxonomyNode {
    pub fn leaf(name: impl Into<String>) -> Self {
        TaxonomyNode {
            class_name: name.into(),
            generality_score: None,
            children: Vec::new(),
        }
    }

    pub fn with_children(name: impl Into<String>, children: Vec<TaxonomyNode>) -> Self {
        TaxonomyNode {
            children,
            ..TaxonomyNode::leaf(name)
        }
    }

    pub fn find(&self, name: &str) -> Option<&TaxonomyNode> {
        if self.class_name == name {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(name))
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut TaxonomyNode> {
        if self.class_name == name {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(name))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.find(name).is_some()
    }

    /// All class names, preorder.
    pub fn names(&self) -> Vec<&str> {
        let mut out = vec![self.class_name.as_str()];
        for c in &self.children {
            out.extend(c.names());
        }
        out
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TaxonomyNode::size).sum::<usize>()
    }

    pub fn height(&self) -> usize {
        1 + self.children.iter().map(TaxonomyNode::height).max().unwrap_or(0)
    }

    /// `(parent, child)` pairs, preorder.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for c in &self.children {
            out.push((self.class_name.as_str(), c.class_name.as_str()));
            out.extend(c.edges());
        }
        out
    }

    pub fn parent_of(&self, name: &str) -> Option<&str> {
        self.edges().into_iter().find(|(_, c)| *c == name).map(|(p, _)| p)
    }

    /// Duplicate class names, if any.
    pub fn duplicates(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut dup = BTreeSet::new();
        for n in self.names() {
            if !seen.insert(n) {
                dup.insert(n.to_string());
            }
        }
        dup.into_iter().collect()
    }

    /// Unique names and every given class present.
    pub fn check<'a>(&self, classes: impl IntoIterator<Item = &'a str>) -> Result<(), String> {
        let dup = self.duplicates();
        if !dup.is_empty() {
            return Err(format!("duplicate classes: {}", dup.join(", ")));
        }
        let missing: Vec<&str> = classes.into_iter().filter(|c| !self.contains(c)).collect();
        if !missing.is_empty() {
            return Err(format!("missing classes: {}", missing.join(", ")));
        }
        Ok(())
    }

    /// `{"Name": {"Child": {...}, ...}}`, the shape the prompts use.
    pub fn to_nested_json(&self) -> Value {
        let mut m = Map::new();
        m.insert(self.class_name.clone(), self.children_json());
        Value::Object(m)
    }

    fn children_json(&self) -> Value {
        let mut m = Map::new();
        for c in &self.children {
            m.insert(c.class_name.clone(), c.children_json());
        }
        Value::Object(m)
    }

    /// Parse the nested shape. Children may be given as an object, a list
    /// of names or one-key objects, or null for a leaf.
    pub fn from_nested_json(value: &Value) -> Result<Self, String> {
        let Value::Object(m) = value else {
            return Err("taxonomy must be an object".into());
        };
        if m.len() != 1 {
            return Err(format!("taxonomy must have exactly one root, found {}", m.len()));
        }
        let (name, children) = m.iter().next().unwrap();
        node_from(name, children)
    }

    /// Indented structured export.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }

    fn scores(&self, out: &mut HashMap<String, u8>) {
        if let Some(s) = self.generality_score {
            out.insert(self.class_name.clone(), s);
        }
        for c in &self.children {
            c.scores(out);
        }
    }

    fn apply_scores(&mut self, scores: &HashMap<String, u8>) {
        self.generality_score = scores.get(&self.class_name).copied();
        for c in &mut self.children {
            c.apply_scores(scores);
        }
    }
}

fn node_from(name: &str, children: &Value) -> Result<TaxonomyNode, String> {
    let name = name.trim();
    if name.is_empty() {
        return Err("empty class name".into());
    }
    Ok(TaxonomyNode::with_children(name, children_from(children)?))
}

fn children_from(value: &Value) -> Result<Vec<TaxonomyNode>, String> {
    match value {
        Value::Null => Ok(Vec::new()),
        Value::String(s) if s.trim().is_empty() => Ok(Vec::new()),
        Value::String(s) => Ok(vec![TaxonomyNode::leaf(s.trim())]),
        Value::Object(m) => m.iter().map(|(k, v)| node_from(k, v)).collect(),
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                match item {
                    Value::String(s) => out.push(node_from(s, &Value::Null)?),
                    Value::Object(m) => {
                        for (k, v) in m {
                            out.push(node_from(k, v)?);
                        }
                    }
                    other => return Err(format!("unexpected taxonomy element {other}")),
                }
            }
            Ok(out)
        }
        other => Err(format!("unexpected taxonomy value {other}")),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub seed_fallback: bool,
    pub inserted: usize,
    /// Classes already in the tree when their turn came.
    pub skipped: Vec<String>,
    /// Classes attached directly after two rejected updates.
    pub fallback_attachments: Vec<String>,
    pub llm_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    /// The model's update placed the class below `anchor`.
    Updated { anchor: String },
    /// Attached directly to `anchor`.
    Fallback { anchor: String },
}

/// Taxonomy prompts sent through one gateway.
pub struct TaxonomyBuilder<'g> {
    gateway: &'g Gateway,
    seq: usize,
    pub report: TaxonomyReport,
}

impl<'g> TaxonomyBuilder<'g> {
    pub fn new(gateway: &'g Gateway) -> Self {
        TaxonomyBuilder {
            gateway,
            seq: 0,
            report: TaxonomyReport::default(),
        }
    }

    fn ask(&mut self, template: TemplateId, vars: &[(&str, &str)]) -> Result<Option<Value>, ConsolidateError> {
        self.seq += 1;
        self.report.llm_calls += 1;
        let req = PromptRequest::new(
            format!("{}-{}", template.as_str(), self.seq),
            template,
            vars.iter().map(|(k, v)| (k.to_string(), v.to_string())),
        );
        let resp = self.gateway.complete_structured(&req)?;
        Ok(if resp.is_ok() { resp.payload } else { None })
    }

    /// Integer in 1..=10. An invalid answer is asked once more, then the
    /// class counts as most specific.
    pub fn score_generality(&mut self, class: &str) -> Result<u8, ConsolidateError> {
        for _ in 0..2 {
            let payload = self.ask(TemplateId::TaxoScore, &[("class", class)])?;
            if let Some(score) = payload.and_then(|p| p["score"].as_i64()) {
                if (1..=10).contains(&score) {
                    return Ok(score as u8);
                }
            }
        }
        log::warn!("no usable generality score for '{class}', using {DEFAULT_SCORE}");
        Ok(DEFAULT_SCORE)
    }

    pub fn seed_taxonomy(&mut self) -> Result<TaxonomyNode, ConsolidateError> {
        for _ in 0..2 {
            let Some(payload) = self.ask(TemplateId::TaxoSeed, &[])? else {
                continue;
            };
            match TaxonomyNode::from_nested_json(&payload) {
                Ok(tree) if tree.duplicates().is_empty() => return Ok(tree),
                Ok(_) => log::warn!("seed taxonomy repeats class names"),
                Err(e) => log::warn!("unusable seed taxonomy: {e}"),
            }
        }
        self.report.seed_fallback = true;
        Ok(TaxonomyNode::leaf(FALLBACK_ROOT))
    }

    /// Insert `class` starting at the node named `start`, descending while
    /// the model names one of the current node's children.
    pub fn insert_class_recursive(
        &mut self,
        root: &mut TaxonomyNode,
        start: &str,
        class: &str,
        score: Option<u8>,
    ) -> Result<Placement, ConsolidateError> {
        let mut current = start.to_string();
        loop {
            let node = root
                .find(&current)
                .ok_or_else(|| ConsolidateError::InvalidInput(format!("no taxonomy node '{current}'")))?;
            if node.children.is_empty() {
                break;
            }
            let branches: Vec<&str> = node.children.iter().map(|c| c.class_name.as_str()).collect();
            let joined = branches.join(", ");
            let answer = self.ask(
                TemplateId::TaxoSuperclass,
                &[("class", class), ("branches", &joined), ("node", &current)],
            )?;
            let pick = answer.as_ref().and_then(|p| p["branch"].as_str()).map(str::trim);
            match pick.and_then(|p| branches.iter().find(|b| **b == p)) {
                Some(child) => current = child.to_string(),
                None => break,
            }
        }
        self.update(root, &current, class, score)
    }

    fn update(
        &mut self,
        root: &mut TaxonomyNode,
        anchor: &str,
        class: &str,
        score: Option<u8>,
    ) -> Result<Placement, ConsolidateError> {
        let subtree = root.find(anchor).expect("anchor exists").clone();
        let inside: BTreeSet<&str> = subtree.names().into_iter().collect();
        let outside: BTreeSet<&str> = root
            .names()
            .into_iter()
            .filter(|n| !inside.contains(n))
            .collect();
        let shown = serde_json::to_string_pretty(&subtree.to_nested_json()).expect("json");
        for _ in 0..2 {
            let Some(payload) = self.ask(
                TemplateId::TaxoUpdate,
                &[("class", class), ("taxonomy", &shown), ("node", anchor)],
            )?
            else {
                continue;
            };
            match accept_update(&payload, &subtree, &inside, &outside, class) {
                Ok(mut new) => {
                    let mut scores = HashMap::new();
                    subtree.scores(&mut scores);
                    if let Some(s) = score {
                        scores.insert(class.to_string(), s);
                    }
                    new.apply_scores(&scores);
                    *root.find_mut(anchor).expect("anchor exists") = new;
                    return Ok(Placement::Updated {
                        anchor: anchor.to_string(),
                    });
                }
                Err(e) => log::warn!("rejected taxonomy update for '{class}' at '{anchor}': {e}"),
            }
        }
        let mut leaf = TaxonomyNode::leaf(class);
        leaf.generality_score = score;
        root.find_mut(anchor).expect("anchor exists").children.push(leaf);
        self.report.fallback_attachments.push(class.to_string());
        Ok(Placement::Fallback {
            anchor: anchor.to_string(),
        })
    }

    /// Seed, then insert classes most general first (ties by name).
    pub fn build(&mut self, classes: &[(String, u8)]) -> Result<TaxonomyNode, ConsolidateError> {
        let mut root = self.seed_taxonomy()?;
        let mut order: Vec<&(String, u8)> = classes.iter().collect();
        order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        for (class, score) in order {
            if let Some(existing) = root.find_mut(class) {
                log::warn!("class '{class}' already in the taxonomy, skipped");
                existing.generality_score = Some(*score);
                self.report.skipped.push(class.clone());
                continue;
            }
            let start = root.class_name.clone();
            self.insert_class_recursive(&mut root, &start, class, Some(*score))?;
            self.report.inserted += 1;
        }
        Ok(root)
    }
}

/// The parsed update must keep the anchor as its root (or list its
/// children), keep every existing name, add `class`, and not reuse a name
/// from elsewhere in the tree.
fn accept_update(
    payload: &Value,
    subtree: &TaxonomyNode,
    inside: &BTreeSet<&str>,
    outside: &BTreeSet<&str>,
    class: &str,
) -> Result<TaxonomyNode, String> {
    let anchor = subtree.class_name.as_str();
    let rooted = match payload {
        Value::Object(m) if m.len() == 1 && m.contains_key(anchor) => TaxonomyNode::from_nested_json(payload)?,
        Value::Object(_) => TaxonomyNode::with_children(anchor, children_from(payload)?),
        _ => return Err("update is not an object".into()),
    };
    let dup = rooted.duplicates();
    if !dup.is_empty() {
        return Err(format!("repeats {}", dup.join(", ")));
    }
    if let Some(lost) = inside.iter().find(|n| !rooted.contains(n)) {
        return Err(format!("drops existing class '{lost}'"));
    }
    if !rooted.contains(class) {
        return Err(format!("does not contain '{class}'"));
    }
    if let Some(clash) = rooted.names().into_iter().find(|n| outside.contains(n)) {
        return Err(format!("reuses '{clash}' from elsewhere in the taxonomy"));
    }
    Ok(rooted)
}

/// Canonical classes of the KB with their typing-triple counts.
pub fn kb_classes(kb: &KnowledgeBase) -> BTreeMap<String, u64> {
    let mut out: BTreeMap<String, u64> = BTreeMap::new();
    for t in kb.triples().filter(|t| t.is_instance_of()) {
        *out.entry(t.effective_object().to_string()).or_default() += 1;
    }
    out
}

/// Score every canonical class of the KB, then build the tree.
pub fn build_kb_taxonomy(
    kb: &KnowledgeBase,
    gateway: &Gateway,
) -> Result<(TaxonomyNode, TaxonomyReport), ConsolidateError> {
    let mut builder = TaxonomyBuilder::new(gateway);
    let mut scored = Vec::new();
    for class in kb_classes(kb).into_keys() {
        let s = builder.score_generality(&class)?;
        scored.push((class, s));
    }
    let root = builder.build(&scored)?;
    Ok((root, builder.report))
}

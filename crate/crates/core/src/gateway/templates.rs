//! Prompt templates and the structured-output schemas they are paired with.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Elicit,
    Ner,
    TaxoSeed,
    TaxoScore,
    TaxoSuperclass,
    TaxoUpdate,
    EntailEntity,
    EntailTriple,
    JudgeEdge,
    JudgeParent,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::Elicit,
        TemplateId::Ner,
        TemplateId::TaxoSeed,
        TemplateId::TaxoScore,
        TemplateId::TaxoSuperclass,
        TemplateId::TaxoUpdate,
        TemplateId::EntailEntity,
        TemplateId::EntailTriple,
        TemplateId::JudgeEdge,
        TemplateId::JudgeParent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Elicit => "elicit",
            TemplateId::Ner => "ner",
            TemplateId::TaxoSeed => "taxo_seed",
            TemplateId::TaxoScore => "taxo_score",
            TemplateId::TaxoSuperclass => "taxo_superclass",
            TemplateId::TaxoUpdate => "taxo_update",
            TemplateId::EntailEntity => "entail_entity",
            TemplateId::EntailTriple => "entail_triple",
            TemplateId::JudgeEdge => "judge_edge",
            TemplateId::JudgeParent => "judge_parent",
        }
    }

    pub fn required_variables(self) -> &'static [&'static str] {
        match self {
            TemplateId::Elicit => &["subject"],
            TemplateId::Ner => &["phrases"],
            TemplateId::TaxoSeed => &[],
            TemplateId::TaxoScore => &["class"],
            TemplateId::TaxoSuperclass => &["class", "branches"],
            TemplateId::TaxoUpdate => &["class", "taxonomy"],
            TemplateId::EntailEntity => &["label", "snippets"],
            TemplateId::EntailTriple => &["claim", "snippets"],
            TemplateId::JudgeEdge => &["child", "parent"],
            TemplateId::JudgeParent => &["child", "candidates"],
        }
    }

    /// Variable whose value identifies the request in a scripted world.
    pub fn key_variable(self) -> Option<&'static str> {
        match self {
            TemplateId::Elicit => Some("subject"),
            TemplateId::Ner => Some("phrases"),
            TemplateId::TaxoSeed => None,
            TemplateId::TaxoScore | TemplateId::TaxoSuperclass | TemplateId::TaxoUpdate => {
                Some("class")
            }
            TemplateId::EntailEntity => Some("label"),
            TemplateId::EntailTriple => Some("claim"),
            TemplateId::JudgeEdge | TemplateId::JudgeParent => Some("child"),
        }
    }

    pub fn schema(self) -> SchemaId {
        match self {
            TemplateId::Elicit => SchemaId::Triples,
            TemplateId::Ner => SchemaId::Ner,
            TemplateId::TaxoSeed | TemplateId::TaxoUpdate => SchemaId::Taxonomy,
            TemplateId::TaxoScore => SchemaId::Score,
            TemplateId::TaxoSuperclass | TemplateId::JudgeParent => SchemaId::Branch,
            TemplateId::EntailEntity => SchemaId::EntityVerdict,
            TemplateId::EntailTriple => SchemaId::TripleVerdict,
            TemplateId::JudgeEdge => SchemaId::YesNo,
        }
    }

    fn instructions(self) -> &'static str {
        match self {
            TemplateId::Elicit => ELICIT,
            TemplateId::Ner => NER,
            TemplateId::TaxoSeed => TAXO_SEED,
            TemplateId::TaxoScore => TAXO_SCORE,
            TemplateId::TaxoSuperclass => TAXO_SUPERCLASS,
            TemplateId::TaxoUpdate => TAXO_UPDATE,
            TemplateId::EntailEntity => ENTAIL_ENTITY,
            TemplateId::EntailTriple => ENTAIL_TRIPLE,
            TemplateId::JudgeEdge => JUDGE_EDGE,
            TemplateId::JudgeParent => JUDGE_PARENT,
        }
    }

    /// Leading `Name: value` lines shown above the instructions.
    fn header(self) -> &'static [(&'static str, &'static str)] {
        match self {
            TemplateId::Elicit => &[("Subject", "subject")],
            TemplateId::Ner => &[],
            TemplateId::TaxoSeed => &[],
            TemplateId::TaxoScore => &[("Class", "class")],
            TemplateId::TaxoSuperclass => &[("Candidate branches", "branches"), ("Class", "class")],
            TemplateId::TaxoUpdate => &[("Taxonomy", "taxonomy"), ("Class", "class")],
            TemplateId::EntailEntity => &[("Entity", "label"), ("Snippets", "snippets")],
            TemplateId::EntailTriple => &[("Claim", "claim"), ("Snippets", "snippets")],
            TemplateId::JudgeEdge => &[("Class", "child"), ("Superclass", "parent")],
            TemplateId::JudgeParent => &[("Class", "child"), ("Candidates", "candidates")],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template '{s}'"))
    }
}

const ELICIT: &str = "You are a knowledge base construction expert. Given a subject entity, return all facts that you know for the subject as a list of subject, predicate, object triples. The number of facts may be very high, between 50 to 100 or more, for very popular subjects. For less popular subjects, the number of facts can be very low, like 5 or 10.

Important:
- If you don't know the subject, return an empty list.
- If the subject is not a named entity, return an empty list.
- If the subject is a named entity, include at least one triple where predicate is \"instanceOf\".
- Do not get too wordy.
- Separate several objects into multiple triples with one object.";

const NER: &str = "You are an expert on named entity recognition (NER). Your task is to classify if given phrases are named entities (e.g., persons, organizations, works of art), or not (e.g., literals, dates, URLs, verbose phrases). Each phrase is given to you in a line.";

const TAXO_SEED: &str = "You are a knowledge base construction expert.
Your task is to initialize a seed taxonomy with general categories, which you will update later with given classes.
Please return only the seed taxonomy in json form with indentation.";

const TAXO_SCORE: &str = "You are a knowledge base construction expert.
Your task is to create a taxonomy for a knowledge base.
Beforehand, you need to give each given class a score describing how general it is.
The score is an integer ranging only from 1, for the most general concept, to 10, for the most specific concept.
Please return only the score of the given class.";

const TAXO_SUPERCLASS: &str = "You are a knowledge base construction expert.
Your task is to integrate a given class into the taxonomy.
If the given class is a subclass of one of the candidate branches, return only the exact name of that branch.
Otherwise, return only NULL.";

const TAXO_UPDATE: &str = "You are a knowledge base construction expert.
Your task is to update the given taxonomy with the given class.
You can consider the categorization of the taxonomy, but you can not modify the names of the classes in the taxonomy.
Please return only the updated taxonomy in JSON form.";

const ENTAIL_ENTITY: &str = "You are a textual entailment judge. Decide, using ONLY the search snippets above and no outside knowledge, whether they show that the entity exists.
Answer \"verifiable\" if the snippets confirm the entity, \"plausible\" if they make it likely without confirming it, and \"unverifiable\" otherwise.";

const ENTAIL_TRIPLE: &str = "You are a textual entailment judge. Decide, using ONLY the search snippets above and no outside knowledge, how they relate to the claim.
Answer \"entailed\" if the snippets state the claim, \"plausible\" if they are consistent with it without stating it, \"implausible\" if they make it unlikely, and \"false\" if they contradict it.";

const JUDGE_EDGE: &str = "You are a knowledge base construction expert.
Decide whether the given class is a subclass of the given superclass. Answer yes or no.";

const JUDGE_PARENT: &str = "You are a knowledge base construction expert.
Choose the candidate that is the most appropriate direct superclass of the given class. Return only the exact name of that candidate.";

/// A prompt ready to be sent to a provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub schema: SchemaId,
}

pub fn render(template: TemplateId, variables: &BTreeMap<String, String>) -> RenderedPrompt {
    let mut text = String::new();
    for (title, var) in template.header() {
        let value = variables.get(*var).map(String::as_str).unwrap_or("");
        text.push_str(title);
        text.push_str(": ");
        text.push_str(value);
        text.push('\n');
    }
    if !text.is_empty() {
        text.push('\n');
    }
    text.push_str(template.instructions());
    if template == TemplateId::Ner {
        text.push_str("\n\n");
        text.push_str(variables.get("phrases").map(String::as_str).unwrap_or(""));
    }
    RenderedPrompt {
        text,
        schema: template.schema(),
    }
}

/// Identifier of a structured-output shape. The version is part of the id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemaId {
    Triples,
    Ner,
    Taxonomy,
    Score,
    Branch,
    EntityVerdict,
    TripleVerdict,
    YesNo,
}

impl SchemaId {
    pub const ALL: [SchemaId; 8] = [
        SchemaId::Triples,
        SchemaId::Ner,
        SchemaId::Taxonomy,
        SchemaId::Score,
        SchemaId::Branch,
        SchemaId::EntityVerdict,
        SchemaId::TripleVerdict,
        SchemaId::YesNo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaId::Triples => "triples/v1",
            SchemaId::Ner => "ner/v1",
            SchemaId::Taxonomy => "taxonomy/v1",
            SchemaId::Score => "score/v1",
            SchemaId::Branch => "branch/v1",
            SchemaId::EntityVerdict => "entity_verdict/v1",
            SchemaId::TripleVerdict => "triple_verdict/v1",
            SchemaId::YesNo => "yes_no/v1",
        }
    }

    pub fn lookup(id: &str) -> Option<SchemaId> {
        SchemaId::ALL.into_iter().find(|s| s.as_str() == id)
    }

    /// JSON schema handed to providers that support constrained decoding.
    pub fn json_schema(self) -> Value {
        let string = json!({"type": "string"});
        match self {
            SchemaId::Triples => json!({
                "type": "object",
                "properties": {"triples": {"type": "array", "items": {
                    "type": "object",
                    "properties": {"subject": string, "predicate": string, "object": string},
                    "required": ["subject", "predicate", "object"],
                    "additionalProperties": false
                }}},
                "required": ["triples"],
                "additionalProperties": false
            }),
            SchemaId::Ner => json!({
                "type": "object",
                "properties": {"entities": {"type": "array", "items": {
                    "type": "object",
                    "properties": {"phrase": string, "is_named_entity": {"type": "boolean"}},
                    "required": ["phrase", "is_named_entity"],
                    "additionalProperties": false
                }}},
                "required": ["entities"],
                "additionalProperties": false
            }),
            SchemaId::Taxonomy => json!({"type": "object"}),
            SchemaId::Score => json!({
                "type": "object",
                "properties": {"score": {"type": "integer"}},
                "required": ["score"],
                "additionalProperties": false
            }),
            SchemaId::Branch => json!({
                "type": "object",
                "properties": {"branch": {"type": ["string", "null"]}},
                "required": ["branch"],
                "additionalProperties": false
            }),
            SchemaId::EntityVerdict => json!({
                "type": "object",
                "properties": {"verdict": {"enum": ["verifiable", "plausible", "unverifiable"]}},
                "required": ["verdict"],
                "additionalProperties": false
            }),
            SchemaId::TripleVerdict => json!({
                "type": "object",
                "properties": {"verdict": {"enum": ["entailed", "plausible", "implausible", "false"]}},
                "required": ["verdict"],
                "additionalProperties": false
            }),
            SchemaId::YesNo => json!({
                "type": "object",
                "properties": {"answer": {"type": "boolean"}},
                "required": ["answer"],
                "additionalProperties": false
            }),
        }
    }
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    ParseFailed,
    Empty,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTriple {
    subject: String,
    predicate: String,
    object: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTriples {
    triples: Vec<RawTriple>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNerItem {
    phrase: String,
    is_named_entity: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNer {
    entities: Vec<RawNerItem>,
}

/// Validate raw model output against a schema.
///
/// Returns the normalized payload on success. Scalar answers (scores,
/// branch names, verdicts) are accepted either bare or wrapped in their
/// single-field object, since models drop the wrapper often enough.
pub fn validate(schema: SchemaId, raw: &str) -> (ParseStatus, Option<Value>) {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return (ParseStatus::Empty, None);
    }
    let value: Value = match serde_json::from_str(trimmed) {
        Ok(v) => v,
        // bare words such as `NULL`, `Agent`, `yes` are not JSON
        Err(_) => match schema {
            SchemaId::Branch | SchemaId::EntityVerdict | SchemaId::TripleVerdict | SchemaId::YesNo => {
                Value::String(trimmed.to_string())
            }
            _ => return (ParseStatus::ParseFailed, None),
        },
    };
    let normalized = match schema {
        SchemaId::Triples => serde_json::from_value::<RawTriples>(value).ok().map(|t| {
            let triples: Vec<Value> = t
                .triples
                .into_iter()
                .map(|t| {
                    let object = match t.object {
                        Value::String(s) => s,
                        other => other.to_string(),
                    };
                    json!({"subject": t.subject, "predicate": t.predicate, "object": object})
                })
                .collect();
            json!({ "triples": triples })
        }),
        SchemaId::Ner => serde_json::from_value::<RawNer>(value).ok().map(|n| {
            let entities: Vec<Value> = n
                .entities
                .into_iter()
                .map(|e| json!({"phrase": e.phrase, "is_named_entity": e.is_named_entity}))
                .collect();
            json!({ "entities": entities })
        }),
        SchemaId::Taxonomy => match value {
            Value::Object(map) => Some(Value::Object(map)),
            _ => None,
        },
        SchemaId::Score => {
            let n = match &value {
                Value::Object(m) if m.len() == 1 => m.get("score").cloned(),
                Value::Number(_) => Some(value.clone()),
                _ => None,
            };
            n.and_then(|n| n.as_i64()).map(|score| json!({ "score": score }))
        }
        SchemaId::Branch => {
            let inner = match value {
                Value::Object(mut m) if m.len() == 1 => m.remove("branch"),
                other => Some(other),
            };
            match inner {
                Some(Value::Null) => Some(json!({ "branch": null })),
                Some(Value::String(s)) => {
                    let s = s.trim();
                    if s.is_empty() || s.eq_ignore_ascii_case("null") {
                        Some(json!({ "branch": null }))
                    } else {
                        Some(json!({ "branch": s }))
                    }
                }
                _ => None,
            }
        }
        SchemaId::EntityVerdict => {
            verdict_word(value, &["verifiable", "plausible", "unverifiable"])
        }
        SchemaId::TripleVerdict => {
            verdict_word(value, &["entailed", "plausible", "implausible", "false"])
        }
        SchemaId::YesNo => {
            let inner = match value {
                Value::Object(mut m) if m.len() == 1 => m.remove("answer"),
                other => Some(other),
            };
            match inner {
                Some(Value::Bool(b)) => Some(json!({ "answer": b })),
                Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
                    "yes" | "true" => Some(json!({"answer": true})),
                    "no" | "false" => Some(json!({"answer": false})),
                    _ => None,
                },
                _ => None,
            }
        }
    };
    match normalized {
        None => (ParseStatus::ParseFailed, None),
        Some(v) if is_empty_payload(schema, &v) => (ParseStatus::Empty, Some(v)),
        Some(v) => (ParseStatus::Ok, Some(v)),
    }
}

fn verdict_word(value: Value, allowed: &[&str]) -> Option<Value> {
    let inner = match value {
        Value::Object(mut m) if m.len() == 1 => m.remove("verdict"),
        Value::Bool(false) => Some(Value::String("false".into())),
        other => Some(other),
    };
    let word = match inner {
        Some(Value::String(s)) => s.trim().to_ascii_lowercase(),
        Some(Value::Bool(false)) => "false".to_string(),
        _ => return None,
    };
    allowed
        .iter()
        .find(|a| **a == word)
        .map(|a| json!({ "verdict": a }))
}

fn is_empty_payload(schema: SchemaId, v: &Value) -> bool {
    match schema {
        SchemaId::Triples => v["triples"].as_array().is_some_and(Vec::is_empty),
        SchemaId::Ner => v["entities"].as_array().is_some_and(Vec::is_empty),
        SchemaId::Taxonomy => v.as_object().is_some_and(|m| m.is_empty()),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elicitation_prompt_carries_subject_and_guidance() {
        let vars = BTreeMap::from([("subject".to_string(), "Vannevar Bush".to_string())]);
        let p = render(TemplateId::Elicit, &vars);
        assert!(p.text.starts_with("Subject: Vannevar Bush\n\n"));
        assert!(p.text.contains("between 50 to 100 or more"));
        assert!(p.text.contains("\"instanceOf\""));
        assert_eq!(p.schema, SchemaId::Triples);
    }

    #[test]
    fn ner_prompt_lists_phrases_one_per_line() {
        let vars = BTreeMap::from([("phrases".to_string(), "MIT\n1945".to_string())]);
        let p = render(TemplateId::Ner, &vars);
        assert!(p.text.ends_with("line.\n\nMIT\n1945"));
    }

    #[test]
    fn template_names_round_trip() {
        for t in TemplateId::ALL {
            assert_eq!(t.as_str().parse::<TemplateId>().unwrap(), t);
        }
        assert!("bogus".parse::<TemplateId>().is_err());
    }

    #[test]
    fn triples_validation() {
        let (s, v) = validate(
            SchemaId::Triples,
            r#"{"triples":[{"subject":"A","predicate":"p","object":1945}]}"#,
        );
        assert_eq!(s, ParseStatus::Ok);
        assert_eq!(v.unwrap()["triples"][0]["object"], "1945");
        assert_eq!(validate(SchemaId::Triples, r#"{"triples":[]}"#).0, ParseStatus::Empty);
        assert_eq!(validate(SchemaId::Triples, "{\"triples\":[").0, ParseStatus::ParseFailed);
        assert_eq!(validate(SchemaId::Triples, "").0, ParseStatus::Empty);
        // a payload in another schema's shape is a parse failure
        assert_eq!(validate(SchemaId::Triples, r#"{"score":3}"#).0, ParseStatus::ParseFailed);
        assert_eq!(
            validate(SchemaId::Triples, r#"{"triples":[],"version":2}"#).0,
            ParseStatus::ParseFailed
        );
    }

    #[test]
    fn scalar_answers() {
        assert_eq!(validate(SchemaId::Score, "7").1.unwrap()["score"], 7);
        assert_eq!(validate(SchemaId::Score, r#"{"score":3}"#).1.unwrap()["score"], 3);
        assert_eq!(validate(SchemaId::Score, "general").0, ParseStatus::ParseFailed);
        assert_eq!(validate(SchemaId::Score, "7.5").0, ParseStatus::ParseFailed);
        assert_eq!(validate(SchemaId::Branch, "NULL").1.unwrap()["branch"], Value::Null);
        assert_eq!(validate(SchemaId::Branch, "Agent").1.unwrap()["branch"], "Agent");
        assert_eq!(validate(SchemaId::Branch, "\"Agent\"").1.unwrap()["branch"], "Agent");
        assert_eq!(
            validate(SchemaId::TripleVerdict, "false").1.unwrap()["verdict"],
            "false"
        );
        assert_eq!(
            validate(SchemaId::EntityVerdict, r#"{"verdict":"Plausible"}"#).1.unwrap()["verdict"],
            "plausible"
        );
        assert_eq!(validate(SchemaId::EntityVerdict, "maybe").0, ParseStatus::ParseFailed);
        assert_eq!(validate(SchemaId::YesNo, "yes").1.unwrap()["answer"], true);
    }

    #[test]
    fn schema_ids_are_versioned() {
        for s in SchemaId::ALL {
            assert!(s.as_str().ends_with("/v1"));
            assert_eq!(SchemaId::lookup(s.as_str()), Some(s));
        }
        assert_eq!(SchemaId::lookup("triples/v2"), None);
    }
}

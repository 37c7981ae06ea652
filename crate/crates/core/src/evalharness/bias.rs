//! Nationality and gender distributions.

use super::providers::{Gender, NameGenderLexicon};
use crate::consolidate::dedup::predicate_skeleton;
use crate::kbstore::KnowledgeBase;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub nationality_predicate: String,
    pub gender_predicate: String,
    /// Class whose labels feed the first-name estimate.
    pub person_class: String,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            nationality_predicate: "nationality".into(),
            gender_predicate: "gender".into(),
            person_class: "Person".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasReport {
    /// Entities per nationality value, most common first.
    pub nationalities: Vec<(String, u64)>,
    /// Entities per gender value, most common first.
    pub genders: Vec<(String, u64)>,
    /// Person entities per first-name gender; `unknown` when the lexicon
    /// has no entry.
    pub first_name_genders: BTreeMap<String, u64>,
}

impl BiasReport {
    pub fn to_table(&self) -> String {
        let mut out = String::from("nationality\n");
        for (v, c) in &self.nationalities {
            out.push_str(&format!("  {v:<30}{c:>8}\n"));
        }
        out.push_str("gender\n");
        for (v, c) in &self.genders {
            out.push_str(&format!("  {v:<30}{c:>8}\n"));
        }
        out.push_str("first-name gender\n");
        for (v, c) in &self.first_name_genders {
            out.push_str(&format!("  {v:<30}{c:>8}\n"));
        }
        out
    }
}

fn ranked(counts: BTreeMap<String, u64>) -> Vec<(String, u64)> {
    let mut v: Vec<(String, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

pub fn bias_report(kb: &KnowledgeBase, cfg: &BiasConfig, lexicon: &dyn NameGenderLexicon) -> BiasReport {
    let nat = predicate_skeleton(&cfg.nationality_predicate);
    let gen = predicate_skeleton(&cfg.gender_predicate);
    let mut nationalities: BTreeMap<String, u64> = BTreeMap::new();
    let mut genders: BTreeMap<String, u64> = BTreeMap::new();
    let mut first_names: BTreeMap<String, u64> = BTreeMap::new();
    for r in kb.records() {
        let mut n_vals = BTreeSet::new();
        let mut g_vals = BTreeSet::new();
        for t in &r.triples {
            let p = predicate_skeleton(t.effective_predicate());
            if p == nat {
                n_vals.insert(t.effective_object());
            } else if p == gen {
                g_vals.insert(t.effective_object());
            }
        }
        for v in n_vals {
            *nationalities.entry(v.to_string()).or_default() += 1;
        }
        for v in g_vals {
            *genders.entry(v.to_string()).or_default() += 1;
        }
        if r.has_class(&cfg.person_class) {
            let first = r.label.split_whitespace().next().unwrap_or_default();
            let key = match lexicon.gender(first) {
                Some(Gender::Female) => "female",
                Some(Gender::Male) => "male",
                None => "unknown",
            };
            *first_names.entry(key.to_string()).or_default() += 1;
        }
    }
    BiasReport {
        nationalities: ranked(nationalities),
        genders: ranked(genders),
        first_name_genders: first_names,
    }
}

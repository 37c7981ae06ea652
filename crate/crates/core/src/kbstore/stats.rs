use super::KnowledgeBase;
use crate::triple::ObjectKind;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: u32,
    /// Labels with this depth, whatever the outcome of their elicitation.
    pub prompted: u64,
    pub entities: u64,
    pub triples: u64,
    pub entity_objects: u64,
    pub literal_objects: u64,
}

/// Aggregate counts over the store. Averages are exact ratios; an empty
/// store reports 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbStats {
    /// Subjects with at least one triple.
    pub entities: u64,
    pub prompted: u64,
    pub triples: u64,
    pub relations_raw: u64,
    pub relations_canonical: u64,
    pub classes_raw: u64,
    pub classes_canonical: u64,
    pub entity_objects: u64,
    pub literal_objects: u64,
    pub avg_triples_per_entity: Ratio<u64>,
    pub avg_label_length: Ratio<u64>,
    pub per_layer: Vec<LayerStats>,
}

impl KbStats {
    pub fn avg_triples_per_entity_f64(&self) -> f64 {
        ratio_f64(self.avg_triples_per_entity)
    }

    pub fn avg_label_length_f64(&self) -> f64 {
        ratio_f64(self.avg_label_length)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("Entities", self.entities.to_string()),
            ("Prompted labels", self.prompted.to_string()),
            ("Triples", self.triples.to_string()),
            (
                "Relations",
                format!("{} ({} before canonicalization)", self.relations_canonical, self.relations_raw),
            ),
            (
                "Classes",
                format!("{} ({} before canonicalization)", self.classes_canonical, self.classes_raw),
            ),
            (
                "Triple objects",
                format!("{} entities, {} literals", self.entity_objects, self.literal_objects),
            ),
            ("Avg. triples/entity", format!("{:.2}", self.avg_triples_per_entity_f64())),
            ("Avg. label length", format!("{:.2} characters", self.avg_label_length_f64())),
        ];
        for (k, v) in rows {
            out.push_str(&format!("{k:<22}{v}\n"));
        }
        out.push_str("\nlayer  prompted  entities   triples  ent.obj  lit.obj\n");
        for l in &self.per_layer {
            out.push_str(&format!(
                "{:>5} {:>9} {:>9} {:>9} {:>8} {:>8}\n",
                l.layer, l.prompted, l.entities, l.triples, l.entity_objects, l.literal_objects
            ));
        }
        out
    }
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratio(num: u64, den: u64) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num, den)
    }
}

/// Single pass over the store.
pub fn compute_stats(kb: &KnowledgeBase) -> KbStats {
    let mut relations_raw = HashSet::new();
    let mut relations_canonical = HashSet::new();
    let mut classes_raw = HashSet::new();
    let mut classes_canonical = HashSet::new();
    let mut layers: BTreeMap<u32, LayerStats> = BTreeMap::new();
    let (mut entities, mut prompted, mut triples) = (0u64, 0u64, 0u64);
    let (mut entity_objects, mut literal_objects, mut label_chars) = (0u64, 0u64, 0u64);

    for record in kb.records() {
        prompted += 1;
        let layer = layers.entry(record.depth).or_insert_with(|| LayerStats {
            layer: record.depth,
            ..LayerStats::default()
        });
        layer.prompted += 1;
        if record.triples.is_empty() {
            continue;
        }
        entities += 1;
        layer.entities += 1;
        label_chars += record.label.chars().count() as u64;
        for t in &record.triples {
            triples += 1;
            layer.triples += 1;
            if t.object_kind == ObjectKind::NamedEntity {
                entity_objects += 1;
                layer.entity_objects += 1;
            } else {
                literal_objects += 1;
                layer.literal_objects += 1;
            }
            relations_raw.insert(t.predicate_raw.as_str());
            relations_canonical.insert(t.effective_predicate());
            if t.is_instance_of() {
                classes_raw.insert(t.object_value.as_str());
                classes_canonical.insert(t.effective_object());
            }
        }
    }

    KbStats {
        entities,
        prompted,
        triples,
        relations_raw: relations_raw.len() as u64,
        relations_canonical: relations_canonical.len() as u64,
        classes_raw: classes_raw.len() as u64,
        classes_canonical: classes_canonical.len() as u64,
        entity_objects,
        literal_objects,
        avg_triples_per_entity: ratio(triples, entities),
        avg_label_length: ratio(label_chars, entities),
        per_layer: layers.into_values().collect(),
    }
}

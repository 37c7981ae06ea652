//! Evaluation: verifiability via search and entailment, taxonomy edge
//! accuracy, reference-KB overlap, bias counts, cutoff detection and
//! repeat-elicitation consistency.

pub mod bias;
pub mod consistency;
pub mod cutoff;
#[cfg(feature = "live")]
pub mod live;
pub mod providers;

use crate::consolidate::TaxonomyNode;
use crate::gateway::GatewayError;
use crate::kbstore::KnowledgeBase;
use crate::triple::Triple;
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use bias::{bias_report, BiasConfig, BiasReport};
pub use consistency::{consistency_probe, split_by_gap, ConsistencyReport, RunCluster};
pub use cutoff::{detect_cutoff, parse_year, year_histogram, CutoffConfig, YearHistogram};
pub use providers::{
    Gender, JudgeProvider, LlmJudge, MapLexicon, NameGenderLexicon, ProviderFailure, ReferenceKbClient,
    ScriptedJudge, ScriptedReference, ScriptedSearch, ScriptedTaxonomyJudge, SearchHit, SearchProvider,
    TaxonomyJudge,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing left to evaluate: {0}")]
    EmptySample(String),
    #[error("all {0} runs failed to parse")]
    AllRunsFailed(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub trait Verdict: Copy + Eq + Ord + fmt::Display + FromStr + 'static {
    const ALL: &'static [Self];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityVerdict {
    Verifiable,
    Plausible,
    Unverifiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleVerdict {
    Entailed,
    Plausible,
    Implausible,
    False,
}

impl Verdict for EntityVerdict {
    const ALL: &'static [Self] = &[EntityVerdict::Verifiable, EntityVerdict::Plausible, EntityVerdict::Unverifiable];
}

impl Verdict for TripleVerdict {
    const ALL: &'static [Self] = &[
        TripleVerdict::Entailed,
        TripleVerdict::Plausible,
        TripleVerdict::Implausible,
        TripleVerdict::False,
    ];
}

impl fmt::Display for EntityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityVerdict::Verifiable => "verifiable",
            EntityVerdict::Plausible => "plausible",
            EntityVerdict::Unverifiable => "unverifiable",
        })
    }
}

impl fmt::Display for TripleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripleVerdict::Entailed => "entailed",
            TripleVerdict::Plausible => "plausible",
            TripleVerdict::Implausible => "implausible",
            TripleVerdict::False => "false",
        })
    }
}

fn parse_verdict<V: Verdict>(s: &str) -> Result<V, String> {
    let s = s.trim().to_ascii_lowercase();
    V::ALL
        .iter()
        .copied()
        .find(|v| v.to_string() == s)
        .ok_or_else(|| format!("unknown verdict '{s}'"))
}

impl FromStr for EntityVerdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_verdict(s)
    }
}

impl FromStr for TripleVerdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_verdict(s)
    }
}

/// Verdict counts over the items judged without error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    pub counts: BTreeMap<String, u64>,
    pub judged: u64,
    pub errors: u64,
}

impl Rates {
    pub fn from_checked<V: Verdict>(items: &[Checked<V>]) -> Self {
        let mut counts: BTreeMap<String, u64> = V::ALL.iter().map(|v| (v.to_string(), 0)).collect();
        let mut rates = Rates::default();
        for item in items {
            match (&item.error, item.verdict) {
                (None, Some(v)) => {
                    *counts.get_mut(&v.to_string()).unwrap() += 1;
                    rates.judged += 1;
                }
                _ => rates.errors += 1,
            }
        }
        rates.counts = counts;
        rates
    }

    pub fn fraction(&self, verdict: impl fmt::Display) -> Ratio<u64> {
        let n = self.counts.get(&verdict.to_string()).copied().unwrap_or(0);
        if self.judged == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(n, self.judged)
        }
    }

    pub fn fraction_f64(&self, verdict: impl fmt::Display) -> f64 {
        let r = self.fraction(verdict);
        *r.numer() as f64 / *r.denom() as f64
    }
}

/// One verified item. A provider failure leaves `error` set and the item
/// out of the rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checked<V> {
    pub item: String,
    pub layer: u32,
    pub verdict: Option<V>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Search results per query.
    pub k: usize,
    pub search_attempts: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            k: 5,
            search_attempts: 2,
        }
    }
}

fn search_with_retry(
    query: &str,
    search: &dyn SearchProvider,
    cfg: &VerifyConfig,
) -> Result<Vec<SearchHit>, String> {
    let mut last = String::new();
    for _ in 0..cfg.search_attempts.max(1) {
        match search.search(query, cfg.k) {
            Ok(hits) => return Ok(hits),
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}

pub fn verify_entity(
    label: &str,
    layer: u32,
    search: &dyn SearchProvider,
    judge: &dyn JudgeProvider,
    cfg: &VerifyConfig,
) -> Checked<EntityVerdict> {
    let mut out = Checked {
        item: label.to_string(),
        layer,
        verdict: Some(EntityVerdict::Unverifiable),
        error: None,
    };
    match search_with_retry(label, search, cfg) {
        Err(e) => out.error = Some(e),
        Ok(hits) if hits.is_empty() => {}
        Ok(hits) => match judge.judge_entity(label, &hits) {
            Ok(v) => out.verdict = Some(v),
            Err(e) => out.error = Some(e.to_string()),
        },
    }
    out
}

pub fn claim_text(t: &Triple) -> String {
    format!("{} {} {}", t.subject, t.effective_predicate(), t.effective_object())
}

/// Searches `"<subject> <object>"`; the judge is asked even with no
/// snippets.
pub fn verify_triple(
    t: &Triple,
    search: &dyn SearchProvider,
    judge: &dyn JudgeProvider,
    cfg: &VerifyConfig,
) -> Checked<TripleVerdict> {
    let claim = claim_text(t);
    let mut out = Checked {
        item: claim.clone(),
        layer: t.provenance.layer,
        verdict: None,
        error: None,
    };
    let query = format!("{} {}", t.subject, t.effective_object());
    match search_with_retry(&query, search, cfg) {
        Err(e) => out.error = Some(e),
        Ok(hits) => match judge.judge_triple(&claim, &hits) {
            Ok(v) => out.verdict = Some(v),
            Err(e) => out.error = Some(e.to_string()),
        },
    }
    out
}

/// Order-preserving parallel map over scoped threads.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).min(8);
    if items.len() < 2 || workers < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("verification worker panicked"))
            .collect()
    })
}

/// Seeded uniform sample of `n` positions out of `total`, ascending.
pub fn sample_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, n.min(total)).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRates {
    pub layer: u32,
    /// Entities (or triples) of this layer in the KB.
    pub weight: u64,
    pub rates: Rates,
}

/// `sum_l w_l * frac_l(v) / sum_l w_l` over layers with judged items.
pub fn weighted_average(layers: &[LayerRates], verdict: impl fmt::Display) -> f64 {
    let name = verdict.to_string();
    let (mut num, mut den) = (0.0, 0.0);
    for l in layers.iter().filter(|l| l.rates.judged > 0) {
        num += l.weight as f64 * l.rates.fraction_f64(&name);
        den += l.weight as f64;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport<V> {
    pub kind: String,
    pub sample_per_layer: usize,
    pub seed: u64,
    pub per_layer: Vec<LayerRates>,
    pub pooled: Rates,
    pub weighted: BTreeMap<String, f64>,
    pub items: Vec<Checked<V>>,
}

impl<V: Verdict> PrecisionReport<V> {
    fn assemble(kind: &str, sample: usize, seed: u64, weights: BTreeMap<u32, u64>, items: Vec<Checked<V>>) -> Self {
        let per_layer: Vec<LayerRates> = weights
            .iter()
            .map(|(&layer, &weight)| {
                let in_layer: Vec<Checked<V>> = items.iter().filter(|c| c.layer == layer).cloned().collect();
                LayerRates {
                    layer,
                    weight,
                    rates: Rates::from_checked(&in_layer),
                }
            })
            .collect();
        let weighted = V::ALL
            .iter()
            .map(|v| (v.to_string(), weighted_average(&per_layer, v)))
            .collect();
        PrecisionReport {
            kind: kind.to_string(),
            sample_per_layer: sample,
            seed,
            pooled: Rates::from_checked(&items),
            per_layer,
            weighted,
            items,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} precision (sample {} per layer, seed {})\n{:<8}{:>10}",
            self.kind, self.sample_per_layer, self.seed, "layer", "weight"
        );
        for v in V::ALL {
            out.push_str(&format!("{:>14}", v.to_string()));
        }
        out.push('\n');
        for l in &self.per_layer {
            out.push_str(&format!("{:<8}{:>10}", l.layer, l.weight));
            for v in V::ALL {
                out.push_str(&format!("{:>14.4}", l.rates.fraction_f64(v)));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:<8}{:>10}", "wavg", ""));
        for v in V::ALL {
            out.push_str(&format!("{:>14.4}", self.weighted[&v.to_string()]));
        }
        out.push('\n');
        out
    }
}

/// Sample up to `n` non-empty entities per layer and verify them.
pub fn eval_entities(
    kb: &KnowledgeBase,
    search: &dyn SearchProvider,
    judge: &dyn JudgeProvider,
    n: usize,
    seed: u64,
    cfg: &VerifyConfig,
) -> Result<PrecisionReport<EntityVerdict>, EvalError> {
    let mut layers: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for r in kb.records().filter(|r| !r.triples.is_empty()) {
        layers.entry(r.depth).or_default().push(&r.label);
    }
    if layers.is_empty() {
        return Err(EvalError::EmptySample("the KB has no entities".into()));
    }
    let mut sample: Vec<(&str, u32)> = Vec::new();
    for (&layer, labels) in &layers {
        for i in sample_indices(labels.len(), n, seed.wrapping_add(layer as u64)) {
            sample.push((labels[i], layer));
        }
    }
    let items = par_map(&sample, |(label, layer)| verify_entity(label, *layer, search, judge, cfg));
    let weights = layers.iter().map(|(l, v)| (*l, v.len() as u64)).collect();
    Ok(PrecisionReport::assemble("entity", n, seed, weights, items))
}

/// Sample up to `n` triples per provenance layer and verify them.
pub fn eval_triples(
    kb: &KnowledgeBase,
    search: &dyn SearchProvider,
    judge: &dyn JudgeProvider,
    n: usize,
    seed: u64,
    cfg: &VerifyConfig,
) -> Result<PrecisionReport<TripleVerdict>, EvalError> {
    let mut layers: BTreeMap<u32, Vec<&Triple>> = BTreeMap::new();
    for t in kb.triples() {
        layers.entry(t.provenance.layer).or_default().push(t);
    }
    if layers.is_empty() {
        return Err(EvalError::EmptySample("the KB has no triples".into()));
    }
    let mut sample: Vec<&Triple> = Vec::new();
    for (&layer, triples) in &layers {
        for i in sample_indices(triples.len(), n, seed.wrapping_add(layer as u64)) {
            sample.push(triples[i]);
        }
    }
    let items = par_map(&sample, |t| verify_triple(t, search, judge, cfg));
    let weights = layers.iter().map(|(l, v)| (*l, v.len() as u64)).collect();
    Ok(PrecisionReport::assemble("triple", n, seed, weights, items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyEval {
    pub edges: usize,
    pub approved: usize,
    pub best_parent_hits: usize,
    pub errors: usize,
    pub edge_accuracy: f64,
    pub best_parent_accuracy: f64,
}

/// Judge every child-parent edge, and ask for the best parent among the
/// actual parent and its siblings.
pub fn evaluate_taxonomy(root: &TaxonomyNode, judge: &dyn TaxonomyJudge) -> Result<TaxonomyEval, EvalError> {
    let edges = root.edges();
    if edges.is_empty() {
        return Err(EvalError::EmptySample("the taxonomy has no edges".into()));
    }
    let (mut approved, mut hits, mut errors) = (0, 0, 0);
    for (parent, child) in &edges {
        let candidates: Vec<&str> = match root.parent_of(parent).and_then(|gp| root.find(gp)) {
            Some(gp) => gp.children.iter().map(|c| c.class_name.as_str()).collect(),
            None => vec![*parent],
        };
        match (judge.edge_ok(child, parent), judge.best_parent(child, &candidates)) {
            (Ok(ok), Ok(best)) => {
                approved += ok as usize;
                hits += (best.as_deref() == Some(*parent)) as usize;
            }
            _ => errors += 1,
        }
    }
    let judged = edges.len() - errors;
    let frac = |n: usize| if judged == 0 { 0.0 } else { n as f64 / judged as f64 };
    Ok(TaxonomyEval {
        edges: edges.len(),
        approved,
        best_parent_hits: hits,
        errors,
        edge_accuracy: frac(approved),
        best_parent_accuracy: frac(hits),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub sampled: usize,
    pub excluded: Vec<String>,
    pub exact: usize,
    pub fuzzy: usize,
    pub novel: usize,
    pub exact_fraction: f64,
    pub fuzzy_fraction: f64,
    pub novel_fraction: f64,
}

/// Exact label hit, else fuzzy hit, else novel.
pub fn overlap_report(labels: &[String], client: &dyn ReferenceKbClient) -> Result<OverlapReport, EvalError> {
    #[derive(Clone, Copy)]
    enum Hit {
        Exact,
        Fuzzy,
        Novel,
    }
    let outcomes = par_map(labels, |l| -> Result<Hit, ProviderFailure> {
        if client.exact_label_lookup(l)? {
            Ok(Hit::Exact)
        } else if client.fuzzy_search(l)? {
            Ok(Hit::Fuzzy)
        } else {
            Ok(Hit::Novel)
        }
    });
    let (mut exact, mut fuzzy, mut novel) = (0, 0, 0);
    let mut excluded = Vec::new();
    for (label, o) in labels.iter().zip(outcomes) {
        match o {
            Ok(Hit::Exact) => exact += 1,
            Ok(Hit::Fuzzy) => fuzzy += 1,
            Ok(Hit::Novel) => novel += 1,
            Err(e) => {
                log::warn!("reference lookup for '{label}' failed: {e}");
                excluded.push(label.clone());
            }
        }
    }
    let n = exact + fuzzy + novel;
    if n == 0 {
        return Err(EvalError::EmptySample("every reference lookup failed".into()));
    }
    let f = |k: usize| k as f64 / n as f64;
    Ok(OverlapReport {
        sampled: labels.len(),
        excluded,
        exact,
        fuzzy,
        novel,
        exact_fraction: f(exact),
        fuzzy_fraction: f(fuzzy),
        novel_fraction: f(novel),
    })
}

/// Seeded sample of entity labels for the overlap report.
pub fn sample_entity_labels(kb: &KnowledgeBase, n: usize, seed: u64) -> Vec<String> {
    let labels: Vec<&str> = kb
        .records()
        .filter(|r| !r.triples.is_empty())
        .map(|r| r.label.as_str())
        .collect();
    sample_indices(labels.len(), n, seed)
        .into_iter()
        .map(|i| labels[i].to_string())
        .collect()
}

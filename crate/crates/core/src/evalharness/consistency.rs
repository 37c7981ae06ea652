//! Repeat-elicitation consistency.

use super::EvalError;
use crate::crawler::ElicitationResult;
use crate::gateway::templates::{ParseStatus, TemplateId};
use crate::gateway::{Gateway, PromptRequest};
use crate::triple::Provenance;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCluster {
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub subject: String,
    pub runs: usize,
    pub parse_failures: usize,
    pub gap: usize,
    /// Ascending by size of triple count.
    pub clusters: Vec<RunCluster>,
    /// Mean pairwise Jaccard overlap of exact triples within the largest
    /// cluster; absent when it holds a single run.
    pub largest_cluster_overlap: Option<f64>,
    pub counts: Vec<usize>,
}

impl ConsistencyReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "consistency of '{}': {} runs, {} parse failures\n{:<10}{:>8}{:>10}{:>10}{:>6}{:>6}\n",
            self.subject, self.runs, self.parse_failures, "cluster", "runs", "mean", "std", "min", "max"
        );
        for (i, c) in self.clusters.iter().enumerate() {
            out.push_str(&format!(
                "{:<10}{:>8}{:>10.2}{:>10.2}{:>6}{:>6}\n",
                i, c.runs, c.mean, c.std, c.min, c.max
            ));
        }
        match self.largest_cluster_overlap {
            Some(o) => out.push_str(&format!("largest-cluster overlap {o:.4}\n")),
            None => out.push_str("largest-cluster overlap n/a\n"),
        }
        out
    }
}

/// Sort and split wherever adjacent values differ by more than `gap`.
pub fn split_by_gap(values: &[usize], gap: usize) -> Vec<Vec<usize>> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for v in sorted {
        match groups.last_mut() {
            Some(g) if v - *g.last().unwrap() <= gap => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    groups
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn summarize(group: &[usize]) -> RunCluster {
    let n = group.len() as f64;
    let mean = group.iter().sum::<usize>() as f64 / n;
    let var = group.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    RunCluster {
        runs: group.len(),
        mean,
        std: var.sqrt(),
        min: *group.first().unwrap(),
        max: *group.last().unwrap(),
    }
}

/// Elicit `subject` `n_runs` times, one request after another.
pub fn consistency_probe(
    subject: &str,
    n_runs: usize,
    gap: usize,
    gateway: &Gateway,
) -> Result<ConsistencyReport, EvalError> {
    if n_runs < 2 {
        return Err(EvalError::InvalidInput(format!("need at least 2 runs, got {n_runs}")));
    }
    let provenance = Provenance {
        layer: 1,
        batch_id: "consistency".into(),
        model_id: gateway.model_id(),
    };
    let mut runs: Vec<HashSet<String>> = Vec::new();
    let mut failures = 0;
    for i in 0..n_runs {
        let req = PromptRequest::new(format!("probe-{i}"), TemplateId::Elicit, [])
            .var("subject", subject);
        let resp = gateway.complete_structured(&req)?;
        if resp.parse_status == ParseStatus::ParseFailed {
            failures += 1;
            continue;
        }
        let r = ElicitationResult::from_response(subject, 1, &resp, &provenance, usize::MAX);
        runs.push(
            r.triples
                .iter()
                .map(|t| format!("{}\t{}\t{}", t.subject, t.predicate_raw, t.object_value))
                .collect(),
        );
    }
    if runs.is_empty() {
        return Err(EvalError::AllRunsFailed(n_runs));
    }
    let counts: Vec<usize> = runs.iter().map(HashSet::len).collect();
    let groups = split_by_gap(&counts, gap);
    let clusters: Vec<RunCluster> = groups.iter().map(|g| summarize(g)).collect();

    // largest cluster by run count; the earlier (smaller counts) wins ties
    let largest = groups
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();
    let (lo, hi) = (*groups[largest].first().unwrap(), *groups[largest].last().unwrap());
    let members: Vec<&HashSet<String>> = runs.iter().filter(|r| (lo..=hi).contains(&r.len())).collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            sum += jaccard(members[i], members[j]);
            pairs += 1;
        }
    }
    Ok(ConsistencyReport {
        subject: subject.to_string(),
        runs: n_runs,
        parse_failures: failures,
        gap,
        clusters,
        largest_cluster_overlap: (pairs > 0).then(|| sum / pairs as f64),
        counts,
    })
}

//! Browser demo: three interactive operations over the consolidation and
//! evaluation code. The `*_json` functions are plain Rust; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use kbforge::consolidate::cluster::{adaptive_threshold, cluster_names, sorted_by_frequency, ClusteringConfig};
use kbforge::consolidate::NgramEmbedder;
use kbforge::evalharness::{detect_cutoff, CutoffConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub frequency: u64,
    pub threshold: f64,
}

#[derive(Debug, Serialize)]
pub struct DemoCluster {
    pub representative: String,
    pub members: Vec<(String, u64)>,
}

#[derive(Debug, Serialize)]
pub struct DemoCutoff {
    pub counts: BTreeMap<i32, u64>,
    pub cutoff: Option<i32>,
}

/// Parses `name count` lines; the count is the last whitespace-separated
/// token and defaults to 1.
pub fn parse_counts(text: &str) -> Result<Vec<(String, u64)>, String> {
    let mut out: Vec<(String, u64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, count) = match line.rsplit_once(|c: char| c.is_whitespace() || c == ',') {
            Some((n, c)) if c.trim().parse::<u64>().is_ok() => (n.trim().trim_end_matches(',').trim(), c.trim().parse::<u64>().unwrap()),
            _ => (line, 1),
        };
        if name.is_empty() || count == 0 {
            return Err(format!("line {}: need a name and a positive count", i + 1));
        }
        match out.iter_mut().find(|(n, _)| n == name) {
            Some(e) => e.1 += count,
            None => out.push((name.to_string(), count)),
        }
    }
    Ok(out)
}

fn config(alpha: f64, high: f64, low: f64) -> Result<ClusteringConfig, String> {
    let cfg = ClusteringConfig { alpha, high, low };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Threshold at 1..=`freq_max` sampled on `points` roughly log-spaced steps.
pub fn threshold_curve_json(freq_max: u64, alpha: f64, high: f64, low: f64, points: usize) -> Result<String, String> {
    let cfg = config(alpha, high, low)?;
    if freq_max == 0 {
        return Err("maximum frequency must be positive".into());
    }
    let points = points.clamp(2, 500);
    let mut freqs: Vec<u64> = (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            (freq_max as f64).powf(t).round() as u64
        })
        .collect();
    freqs.dedup();
    let curve: Vec<CurvePoint> = freqs
        .into_iter()
        .map(|f| CurvePoint {
            frequency: f,
            threshold: adaptive_threshold(f, freq_max, &cfg),
        })
        .collect();
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

/// Clusters names with the offline trigram embedder.
pub fn cluster_json(text: &str, alpha: f64, high: f64, low: f64) -> Result<String, String> {
    let cfg = config(alpha, high, low)?;
    let names = parse_counts(text)?;
    let map = cluster_names(&names, &cfg, &NgramEmbedder::default()).map_err(|e| e.to_string())?;
    let mut clusters: Vec<DemoCluster> = (0..map.cluster_count())
        .map(|id| DemoCluster {
            representative: map.representative_of_cluster(id).to_string(),
            members: map.members(id).iter().map(|(n, f)| (n.clone(), *f)).collect(),
        })
        .collect();
    let order: Vec<&str> = sorted_by_frequency(&names).into_iter().map(|(n, _)| n).collect();
    clusters.sort_by_key(|c| order.iter().position(|n| *n == c.representative));
    for c in &mut clusters {
        c.members.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    }
    Ok(serde_json::to_string(&clusters).expect("clusters serialize"))
}

/// Cutoff over `year count` lines.
pub fn cutoff_json(text: &str, drop_ratio: f64, min_support: u64) -> Result<String, String> {
    if !(drop_ratio > 0.0 && drop_ratio <= 1.0) {
        return Err(format!("drop ratio must be in (0, 1], got {drop_ratio}"));
    }
    let mut counts = BTreeMap::new();
    for (name, c) in parse_counts(text)? {
        let y: i32 = name.parse().map_err(|_| format!("'{name}' is not a year"))?;
        *counts.entry(y).or_insert(0) += c;
    }
    let cutoff = detect_cutoff(&counts, &CutoffConfig { drop_ratio, min_support });
    Ok(serde_json::to_string(&DemoCutoff { counts, cutoff }).expect("cutoff serializes"))
}

#[wasm_bindgen]
pub fn threshold_curve(freq_max: u64, alpha: f64, high: f64, low: f64, points: usize) -> Result<String, JsError> {
    threshold_curve_json(freq_max, alpha, high, low, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cluster(text: &str, alpha: f64, high: f64, low: f64) -> Result<String, JsError> {
    cluster_json(text, alpha, high, low).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cutoff(text: &str, drop_ratio: f64, min_support: u64) -> Result<String, JsError> {
    cutoff_json(text, drop_ratio, min_support).map_err(|e| JsError::new(&e))
}

//! Year histogram of literal objects and knowledge-cutoff detection.

use crate::consolidate::dedup::predicate_skeleton;
use crate::kbstore::KnowledgeBase;
use crate::triple::ObjectKind;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutoffConfig {
    pub drop_ratio: f64,
    pub min_support: u64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        CutoffConfig {
            drop_ratio: 0.25,
            min_support: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct YearHistogram {
    pub counts: BTreeMap<i32, u64>,
    pub cutoff: Option<i32>,
}

impl YearHistogram {
    pub fn to_table(&self) -> String {
        let peak = self.counts.values().copied().max().unwrap_or(1).max(1);
        let mut out = String::new();
        for (y, c) in &self.counts {
            let bar = "#".repeat(((c * 40).div_ceil(peak)) as usize);
            let mark = if Some(*y) == self.cutoff { "  <- cutoff" } else { "" };
            out.push_str(&format!("{y} {c:>8} {bar}{mark}\n"));
        }
        if self.cutoff.is_none() {
            out.push_str("no cutoff detected\n");
        }
        out
    }
}

fn year_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d{4})(?:-\d{2}(?:-\d{2})?)?$").unwrap())
}

/// Year of a bare `YYYY`, `YYYY-MM` or `YYYY-MM-DD` literal.
pub fn parse_year(s: &str) -> Option<i32> {
    year_re().captures(s.trim()).and_then(|c| c[1].parse().ok())
}

/// Latest year `y` below the last observed year with
/// `count(y+1) / count(y) < drop_ratio` and `count(y) >= min_support`.
/// Years missing inside the range count as zero.
pub fn detect_cutoff(counts: &BTreeMap<i32, u64>, cfg: &CutoffConfig) -> Option<i32> {
    let (&first, _) = counts.first_key_value()?;
    let (&last, _) = counts.last_key_value()?;
    let count = |y: i32| counts.get(&y).copied().unwrap_or(0);
    (first..last).rev().find(|&y| {
        let c = count(y);
        c >= cfg.min_support && c > 0 && (count(y + 1) as f64) < cfg.drop_ratio * c as f64
    })
}

/// Count literal objects that are years, optionally only under predicates
/// whose skeleton matches `year_predicate`.
pub fn year_histogram(kb: &KnowledgeBase, year_predicate: Option<&str>, cfg: &CutoffConfig) -> YearHistogram {
    let want = year_predicate.map(predicate_skeleton);
    let mut counts: BTreeMap<i32, u64> = BTreeMap::new();
    for t in kb.triples().filter(|t| t.object_kind == ObjectKind::Literal) {
        if let Some(w) = &want {
            if predicate_skeleton(t.effective_predicate()) != *w {
                continue;
            }
        }
        if let Some(y) = parse_year(&t.object_value) {
            *counts.entry(y).or_default() += 1;
        }
    }
    let cutoff = detect_cutoff(&counts, cfg);
    YearHistogram { counts, cutoff }
}

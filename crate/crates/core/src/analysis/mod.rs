//! Post-hoc analysis of model outputs: per-level TF-IDF over reasoning text
//! and a distance/VS30 scatter table.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::SampleFeatures;
use crate::llm::Prediction;
use crate::mmi::MmiLevel;

pub const DEFAULT_TOP_K: usize = 15;
const STOPWORDS_TXT: &str = include_str!("../../data/stopwords.txt");
pub const SCATTER_HEADER: &str = "sample_id,mmi_pred,distance_km,vs30_ms";
pub const TERMS_HEADER: &str = "level,rank,term,tf,idf,log_tfidf";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("TF-IDF needs at least two distinct predicted levels, found {0}")]
    SingleLevel(usize),
    #[error("prediction {0} has no matching feature record")]
    Join(String),
    #[error("fewer than two points or a constant series")]
    Degenerate,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercase alphanumeric runs of length >= 3, minus stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stopwords();
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 3)
        .map(str::to_lowercase)
        .filter(|t| !stop.contains(t.as_str()))
        .collect()
}

/// Splits on sentence-final punctuation followed by whitespace, and on
/// newlines.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        let next_ws = chars.get(i + 1).is_none_or(|(_, n)| n.is_whitespace());
        if c == '\n' || (matches!(c, '.' | '!' | '?') && next_ws) {
            let end = pos + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Keyword gate assigning reasoning sentences to a perspective. A sentence
/// qualifies when any of its tokens starts with one of the keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perspective {
    pub name: String,
    pub keywords: Vec<String>,
}

impl Perspective {
    pub fn defaults() -> Vec<Perspective> {
        let p = |name: &str, kws: &[&str]| Perspective {
            name: name.into(),
            keywords: kws.iter().map(|s| s.to_string()).collect(),
        };
        vec![
            p("buildings", &["building", "structure", "construct", "house", "height", "material", "masonry", "wood", "brick", "concrete", "infrastructure"]),
            p("socioeconomic", &["population", "income", "socioeconomic", "density", "urban", "elderly", "education", "vulnerab", "community", "demograph"]),
            p("imagery", &["image", "visual", "street", "road", "vegetation", "tree", "surround", "view"]),
        ]
    }

    pub fn matches(&self, sentence: &str) -> bool {
        let lower = sentence.to_lowercase();
        lower
            .split(|c: char| !c.is_alphanumeric())
            .any(|t| !t.is_empty() && self.keywords.iter().any(|k| t.starts_with(k.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    pub mmi_level: MmiLevel,
    pub tf: f64,
    pub idf: f64,
    /// `ln(tf * idf)`; absent when `idf` is zero.
    pub log_tfidf: Option<f64>,
}

/// Per-level term statistics for every term, ordered by level then term.
pub fn term_table(preds: &[Prediction], filter: Option<&Perspective>) -> Result<BTreeMap<MmiLevel, Vec<TermScore>>, AnalysisError> {
    let mut docs: BTreeMap<MmiLevel, Vec<String>> = BTreeMap::new();
    for p in preds {
        let doc = docs.entry(p.mmi).or_default();
        match filter {
            None => doc.extend(tokenize(&p.reasoning)),
            Some(f) => {
                for s in sentences(&p.reasoning).into_iter().filter(|s| f.matches(s)) {
                    doc.extend(tokenize(s));
                }
            }
        }
    }
    if docs.len() < 2 {
        return Err(AnalysisError::SingleLevel(docs.len()));
    }
    let d = docs.len() as f64;
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in docs.values() {
        for t in tokens.iter().map(String::as_str).collect::<BTreeSet<_>>() {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut out = BTreeMap::new();
    for (level, tokens) in &docs {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let len = tokens.len() as f64;
        let scores = counts
            .into_iter()
            .map(|(term, c)| {
                let tf = c as f64 / len;
                let idf = (d / df[term] as f64).ln();
                TermScore {
                    term: term.to_string(),
                    mmi_level: *level,
                    tf,
                    idf,
                    log_tfidf: (idf > 0.0).then(|| (tf * idf).ln()),
                }
            })
            .collect();
        out.insert(*level, scores);
    }
    Ok(out)
}

/// Top `k` terms per level by `log_tfidf` (ties by term); terms present in
/// every level are left out.
pub fn tfidf_by_mmi(preds: &[Prediction], filter: Option<&Perspective>, k: usize) -> Result<Vec<TermScore>, AnalysisError> {
    let table = term_table(preds, filter)?;
    let mut out = Vec::new();
    for (_, mut scores) in table {
        scores.retain(|s| s.log_tfidf.is_some());
        scores.sort_by(|a, b| b.log_tfidf.unwrap().total_cmp(&a.log_tfidf.unwrap()).then_with(|| a.term.cmp(&b.term)));
        out.extend(scores.into_iter().take(k));
    }
    Ok(out)
}

pub fn write_terms_csv<W: Write>(mut w: W, scores: &[TermScore]) -> std::io::Result<()> {
    writeln!(w, "{TERMS_HEADER}")?;
    let mut rank = 0;
    let mut last = None;
    for s in scores {
        rank = if last == Some(s.mmi_level) { rank + 1 } else { 1 };
        last = Some(s.mmi_level);
        let log = s.log_tfidf.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", s.mmi_level.roman(), rank, s.term, s.tf, s.idf, log)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub sample_id: String,
    pub zone_id: String,
    pub mmi_pred: u8,
    pub distance_km: f64,
    pub vs30_ms: f64,
}

/// One row per prediction, ordered by zone then sample.
pub fn scatter_rows(preds: &[Prediction], features: &[SampleFeatures]) -> Result<Vec<ScatterRow>, AnalysisError> {
    let by_id: BTreeMap<&str, &SampleFeatures> = features.iter().map(|f| (f.sample_id.as_str(), f)).collect();
    let mut rows = preds
        .iter()
        .map(|p| {
            let f = by_id.get(p.sample_id.as_str()).ok_or_else(|| AnalysisError::Join(p.sample_id.clone()))?;
            Ok(ScatterRow {
                sample_id: p.sample_id.clone(),
                zone_id: p.zone_id.clone(),
                mmi_pred: p.mmi.value(),
                distance_km: f.location.epicentral_distance_km,
                vs30_ms: f.site.vs30,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    rows.sort_by(|a, b| (&a.zone_id, &a.sample_id).cmp(&(&b.zone_id, &b.sample_id)));
    Ok(rows)
}

pub fn write_scatter_csv<W: Write>(mut w: W, rows: &[ScatterRow]) -> std::io::Result<()> {
    writeln!(w, "{SCATTER_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.sample_id, r.mmi_pred, r.distance_km, r.vs30_ms)?;
    }
    Ok(())
}

/// 1-based ranks with ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson on tie-averaged ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    assert_eq!(x.len(), y.len(), "series lengths differ");
    let pairs: Vec<(f64, f64)> = ranks(x).into_iter().zip(ranks(y)).collect();
    crate::eval::pearson(&pairs).map_err(|_| AnalysisError::Degenerate)
}

//! Zone aggregation and scoring against DYFI ground truth.

mod metrics;

pub use metrics::{pearson, rmse};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::ZoneKind;
use crate::llm::Prediction;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{source_name}: missing column {column:?}")]
    Schema { source_name: String, column: &'static str },
    #[error("{source_name}, line {line}: {message}")]
    Row {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("{source_name}: zone {zone_id} appears on lines {first} and {second}")]
    Conflict {
        source_name: String,
        zone_id: String,
        first: u64,
        second: u64,
    },
    #[error("zone {0} has no successful predictions")]
    EmptyZone(String),
    #[error("prediction for {sample_id} belongs to zone {found}, expected {expected}")]
    ForeignPrediction {
        sample_id: String,
        found: String,
        expected: String,
    },
    #[error("zip {0} has no county mapping")]
    Unmapped(String),
    #[error("metric needs at least {0} pair(s)")]
    TooFew(usize),
    #[error("correlation undefined: {0} series has zero variance")]
    ZeroVariance(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub zone_id: String,
    /// Community decimal intensity.
    pub mean_mmi: f64,
    pub response_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneScore {
    pub zone_id: String,
    pub kind: ZoneKind,
    pub mean_pred: f64,
    pub n_effective: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

/// How zip scores combine into a county score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountyWeighting {
    /// Weight each zip mean by its number of successful predictions.
    #[default]
    SampleWeighted,
    /// Plain mean of zip means.
    Unweighted,
}

/// Reads a `zone_id,cdi,nresp` CSV.
pub fn load_dyfi(path: &Path) -> Result<Vec<GroundTruth>, EvalError> {
    let name = path.display().to_string();
    parse_dyfi(std::fs::File::open(path)?, &name)
}

pub fn parse_dyfi<R: std::io::Read>(r: R, source_name: &str) -> Result<Vec<GroundTruth>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |column: &'static str| {
        headers.iter().position(|h| h == column).ok_or_else(|| EvalError::Schema {
            source_name: source_name.to_string(),
            column,
        })
    };
    let (iz, ic, in_) = (col("zone_id")?, col("cdi")?, col("nresp")?);
    let mut seen: BTreeMap<String, u64> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |message: String| EvalError::Row {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let zone_id = rec.get(iz).unwrap_or("").to_string();
        if zone_id.is_empty() {
            return Err(row_err("empty zone_id".into()));
        }
        let cdi: f64 = rec.get(ic).unwrap_or("").parse().map_err(|_| row_err(format!("cdi {:?} is not a number", rec.get(ic).unwrap_or(""))))?;
        if !(1.0..=12.0).contains(&cdi) {
            return Err(row_err(format!("cdi {cdi} outside [1, 12]")));
        }
        let response_count: u64 = rec
            .get(in_)
            .unwrap_or("")
            .parse()
            .map_err(|_| row_err(format!("nresp {:?} is not a count", rec.get(in_).unwrap_or(""))))?;
        if let Some(first) = seen.insert(zone_id.clone(), line) {
            return Err(EvalError::Conflict {
                source_name: source_name.to_string(),
                zone_id,
                first,
                second: line,
            });
        }
        out.push(GroundTruth {
            zone_id,
            mean_mmi: cdi,
            response_count,
        });
    }
    Ok(out)
}

/// Mean predicted level over one zone's successful predictions.
pub fn aggregate_zone(preds: &[&Prediction], zone_id: &str, kind: ZoneKind) -> Result<ZoneScore, EvalError> {
    if let Some(p) = preds.iter().find(|p| p.zone_id != zone_id) {
        return Err(EvalError::ForeignPrediction {
            sample_id: p.sample_id.clone(),
            found: p.zone_id.clone(),
            expected: zone_id.to_string(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyZone(zone_id.to_string()));
    }
    let sum: u64 = preds.iter().map(|p| u64::from(p.mmi.value())).sum();
    Ok(ZoneScore {
        zone_id: zone_id.to_string(),
        kind,
        mean_pred: sum as f64 / preds.len() as f64,
        n_effective: preds.len(),
        truth: None,
    })
}

/// One score per zone that has predictions, sorted by zone id.
pub fn aggregate_all(preds: &[Prediction], kind: ZoneKind) -> Vec<ZoneScore> {
    let mut by_zone: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
    for p in preds {
        by_zone.entry(&p.zone_id).or_default().push(p);
    }
    by_zone
        .into_iter()
        .map(|(z, ps)| aggregate_zone(&ps, z, kind).expect("grouped by zone and non-empty"))
        .collect()
}

/// Attaches ground truth to matching scores.
pub fn attach_truth(scores: &mut [ZoneScore], truth: &[GroundTruth]) {
    let map: BTreeMap<&str, f64> = truth.iter().map(|t| (t.zone_id.as_str(), t.mean_mmi)).collect();
    for s in scores {
        s.truth = map.get(s.zone_id.as_str()).copied();
    }
}

/// Rolls zip scores up to counties. County truth is the response-weighted
/// mean of member-zip truth, over members that have truth.
pub fn county_rollup(
    zip_scores: &[ZoneScore],
    zip_to_county: &BTreeMap<String, String>,
    zip_truth: &[GroundTruth],
    weighting: CountyWeighting,
) -> Result<Vec<ZoneScore>, EvalError> {
    let truth: BTreeMap<&str, &GroundTruth> = zip_truth.iter().map(|t| (t.zone_id.as_str(), t)).collect();
    let mut groups: BTreeMap<&str, Vec<&ZoneScore>> = BTreeMap::new();
    for s in zip_scores {
        let county = zip_to_county.get(&s.zone_id).ok_or_else(|| EvalError::Unmapped(s.zone_id.clone()))?;
        groups.entry(county).or_default().push(s);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (county, members) in groups {
        let n_effective: usize = members.iter().map(|m| m.n_effective).sum();
        let mean_pred = match weighting {
            CountyWeighting::SampleWeighted => {
                members.iter().map(|m| m.mean_pred * m.n_effective as f64).sum::<f64>() / n_effective as f64
            }
            CountyWeighting::Unweighted => members.iter().map(|m| m.mean_pred).sum::<f64>() / members.len() as f64,
        };
        let with_truth: Vec<&GroundTruth> = members.iter().filter_map(|m| truth.get(m.zone_id.as_str()).copied()).collect();
        let responses: u64 = with_truth.iter().map(|t| t.response_count).sum();
        let county_truth = match (with_truth.is_empty(), responses) {
            (true, _) => None,
            // all members report zero responses: fall back to a plain mean
            (false, 0) => Some(with_truth.iter().map(|t| t.mean_mmi).sum::<f64>() / with_truth.len() as f64),
            (false, r) => Some(with_truth.iter().map(|t| t.mean_mmi * t.response_count as f64).sum::<f64>() / r as f64),
        };
        out.push(ZoneScore {
            zone_id: county.to_string(),
            kind: ZoneKind::County,
            mean_pred,
            n_effective,
            truth: county_truth,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Ground truth exists but no prediction succeeded.
    NoPredictions,
    /// Predictions exist but there is no ground truth.
    NoGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExcludedZone {
    pub kind: ZoneKind,
    pub zone_id: String,
    pub reason: ExclusionReason,
}

/// Metric values are absent when undefined (too few zones, constant series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub prompt_mode: String,
    pub county_weighting: CountyWeighting,
    pub rmse_zip: Option<f64>,
    pub corr_zip: Option<f64>,
    pub rmse_county: Option<f64>,
    pub corr_county: Option<f64>,
    pub n_zones_zip: usize,
    pub n_zones_county: usize,
    pub excluded_zones: Vec<ExcludedZone>,
    pub notes: Vec<String>,
    pub zip_scores: Vec<ZoneScore>,
    pub county_scores: Vec<ZoneScore>,
}

/// Splits scores into joined pairs and exclusions; the two together cover
/// every zone seen in either input.
fn join(scores: &[ZoneScore], truth: &BTreeMap<String, f64>, kind: ZoneKind, excluded: &mut Vec<ExcludedZone>) -> Vec<(f64, f64)> {
    let predicted: BTreeSet<&str> = scores.iter().map(|s| s.zone_id.as_str()).collect();
    let mut pairs = Vec::new();
    for s in scores {
        match truth.get(&s.zone_id) {
            Some(t) => pairs.push((s.mean_pred, *t)),
            None => excluded.push(ExcludedZone {
                kind,
                zone_id: s.zone_id.clone(),
                reason: ExclusionReason::NoGroundTruth,
            }),
        }
    }
    for z in truth.keys().filter(|z| !predicted.contains(z.as_str())) {
        excluded.push(ExcludedZone {
            kind,
            zone_id: z.clone(),
            reason: ExclusionReason::NoPredictions,
        });
    }
    pairs
}

fn metric(name: &str, r: Result<f64, EvalError>, notes: &mut Vec<String>) -> Option<f64> {
    r.map_err(|e| notes.push(format!("{name}: {e}"))).ok()
}

pub struct EvalInputs<'a> {
    pub model_id: &'a str,
    pub prompt_mode: &'a str,
    pub predictions: &'a [Prediction],
    pub zip_truth: &'a [GroundTruth],
    /// When present, county scores are produced and evaluated.
    pub zip_to_county: Option<&'a BTreeMap<String, String>>,
    pub weighting: CountyWeighting,
}

pub fn evaluate(inp: &EvalInputs<'_>) -> Result<EvalReport, EvalError> {
    let mut zip_scores = aggregate_all(inp.predictions, ZoneKind::Zip);
    attach_truth(&mut zip_scores, inp.zip_truth);
    let mut excluded = Vec::new();
    let mut notes = Vec::new();

    let zip_truth_map: BTreeMap<String, f64> = inp.zip_truth.iter().map(|t| (t.zone_id.clone(), t.mean_mmi)).collect();
    let zip_pairs = join(&zip_scores, &zip_truth_map, ZoneKind::Zip, &mut excluded);

    let (county_scores, county_pairs) = match inp.zip_to_county {
        Some(map) => {
            let cs = county_rollup(&zip_scores, map, inp.zip_truth, inp.weighting)?;
            let predicted: BTreeSet<&str> = cs.iter().map(|s| s.zone_id.as_str()).collect();
            let mut truth_map: BTreeMap<String, f64> = cs.iter().filter_map(|s| s.truth.map(|t| (s.zone_id.clone(), t))).collect();
            // counties with truth but no predicted zips still need listing
            for t in inp.zip_truth {
                if let Some(c) = map.get(&t.zone_id).filter(|c| !predicted.contains(c.as_str())) {
                    truth_map.insert(c.clone(), t.mean_mmi);
                }
            }
            let pairs = join(&cs, &truth_map, ZoneKind::County, &mut excluded);
            (cs, pairs)
        }
        None => (Vec::new(), Vec::new()),
    };
    excluded.sort();

    Ok(EvalReport {
        model_id: inp.model_id.to_string(),
        prompt_mode: inp.prompt_mode.to_string(),
        county_weighting: inp.weighting,
        rmse_zip: metric("rmse_zip", rmse(&zip_pairs), &mut notes),
        corr_zip: metric("corr_zip", pearson(&zip_pairs), &mut notes),
        rmse_county: inp.zip_to_county.and_then(|_| metric("rmse_county", rmse(&county_pairs), &mut notes)),
        corr_county: inp.zip_to_county.and_then(|_| metric("corr_county", pearson(&county_pairs), &mut notes)),
        n_zones_zip: zip_pairs.len(),
        n_zones_county: county_pairs.len(),
        excluded_zones: excluded,
        notes,
        zip_scores,
        county_scores,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    /// Aligned table: model, RMSE and correlation at zip then county level.
    pub fn to_text_table(&self) -> String {
        let header = ["Model", "Mode", "RMSE_Z", "Corr_Z", "RMSE_C", "Corr_C", "N_Z", "N_C"];
        let row = [
            self.model_id.clone(),
            self.prompt_mode.clone(),
            cell(self.rmse_zip),
            cell(self.corr_zip),
            cell(self.rmse_county),
            cell(self.corr_county),
            self.n_zones_zip.to_string(),
            self.n_zones_county.to_string(),
        ];
        let widths: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let mut out = String::new();
        for line in [header.map(str::to_string).to_vec(), row.to_vec()] {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if !self.excluded_zones.is_empty() {
            let _ = writeln!(out, "excluded zones: {}", self.excluded_zones.len());
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

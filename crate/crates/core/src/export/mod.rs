//! Output artifacts: choropleth GeoJSON and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::eval::ZoneScore;
use crate::fusion::Rejection;
use crate::geo::{GeoPoint, PolygonPart, ZonePolygon};
use crate::llm::SimFailure;

/// Property holding the zone id in exported features.
pub const ZONE_ID_PROPERTY: &str = "zone_id";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("zone {0} has a score but no geometry")]
    MissingGeometry(String),
    #[error("manifest accounting broken for {scope}: {message}")]
    Conservation { scope: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn part_coords(part: &PolygonPart) -> Value {
    Value::Array(
        part.rings
            .iter()
            .map(|ring| Value::Array(ring.iter().map(|c| json!([c.lon, c.lat])).collect()))
            .collect(),
    )
}

pub fn geometry_json(zone: &ZonePolygon) -> Value {
    match zone.parts.as_slice() {
        [single] => json!({"type": "Polygon", "coordinates": part_coords(single)}),
        parts => json!({
            "type": "MultiPolygon",
            "coordinates": parts.iter().map(part_coords).collect::<Vec<_>>(),
        }),
    }
}

/// FeatureCollection with one feature per score (in score order) plus the
/// epicenter as a point feature. Values are written unrounded.
pub fn export_choropleth(scores: &[ZoneScore], zones: &[ZonePolygon], epicenter: Option<GeoPoint>) -> Result<String, ExportError> {
    let by_id: BTreeMap<&str, &ZonePolygon> = zones.iter().map(|z| (z.zone_id.as_str(), z)).collect();
    let mut features = Vec::with_capacity(scores.len() + 1);
    for s in scores {
        let zone = by_id.get(s.zone_id.as_str()).ok_or_else(|| ExportError::MissingGeometry(s.zone_id.clone()))?;
        let mut props = Map::new();
        props.insert(ZONE_ID_PROPERTY.into(), json!(s.zone_id));
        props.insert("kind".into(), json!(s.kind));
        props.insert("mean_mmi_pred".into(), json!(s.mean_pred));
        props.insert("n_effective".into(), json!(s.n_effective));
        if let Some(t) = s.truth {
            props.insert("mmi_truth".into(), json!(t));
        }
        features.push(json!({"type": "Feature", "properties": props, "geometry": geometry_json(zone)}));
    }
    if let Some(p) = epicenter {
        features.push(json!({
            "type": "Feature",
            "properties": {"role": "epicenter"},
            "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
        }));
    }
    let mut text = serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": features}))?;
    text.push('\n');
    Ok(text)
}

/// Sample accounting for one zone (or the whole run).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub requested: usize,
    pub fused_ok: usize,
    pub fused_rejected: usize,
    pub predicted: usize,
    pub failed: usize,
}

impl StageCounts {
    pub fn add(&mut self, o: &StageCounts) {
        self.requested += o.requested;
        self.fused_ok += o.fused_ok;
        self.fused_rejected += o.fused_rejected;
        self.predicted += o.predicted;
        self.failed += o.failed;
    }

    pub fn check(&self) -> Result<(), String> {
        if self.requested != self.fused_ok + self.fused_rejected {
            return Err(format!(
                "requested {} != fused_ok {} + fused_rejected {}",
                self.requested, self.fused_ok, self.fused_rejected
            ));
        }
        if self.fused_ok != self.predicted + self.failed {
            return Err(format!("fused_ok {} != predicted {} + failed {}", self.fused_ok, self.predicted, self.failed));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    /// What stopped a failed run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// SHA-256 of the resolved configuration JSON.
    pub config_digest: String,
    pub seed: u64,
    pub model_id: String,
    pub temperature: f64,
    pub prompt_mode: String,
    pub prompt: Value,
    pub county_weighting: String,
    pub counts: BTreeMap<String, StageCounts>,
    pub totals: StageCounts,
    pub rejection_reasons: BTreeMap<String, usize>,
    pub failure_reasons: BTreeMap<String, usize>,
    pub rejected_samples: Vec<Rejection>,
    pub failed_samples: Vec<SimFailure>,
    /// Zone ids whose predictions enter aggregation.
    pub aggregated_zones: Vec<String>,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub software_version: String,
}

/// Per-zone counts from the raw stage outputs.
pub fn tally(
    requested: &BTreeMap<String, usize>,
    fused: &BTreeMap<String, usize>,
    rejected: &[Rejection],
    predicted: &BTreeMap<String, usize>,
    failed: &[SimFailure],
) -> BTreeMap<String, StageCounts> {
    let mut out: BTreeMap<String, StageCounts> = requested
        .iter()
        .map(|(z, n)| {
            (
                z.clone(),
                StageCounts {
                    requested: *n,
                    ..Default::default()
                },
            )
        })
        .collect();
    for (z, n) in fused {
        out.entry(z.clone()).or_default().fused_ok += n;
    }
    for r in rejected {
        out.entry(r.zone_id.clone()).or_default().fused_rejected += 1;
    }
    for (z, n) in predicted {
        out.entry(z.clone()).or_default().predicted += n;
    }
    for f in failed {
        out.entry(f.zone_id.clone()).or_default().failed += 1;
    }
    out
}

impl RunManifest {
    /// Recomputes totals and checks every conservation identity.
    pub fn check_conservation(&self) -> Result<(), ExportError> {
        let fail = |scope: &str, message: String| ExportError::Conservation {
            scope: scope.to_string(),
            message,
        };
        let mut sum = StageCounts::default();
        for (zone, c) in &self.counts {
            c.check().map_err(|m| fail(zone, m))?;
            sum.add(c);
        }
        if sum != self.totals {
            return Err(fail("totals", format!("{:?} != sum of zones {sum:?}", self.totals)));
        }
        self.totals.check().map_err(|m| fail("totals", m))?;
        let rejected: usize = self.rejection_reasons.values().sum();
        if rejected != self.totals.fused_rejected || rejected != self.rejected_samples.len() {
            return Err(fail("rejections", format!("{rejected} by reason, {} listed, {} counted", self.rejected_samples.len(), self.totals.fused_rejected)));
        }
        let failed: usize = self.failure_reasons.values().sum();
        if failed != self.totals.failed || failed != self.failed_samples.len() {
            return Err(fail("failures", format!("{failed} by reason, {} listed, {} counted", self.failed_samples.len(), self.totals.failed)));
        }
        for z in &self.aggregated_zones {
            if self.counts.get(z).is_none_or(|c| c.predicted == 0) {
                return Err(fail(z, "aggregated without any prediction".into()));
            }
        }
        Ok(())
    }

    /// Checks conservation, then writes atomically.
    pub fn write(&self, path: &Path) -> Result<(), ExportError> {
        self.check_conservation()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::fsutil::write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

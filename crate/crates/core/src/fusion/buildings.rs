//! Building footprints and neighbourhood summaries.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BuildingSummary, FusionError};
use crate::geo::{haversine_km, GeoPoint, EARTH_RADIUS_KM};

/// Key used in `type_distribution` for buildings with no type tag.
pub const UNSPECIFIED_TYPE: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, rename = "type")]
    pub building_type: Option<String>,
    #[serde(default)]
    pub height_m: Option<f64>,
    #[serde(default)]
    pub material: Option<String>,
}

impl BuildingRecord {
    fn centroid(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// Loads building centroids from CSV (`lat,lon,type,height_m,material`)
/// or GeoJSON (Point features, or Polygon features reduced to their area
/// centroid; tags read from `building`/`type`, `height`/`height_m`,
/// `building:material`/`material`).
pub fn load_buildings(path: &Path) -> Result<Vec<BuildingRecord>, FusionError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let err = |message: String| FusionError::Input {
        source_name: path.display().to_string(),
        message,
    };
    let records = if ext == "geojson" || ext == "json" {
        let text = std::fs::read_to_string(path)?;
        parse_buildings_geojson(&text).map_err(err)?
    } else {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let mut out = Vec::new();
        for (i, row) in rdr.deserialize::<BuildingRecord>().enumerate() {
            let mut rec = row.map_err(|e| err(format!("row {}: {e}", i + 1)))?;
            rec.building_type = rec.building_type.filter(|s| !s.is_empty());
            rec.material = rec.material.filter(|s| !s.is_empty());
            out.push(rec);
        }
        out
    };
    for (i, r) in records.iter().enumerate() {
        if GeoPoint::new(r.lat, r.lon).is_err() {
            return Err(err(format!("building {i}: invalid centroid")));
        }
        if r.height_m.is_some_and(|h| !(h.is_finite() && h >= 0.0)) {
            return Err(err(format!("building {i}: invalid height")));
        }
    }
    Ok(records)
}

fn parse_buildings_geojson(text: &str) -> Result<Vec<BuildingRecord>, String> {
    let root: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or("not a FeatureCollection")?;
    let tag = |props: Option<&serde_json::Map<String, Value>>, keys: &[&str]| -> Option<String> {
        let props = props?;
        keys.iter().find_map(|k| match props.get(*k) {
            Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
            _ => None,
        })
    };
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let props = f.get("properties").and_then(Value::as_object);
            let geom = f.get("geometry").ok_or(format!("feature {i}: no geometry"))?;
            let coords = geom.get("coordinates").ok_or(format!("feature {i}: no coordinates"))?;
            let (lon, lat) = match geom.get("type").and_then(Value::as_str) {
                Some("Point") => (
                    coords[0].as_f64().ok_or(format!("feature {i}: bad point"))?,
                    coords[1].as_f64().ok_or(format!("feature {i}: bad point"))?,
                ),
                Some("Polygon") => ring_centroid(&coords[0]).ok_or(format!("feature {i}: bad polygon"))?,
                other => return Err(format!("feature {i}: unsupported geometry {other:?}")),
            };
            let height_m = props.and_then(|p| {
                ["height_m", "height"].iter().find_map(|k| match p.get(*k) {
                    Some(Value::Number(n)) => n.as_f64(),
                    Some(Value::String(s)) => s.trim_end_matches(" m").trim().parse().ok(),
                    _ => None,
                })
            });
            Ok(BuildingRecord {
                lat,
                lon,
                building_type: tag(props, &["type", "building"]),
                height_m,
                material: tag(props, &["material", "building:material"]),
            })
        })
        .collect()
}

fn ring_centroid(ring: &Value) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = ring
        .as_array()?
        .iter()
        .map(|p| Some((p.get(0)?.as_f64()?, p.get(1)?.as_f64()?)))
        .collect::<Option<_>>()?;
    if pts.len() < 3 {
        return None;
    }
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in pts.windows(2) {
        let cross = w[0].0 * w[1].1 - w[1].0 * w[0].1;
        a += cross;
        cx += (w[0].0 + w[1].0) * cross;
        cy += (w[0].1 + w[1].1) * cross;
    }
    if a == 0.0 {
        let n = pts.len() as f64;
        return Some((pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n));
    }
    Some((cx / (3.0 * a), cy / (3.0 * a)))
}

/// Buildings sorted by latitude so a radius query scans only a band.
#[derive(Debug, Clone, Default)]
pub struct BuildingIndex {
    records: Vec<BuildingRecord>,
}

impl BuildingIndex {
    pub fn new(mut records: Vec<BuildingRecord>) -> Self {
        records.sort_by(|a, b| a.lat.total_cmp(&b.lat));
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn within(&self, p: GeoPoint, radius_m: f64) -> impl Iterator<Item = &BuildingRecord> {
        // great-circle distance is at least R * |dlat|
        let band = (radius_m / 1000.0 / EARTH_RADIUS_KM).to_degrees() * (1.0 + 1e-9) + 1e-12;
        let lo = self.records.partition_point(|r| r.lat < p.lat - band);
        let hi = self.records.partition_point(|r| r.lat <= p.lat + band);
        self.records[lo..hi]
            .iter()
            .filter(move |r| haversine_km(p, r.centroid()) * 1000.0 <= radius_m)
    }

    pub fn summarize(&self, p: GeoPoint, radius_m: f64) -> BuildingSummary {
        aggregate(self.within(p, radius_m))
    }
}

/// Summary of buildings whose centroid lies within `radius_m` metres of `p`.
pub fn summarize_buildings(buildings: &[BuildingRecord], p: GeoPoint, radius_m: f64) -> BuildingSummary {
    aggregate(
        buildings
            .iter()
            .filter(|r| haversine_km(p, r.centroid()) * 1000.0 <= radius_m),
    )
}

fn aggregate<'a>(records: impl Iterator<Item = &'a BuildingRecord>) -> BuildingSummary {
    let mut count = 0usize;
    let mut types: BTreeMap<String, usize> = BTreeMap::new();
    let mut materials: BTreeMap<String, usize> = BTreeMap::new();
    let mut heights = Vec::new();
    for r in records {
        count += 1;
        let t = r.building_type.as_deref().unwrap_or(UNSPECIFIED_TYPE);
        *types.entry(t.to_string()).or_default() += 1;
        if let Some(m) = &r.material {
            *materials.entry(m.clone()).or_default() += 1;
        }
        if let Some(h) = r.height_m {
            heights.push(h);
        }
    }
    // sorted so the mean does not depend on input order
    heights.sort_by(f64::total_cmp);
    let (height_min, height_max, height_avg) = if heights.is_empty() {
        (None, None, None)
    } else {
        (
            heights.first().copied(),
            heights.last().copied(),
            Some(heights.iter().sum::<f64>() / heights.len() as f64),
        )
    };
    BuildingSummary {
        count,
        type_distribution: types,
        height_min,
        height_max,
        height_avg,
        material_prevalence: materials
            .into_iter()
            .map(|(m, n)| (m, n as f64 / count as f64))
            .collect(),
    }
}

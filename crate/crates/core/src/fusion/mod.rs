//! Per-sample feature fusion: earthquake source, site conditions, location,
//! nearby buildings, block-group socioeconomics and street imagery.

mod buildings;
mod census;
mod event;
mod imagery;
mod raster;

pub use buildings::{load_buildings, summarize_buildings, BuildingIndex, BuildingRecord, UNSPECIFIED_TYPE};
pub use census::{join_cbg, AcsTable, Place, PlaceTable, ACS_COLUMNS};
pub use event::EarthquakeParams;
pub use imagery::{check_decodable, HttpStreetView, ImageProvider, LocalDirectory, NoImagery};
pub use raster::{sample_vs30, CellLookup, RasterGrid, VS30_MAX, VS30_MIN};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::geo::{haversine_km, GeoPoint, SampledPoint, ZonePolygon};

pub const DEFAULT_BUILDING_RADIUS_M: f64 = 100.0;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("{source_name}: {message}")]
    Input { source_name: String, message: String },
    #[error("point ({lat}, {lon}) is outside the raster extent")]
    Coverage { lat: f64, lon: f64 },
    #[error("raster has no data at ({lat}, {lon})")]
    NoData { lat: f64, lon: f64 },
    #[error("{field} value {value} is out of range")]
    InvalidValue { field: &'static str, value: f64 },
    #[error("no block group contains ({lat}, {lon})")]
    NoContainingCbg { lat: f64, lon: f64 },
    #[error("no ACS row for block group {geoid}")]
    MissingAcsRow { geoid: String },
    #[error("ACS row for block group {geoid} is unusable: {message}")]
    InvalidAcsRow { geoid: String, message: String },
    #[error("zone {0} has no place mapping")]
    UnmappedZone(String),
    #[error("{path}: not a decodable image: {message}")]
    Undecodable { path: PathBuf, message: String },
    #[error("image transport failure: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteConditions {
    /// Time-averaged shear-wave velocity in the top 30 m, m/s.
    pub vs30: f64,
}

impl SiteConditions {
    pub fn new(vs30: f64) -> Result<Self, FusionError> {
        if vs30.is_finite() && (VS30_MIN..=VS30_MAX).contains(&vs30) {
            Ok(Self { vs30 })
        } else {
            Err(FusionError::InvalidValue { field: "vs30", value: vs30 })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationMeta {
    pub state: String,
    pub city: String,
    pub zipcode: String,
    pub county: String,
    pub coords: GeoPoint,
    pub epicentral_distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildingSummary {
    pub count: usize,
    pub type_distribution: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_avg: Option<f64>,
    /// Share of the counted buildings carrying each material tag.
    pub material_prevalence: BTreeMap<String, f64>,
}

impl BuildingSummary {
    pub fn check(&self) -> Result<(), String> {
        if self.type_distribution.values().sum::<usize>() != self.count {
            return Err("type distribution does not sum to count".into());
        }
        if self.material_prevalence.values().any(|f| !(0.0..=1.0).contains(f)) {
            return Err("material fraction outside [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Socioeconomics {
    pub population: f64,
    /// persons per km²
    pub population_density: f64,
    pub urban_pct: f64,
    pub over65_pct: f64,
    /// USD per year
    pub median_income: f64,
    pub bachelor_pct: f64,
}

impl Socioeconomics {
    pub fn validated(self) -> Result<Self, String> {
        for (name, v) in [
            ("urban_pct", self.urban_pct),
            ("over65_pct", self.over65_pct),
            ("bachelor_pct", self.bachelor_pct),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 100]"));
            }
        }
        for (name, v) in [
            ("population", self.population),
            ("population_density", self.population_density),
            ("median_income", self.median_income),
        ] {
            if !(v >= 0.0) {
                return Err(format!("{name} = {v} is negative"));
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageStatus {
    Available,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetImage {
    pub status: ImageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

impl StreetImage {
    pub fn available(path: PathBuf) -> Self {
        Self {
            status: ImageStatus::Available,
            image_ref: Some(path),
            heading: None,
        }
    }

    pub fn missing() -> Self {
        Self {
            status: ImageStatus::Missing,
            image_ref: None,
            heading: None,
        }
    }

    pub fn path(&self) -> Option<&std::path::Path> {
        match self.status {
            ImageStatus::Available => self.image_ref.as_deref(),
            ImageStatus::Missing => None,
        }
    }
}

/// Everything known about one sampled location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFeatures {
    pub sample_id: String,
    pub zone_id: String,
    pub earthquake: EarthquakeParams,
    pub site: SiteConditions,
    pub location: LocationMeta,
    pub buildings: BuildingSummary,
    pub socioeconomics: Socioeconomics,
    pub image: StreetImage,
}

impl SampleFeatures {
    pub fn check(&self) -> Result<(), String> {
        SiteConditions::new(self.site.vs30).map_err(|e| e.to_string())?;
        self.buildings.check()?;
        self.socioeconomics.clone().validated()?;
        let d = haversine_km(self.location.coords, self.earthquake.epicenter);
        if (d - self.location.epicentral_distance_km).abs() > 1e-6 {
            return Err(format!(
                "stored epicentral distance {} differs from recomputed {d}",
                self.location.epicentral_distance_km
            ));
        }
        if self.image.status == ImageStatus::Available && self.image.image_ref.is_none() {
            return Err("available image without a reference".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Vs30Nodata,
    Vs30OutOfExtent,
    Vs30OutOfRange,
    CbgNoMatch,
    AcsMissingRow,
    AcsInvalid,
    LocationUnmapped,
    ImageUndecodable,
    ImageTransport,
    InvalidFeatures,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::Vs30Nodata => "vs30_nodata",
            RejectReason::Vs30OutOfExtent => "vs30_out_of_extent",
            RejectReason::Vs30OutOfRange => "vs30_out_of_range",
            RejectReason::CbgNoMatch => "cbg_no_match",
            RejectReason::AcsMissingRow => "acs_missing_row",
            RejectReason::AcsInvalid => "acs_invalid",
            RejectReason::LocationUnmapped => "location_unmapped",
            RejectReason::ImageUndecodable => "image_undecodable",
            RejectReason::ImageTransport => "image_transport",
            RejectReason::InvalidFeatures => "invalid_features",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub zone_id: String,
    pub sample_id: String,
    pub reason: RejectReason,
    pub detail: String,
}

/// Read-only data handles shared by every sample.
pub struct FusionSources {
    pub event: EarthquakeParams,
    pub vs30: RasterGrid,
    pub buildings: BuildingIndex,
    pub building_radius_m: f64,
    pub cbg_zones: Vec<ZonePolygon>,
    pub acs: AcsTable,
    pub places: PlaceTable,
    pub images: Box<dyn ImageProvider>,
}

/// Builds the feature bundle for one point. Any hard sub-failure becomes a
/// [`Rejection`] rather than an error so the run can continue.
pub fn assemble_features(point: &SampledPoint, src: &FusionSources) -> Result<SampleFeatures, Rejection> {
    let reject = |reason: RejectReason, err: &dyn std::fmt::Display| Rejection {
        zone_id: point.zone_id.clone(),
        sample_id: point.sample_id.clone(),
        reason,
        detail: err.to_string(),
    };
    let p = GeoPoint::new(point.lat, point.lon).map_err(|e| reject(RejectReason::InvalidFeatures, &e))?;

    let site = sample_vs30(&src.vs30, p).map_err(|e| {
        let reason = match e {
            FusionError::NoData { .. } => RejectReason::Vs30Nodata,
            FusionError::Coverage { .. } => RejectReason::Vs30OutOfExtent,
            _ => RejectReason::Vs30OutOfRange,
        };
        reject(reason, &e)
    })?;
    let socioeconomics = join_cbg(p, &src.cbg_zones, &src.acs).map_err(|e| {
        let reason = match e {
            FusionError::NoContainingCbg { .. } => RejectReason::CbgNoMatch,
            FusionError::MissingAcsRow { .. } => RejectReason::AcsMissingRow,
            _ => RejectReason::AcsInvalid,
        };
        reject(reason, &e)
    })?;
    let place = src
        .places
        .get(&point.zone_id)
        .ok_or_else(|| reject(RejectReason::LocationUnmapped, &FusionError::UnmappedZone(point.zone_id.clone())))?;
    let image = src.images.fetch(&point.sample_id, p).map_err(|e| {
        let reason = match e {
            FusionError::Undecodable { .. } => RejectReason::ImageUndecodable,
            _ => RejectReason::ImageTransport,
        };
        reject(reason, &e)
    })?;

    let features = SampleFeatures {
        sample_id: point.sample_id.clone(),
        zone_id: point.zone_id.clone(),
        earthquake: src.event.clone(),
        site,
        location: LocationMeta {
            state: place.state.clone(),
            city: place.city.clone(),
            zipcode: point.zone_id.clone(),
            county: place.county.clone(),
            coords: p,
            epicentral_distance_km: haversine_km(p, src.event.epicenter),
        },
        buildings: src.buildings.summarize(p, src.building_radius_m),
        socioeconomics,
        image,
    };
    features.check().map_err(|e| reject(RejectReason::InvalidFeatures, &e))?;
    Ok(features)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionCounts {
    pub requested: usize,
    pub fused_ok: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionOutput {
    pub features: Vec<SampleFeatures>,
    pub rejected: Vec<Rejection>,
    pub counts: BTreeMap<String, FusionCounts>,
}

/// Fuses every point. Output order follows the input order.
pub fn fuse_all(points: &[SampledPoint], src: &FusionSources, exec: Execution) -> FusionOutput {
    let results = exec.map(points, |_, p| assemble_features(p, src));
    let mut out = FusionOutput::default();
    for (p, r) in points.iter().zip(results) {
        let c = out.counts.entry(p.zone_id.clone()).or_default();
        c.requested += 1;
        match r {
            Ok(f) => {
                c.fused_ok += 1;
                out.features.push(f);
            }
            Err(rej) => {
                c.rejected += 1;
                out.rejected.push(rej);
            }
        }
    }
    out
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<R: BufRead, T: serde::de::DeserializeOwned>(r: R) -> Result<Vec<T>, FusionError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FusionError::Input {
            source_name: format!("line {}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

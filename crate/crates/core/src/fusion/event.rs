use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::geo::GeoPoint;

/// Source parameters of the scenario earthquake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarthquakeParams {
    pub event_id: String,
    pub place: String,
    pub epicenter: GeoPoint,
    /// Moment magnitude.
    pub magnitude: f64,
    pub depth_km: f64,
    pub event_date: NaiveDate,
}

/// On-disk event file: `{id, place, lat, lon, mag, depth, date}`.
#[derive(Debug, Deserialize)]
struct EventFile {
    id: String,
    place: String,
    lat: f64,
    lon: f64,
    mag: f64,
    depth: f64,
    date: NaiveDate,
}

impl EarthquakeParams {
    pub fn validated(self) -> Result<Self, FusionError> {
        if !(self.magnitude.is_finite() && (0.0..=10.0).contains(&self.magnitude)) {
            return Err(FusionError::InvalidValue {
                field: "magnitude",
                value: self.magnitude,
            });
        }
        if !(self.depth_km.is_finite() && self.depth_km >= 0.0) {
            return Err(FusionError::InvalidValue {
                field: "depth",
                value: self.depth_km,
            });
        }
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|message| FusionError::Input {
            source_name: path.display().to_string(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: EventFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let epicenter = GeoPoint::new(raw.lat, raw.lon).map_err(|e| e.to_string())?;
        EarthquakeParams {
            event_id: raw.id,
            place: raw.place,
            epicenter,
            magnitude: raw.mag,
            depth_km: raw.depth,
            event_date: raw.date,
        }
        .validated()
        .map_err(|e| e.to_string())
    }
}

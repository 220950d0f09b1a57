//! Zone geometry, point containment, great-circle distance and seeded
//! in-polygon sampling.

mod polygon;
mod sample;
mod zones;

#[cfg(test)]
pub(crate) use polygon::tests as test_shapes;

pub use polygon::{point_in_polygon, BBox, Coord, PolygonPart, ZoneKind, ZonePolygon};
pub use sample::{
    sample_all, sample_id, sample_uniform, write_points_csv, write_points_jsonl, SamplePlan, SampledPoint,
};
pub use zones::{default_id_property, load_zones, parse_zones, DEFAULT_COUNTY_ID_PROPERTY, DEFAULT_ZIP_ID_PROPERTY};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius (IUGG) used for all great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat} lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("malformed GeoJSON at line {line}, column {column}: {message}\n  | {context}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
        context: String,
    },
    #[error("feature {feature_index}: {message}")]
    Schema { feature_index: usize, message: String },
    #[error("duplicate zone id {zone_id:?} (features {first} and {second})")]
    DuplicateZone {
        zone_id: String,
        first: usize,
        second: usize,
    },
    #[error("zone {zone_id:?}: {message}")]
    InvalidGeometry { zone_id: String, message: String },
    #[error("zone {zone_id:?}: sampling failed ({reason}); acceptance rate {acceptance_rate:.3e}")]
    Sampling {
        zone_id: String,
        reason: String,
        acceptance_rate: f64,
    },
    #[error("invalid sample plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon)
        {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinate { lat, lon })
        }
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cosine_law_km(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_KM * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn identity_is_zero() {
        let p = GeoPoint::new(35.77, -117.6).unwrap();
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn pole_to_pole() {
        let n = GeoPoint::new(90.0, 0.0).unwrap();
        let s = GeoPoint::new(-90.0, 0.0).unwrap();
        let d = haversine_km(n, s);
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((d - 20015.1).abs() < 0.1);
    }

    #[test]
    fn ridgecrest_to_san_diego() {
        // USGS epicentre of the 2019-07-06 M7.1 event and a point in San Diego.
        let epi = GeoPoint::new(35.7695, -117.5993).unwrap();
        let sd = GeoPoint::new(32.7460, -117.1300).unwrap();
        let d = haversine_km(epi, sd);
        assert!((d - cosine_law_km(epi, sd)).abs() < 1e-6);
        assert!((d - 339.0).abs() < 2.0, "distance {d}");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, f64::NAN).is_err());
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":0,"lon":200}"#).is_err());
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap())
    }

    proptest! {
        #[test]
        fn symmetric_and_triangle(a in point(), b in point(), c in point()) {
            let ab = haversine_km(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, haversine_km(b, a));
            prop_assert!(haversine_km(a, c) <= ab + haversine_km(b, c) + 1e-9);
        }
    }
}

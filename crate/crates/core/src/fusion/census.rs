//! Census block group join, ACS indicator table and the zip place table.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FusionError, Socioeconomics};
use crate::geo::{point_in_polygon, GeoPoint, ZonePolygon};

pub const ACS_COLUMNS: [&str; 7] = [
    "GEOID",
    "population",
    "population_density",
    "urban_pct",
    "over65_pct",
    "median_income",
    "bachelor_pct",
];

/// ACS indicators by block-group GEOID. Rows with blank or out-of-range
/// cells are kept as errors so that only samples joining to them are
/// rejected.
#[derive(Debug, Clone, Default)]
pub struct AcsTable {
    rows: HashMap<String, Result<Socioeconomics, String>>,
}

impl AcsTable {
    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let rdr = csv::Reader::from_path(path).map_err(|e| FusionError::Input {
            source_name: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_reader(rdr).map_err(|message| FusionError::Input {
            source_name: path.display().to_string(),
            message,
        })
    }

    pub fn from_reader<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Self, String> {
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let idx: Vec<usize> = ACS_COLUMNS
            .iter()
            .map(|c| headers.iter().position(|h| h == *c).ok_or(format!("missing column {c}")))
            .collect::<Result<_, _>>()?;
        let mut rows = HashMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| format!("row {}: {e}", n + 1))?;
            let geoid = rec.get(idx[0]).unwrap_or("").to_string();
            if geoid.is_empty() {
                return Err(format!("row {}: empty GEOID", n + 1));
            }
            let num = |i: usize| -> Result<f64, String> {
                let raw = rec.get(idx[i]).unwrap_or("").trim();
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("{} is {raw:?}", ACS_COLUMNS[i]))
            };
            let row = (|| {
                Socioeconomics {
                    population: num(1)?,
                    population_density: num(2)?,
                    urban_pct: num(3)?,
                    over65_pct: num(4)?,
                    median_income: num(5)?,
                    bachelor_pct: num(6)?,
                }
                .validated()
            })();
            if rows.insert(geoid.clone(), row).is_some() {
                return Err(format!("row {}: duplicate GEOID {geoid}", n + 1));
            }
        }
        Ok(Self { rows })
    }

    pub fn insert(&mut self, geoid: impl Into<String>, row: Socioeconomics) {
        self.rows.insert(geoid.into(), Ok(row));
    }

    pub fn get(&self, geoid: &str) -> Option<&Result<Socioeconomics, String>> {
        self.rows.get(geoid)
    }
}

/// Socioeconomic indicators of the block group containing `p`. When several
/// block groups contain the point (shared boundary) the lowest GEOID wins.
pub fn join_cbg(p: GeoPoint, cbg_zones: &[ZonePolygon], acs: &AcsTable) -> Result<Socioeconomics, FusionError> {
    let geoid = cbg_zones
        .iter()
        .filter(|z| point_in_polygon(p, z))
        .map(|z| z.zone_id.as_str())
        .min()
        .ok_or(FusionError::NoContainingCbg { lat: p.lat, lon: p.lon })?;
    match acs.get(geoid) {
        None => Err(FusionError::MissingAcsRow { geoid: geoid.to_string() }),
        Some(Err(msg)) => Err(FusionError::InvalidAcsRow {
            geoid: geoid.to_string(),
            message: msg.clone(),
        }),
        Some(Ok(row)) => Ok(row.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    pub county: String,
    #[serde(default)]
    pub city: String,
    #[serde(default)]
    pub state: String,
}

#[derive(Deserialize)]
struct PlaceRow {
    zip: String,
    county: String,
    #[serde(default)]
    city: String,
    #[serde(default)]
    state: String,
}

/// Zip code to county (and city/state) mapping, CSV columns
/// `zip,county[,city,state]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaceTable {
    places: BTreeMap<String, Place>,
}

impl PlaceTable {
    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let err = |message: String| FusionError::Input {
            source_name: path.display().to_string(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let mut places = BTreeMap::new();
        for (n, row) in rdr.deserialize::<PlaceRow>().enumerate() {
            let row = row.map_err(|e| err(format!("row {}: {e}", n + 1)))?;
            if row.zip.is_empty() || row.county.is_empty() {
                return Err(err(format!("row {}: empty zip or county", n + 1)));
            }
            let place = Place {
                county: row.county,
                city: row.city,
                state: row.state,
            };
            if places.insert(row.zip.clone(), place).is_some() {
                return Err(err(format!("row {}: duplicate zip {}", n + 1, row.zip)));
            }
        }
        Ok(Self { places })
    }

    pub fn insert(&mut self, zip: impl Into<String>, place: Place) {
        self.places.insert(zip.into(), place);
    }

    pub fn get(&self, zip: &str) -> Option<&Place> {
        self.places.get(zip)
    }

    pub fn county_of(&self, zip: &str) -> Option<&str> {
        self.places.get(zip).map(|p| p.county.as_str())
    }

    pub fn zip_to_county(&self) -> BTreeMap<String, String> {
        self.places.iter().map(|(z, p)| (z.clone(), p.county.clone())).collect()
    }
}

//! Synthetic radial scenarios for demos, tests and benchmarks.
//!
//! Square zip zones sit in a row east of the epicenter at increasing
//! distance. Every input file the pipeline needs is generated, and a few
//! faults can be switched on: a VS30 nodata hole, missing and corrupt
//! street images, and garbled model responses.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::geo::{Coord, GeoError, PolygonPart, ZoneKind, ZonePolygon};

pub const EPICENTER_LAT: f64 = 33.0;
pub const EPICENTER_LON: f64 = -117.0;
pub const STATE: &str = "California";
/// City names used for the zones, alternating by county.
pub const CITIES: [&str; 2] = ["Seaview", "Dunmore"];
const COUNTIES: [&str; 2] = ["Alpha", "Bravo"];
const KM_PER_DEG_LAT: f64 = 111.195;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialScenario {
    pub n_zones: usize,
    pub points_per_zone: usize,
    pub seed: u64,
    pub magnitude: f64,
    /// Distance of the first zone center from the epicenter.
    pub first_km: f64,
    pub spacing_km: f64,
    /// Zone half-width.
    pub half_km: f64,
    /// Zone whose western half has no VS30 data.
    pub nodata_zone: Option<usize>,
    /// Write a street image for every other sample.
    pub images: bool,
    /// Sample whose image file is corrupt.
    pub corrupt_image: Option<String>,
    pub garble_modulus: Option<u64>,
    pub redact_location: bool,
    pub parallel: bool,
}

impl Default for RadialScenario {
    fn default() -> Self {
        Self {
            n_zones: 10,
            points_per_zone: 50,
            seed: 7,
            magnitude: 7.0,
            first_km: 15.0,
            spacing_km: 25.0,
            half_km: 2.0,
            nodata_zone: None,
            images: false,
            corrupt_image: None,
            garble_modulus: None,
            redact_location: false,
            parallel: true,
        }
    }
}

pub fn zone_id(i: usize) -> String {
    format!("{}", 91001 + i)
}

fn geoid(i: usize) -> String {
    format!("06073{:06}{}", 100 + i, 1)
}

fn km_per_deg_lon() -> f64 {
    KM_PER_DEG_LAT * EPICENTER_LAT.to_radians().cos()
}

fn square_ring(c_lat: f64, c_lon: f64, half_lat: f64, half_lon: f64) -> Vec<Coord> {
    let (s, n, w, e) = (c_lat - half_lat, c_lat + half_lat, c_lon - half_lon, c_lon + half_lon);
    [(w, s), (e, s), (e, n), (w, n), (w, s)].into_iter().map(|(lon, lat)| Coord { lon, lat }).collect()
}

fn polygon_feature(props: Value, ring: &[Coord]) -> Value {
    let coords: Vec<[f64; 2]> = ring.iter().map(|c| [c.lon, c.lat]).collect();
    json!({"type": "Feature", "properties": props, "geometry": {"type": "Polygon", "coordinates": [coords]}})
}

fn collection(features: Vec<Value>) -> String {
    serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": features})).expect("json")
}

/// An L-shaped zone: a 2 x 2 degree square with its north-east quadrant
/// removed. Area 3 square degrees.
pub fn l_shaped_zone() -> Result<ZonePolygon, GeoError> {
    let ring: Vec<Coord> = [(0.0, 0.0), (2.0, 0.0), (2.0, 1.0), (1.0, 1.0), (1.0, 2.0), (0.0, 2.0), (0.0, 0.0)]
        .into_iter()
        .map(|(lon, lat)| Coord { lon, lat })
        .collect();
    ZonePolygon::new("L", ZoneKind::Zip, vec![PolygonPart { rings: vec![ring] }])
}

impl RadialScenario {
    /// Center of zone `i` as (lat, lon).
    pub fn zone_center(&self, i: usize) -> (f64, f64) {
        let km = self.first_km + self.spacing_km * i as f64;
        (EPICENTER_LAT, EPICENTER_LON + km / km_per_deg_lon())
    }

    fn half_deg(&self) -> (f64, f64) {
        (self.half_km / KM_PER_DEG_LAT, self.half_km / km_per_deg_lon())
    }

    /// Writes all inputs and a `config.json` under `dir`, returning the
    /// config path. Outputs go to `dir/out`.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let (h_lat, h_lon) = self.half_deg();
        let rings: Vec<Vec<Coord>> = (0..self.n_zones)
            .map(|i| {
                let (lat, lon) = self.zone_center(i);
                square_ring(lat, lon, h_lat, h_lon)
            })
            .collect();

        let zones = rings.iter().enumerate().map(|(i, r)| polygon_feature(json!({"ZCTA5CE10": zone_id(i)}), r)).collect();
        std::fs::write(dir.join("zones.geojson"), collection(zones))?;
        let cbg = rings.iter().enumerate().map(|(i, r)| polygon_feature(json!({"GEOID": geoid(i)}), r)).collect();
        std::fs::write(dir.join("cbg.geojson"), collection(cbg))?;

        let event = json!({
            "id": "synthetic01", "place": "Synthetic Ridge", "lat": EPICENTER_LAT, "lon": EPICENTER_LON,
            "mag": self.magnitude, "depth": 8.0, "date": "2024-03-15"
        });
        std::fs::write(dir.join("event.json"), serde_json::to_string_pretty(&event)?)?;

        std::fs::write(dir.join("vs30.asc"), self.vs30_grid())?;
        std::fs::write(dir.join("buildings.csv"), self.buildings())?;

        let mut acs = String::from("GEOID,population,population_density,urban_pct,over65_pct,median_income,bachelor_pct\n");
        let mut places = String::from("zip,county,city,state\n");
        let mut dyfi = String::from("zone_id,cdi,nresp\n");
        for i in 0..self.n_zones {
            let f = i as f64;
            writeln!(acs, "{},{},{:.1},{:.1},{:.1},{},{:.1}", geoid(i), 1500 + 100 * i, 4000.0 - 300.0 * f, 95.0 - 5.0 * f, 12.0 + f, 60000 + 2500 * i, 40.0 - 2.0 * f).unwrap();
            let c = usize::from(i * 2 >= self.n_zones);
            writeln!(places, "{},{} County,{},{STATE}", zone_id(i), COUNTIES[c], CITIES[c]).unwrap();
            let km = self.first_km + self.spacing_km * f;
            let cdi = f64::from(crate::llm::attenuation_mmi(self.magnitude, km).value()) - 0.3 + 0.1 * (i % 3) as f64;
            writeln!(dyfi, "{},{:.1},{}", zone_id(i), cdi, 10 + 3 * i).unwrap();
        }
        std::fs::write(dir.join("acs.csv"), acs)?;
        std::fs::write(dir.join("places.csv"), places)?;
        std::fs::write(dir.join("dyfi.csv"), dyfi)?;

        if self.images {
            self.write_images(&dir.join("images"))?;
        }

        let mut cfg = json!({
            "event": "event.json",
            "zones": {"path": "zones.geojson", "kind": "zip"},
            "sample_plan": {"points_per_zone": self.points_per_zone, "seed": self.seed},
            "data_sources": {
                "vs30": "vs30.asc", "buildings": "buildings.csv", "cbg": "cbg.geojson",
                "acs": "acs.csv", "zip_county": "places.csv", "dyfi": "dyfi.csv"
            },
            "prompt": {"redact_location": self.redact_location},
            "model": {"model_id": "mock-attenuation", "endpoint": crate::llm::MOCK_ENDPOINT, "max_in_flight": 4},
            "output_dir": "out",
            "parallel": self.parallel
        });
        if self.images {
            cfg["data_sources"]["images"] = json!({"kind": "directory", "path": "images"});
        }
        if let Some(m) = self.garble_modulus {
            cfg["model"]["mock_garble_modulus"] = json!(m);
        }
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cfg)?)?;
        Ok(path)
    }

    /// ESRI ASCII grid covering every zone with a 1 km margin. VS30 falls
    /// from 760 to 260 m/s west to east.
    fn vs30_grid(&self) -> String {
        let cell = 0.01;
        let (h_lat, h_lon) = self.half_deg();
        let (_, last_lon) = self.zone_center(self.n_zones.saturating_sub(1));
        let (_, first_lon) = self.zone_center(0);
        let xll = ((first_lon - h_lon) / cell).floor() * cell - cell;
        let yll = ((EPICENTER_LAT - h_lat) / cell).floor() * cell - cell;
        let ncols = ((last_lon + h_lon - xll) / cell).ceil() as usize + 2;
        let nrows = ((EPICENTER_LAT + h_lat - yll) / cell).ceil() as usize + 2;
        let hole = self.nodata_zone.map(|z| {
            let (_, lon) = self.zone_center(z);
            (lon - h_lon - cell, lon)
        });
        let mut out = format!("ncols {ncols}\nnrows {nrows}\nxllcorner {xll}\nyllcorner {yll}\ncellsize {cell}\nNODATA_value -9999\n");
        for _ in 0..nrows {
            let row: Vec<String> = (0..ncols)
                .map(|c| {
                    let lon = xll + (c as f64 + 0.5) * cell;
                    if hole.is_some_and(|(w, e)| lon >= w && lon < e) {
                        "-9999".to_string()
                    } else {
                        format!("{:.0}", 760.0 - 500.0 * c as f64 / ncols as f64)
                    }
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// A 40 x 40 grid of buildings in every zone, roughly 100 m apart.
    fn buildings(&self) -> String {
        const TYPES: [&str; 4] = ["house", "apartments", "school", ""];
        const MATERIALS: [&str; 3] = ["wood", "brick", ""];
        let (h_lat, h_lon) = self.half_deg();
        let mut out = String::from("lat,lon,type,height_m,material\n");
        for z in 0..self.n_zones {
            let (c_lat, c_lon) = self.zone_center(z);
            for a in 0..40 {
                for b in 0..40 {
                    let lat = c_lat - h_lat + (a as f64 + 0.5) * 2.0 * h_lat / 40.0;
                    let lon = c_lon - h_lon + (b as f64 + 0.5) * 2.0 * h_lon / 40.0;
                    let k = a * 40 + b;
                    let height = if k % 5 == 0 { String::new() } else { format!("{:.1}", 4.0 + (k % 7) as f64 * 1.5) };
                    writeln!(out, "{lat:.6},{lon:.6},{},{height},{}", TYPES[k % 4], MATERIALS[k % 3]).unwrap();
                }
            }
        }
        out
    }

    fn write_images(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let img = image::RgbImage::from_fn(16, 16, |x, y| image::Rgb([(x * 16) as u8, (y * 16) as u8, 128]));
        let mut jpg = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut jpg), image::ImageFormat::Jpeg).map_err(std::io::Error::other)?;
        for z in 0..self.n_zones {
            for k in (0..self.points_per_zone).step_by(2) {
                std::fs::write(dir.join(format!("{}.jpg", crate::geo::sample_id(&zone_id(z), k))), &jpg)?;
            }
        }
        if let Some(id) = &self.corrupt_image {
            std::fs::write(dir.join(format!("{id}.jpg")), b"not an image")?;
        }
        Ok(())
    }
}

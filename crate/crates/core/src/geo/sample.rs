use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{point_in_polygon, GeoError, GeoPoint, ZonePolygon};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePlan {
    pub points_per_zone: usize,
    pub seed: u64,
    pub max_rejections_per_point: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            points_per_zone: 50,
            seed: 0,
            max_rejections_per_point: 10_000,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<(), GeoError> {
        if self.points_per_zone == 0 {
            return Err(GeoError::Plan("points_per_zone must be >= 1".into()));
        }
        if self.max_rejections_per_point == 0 {
            return Err(GeoError::Plan("max_rejections_per_point must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPoint {
    pub zone_id: String,
    pub sample_id: String,
    pub lat: f64,
    pub lon: f64,
}

impl SampledPoint {
    pub fn point(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

/// Stream for one zone: ChaCha8 keyed by the plan seed, with the zone's
/// ordinal selecting the stream. Zones can be sampled in any order.
fn zone_rng(seed: u64, zone_index: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(zone_index as u64);
    rng
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws `plan.points_per_zone` points uniformly (in planar lon/lat) from
/// inside `zone` by bbox rejection. Multipolygons first choose a part with
/// probability proportional to its planar area.
pub fn sample_uniform(zone: &ZonePolygon, plan: &SamplePlan, zone_index: usize) -> Result<Vec<GeoPoint>, GeoError> {
    plan.validate()?;
    let areas: Vec<f64> = zone.parts.iter().map(|p| p.area()).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(GeoError::Sampling {
            zone_id: zone.zone_id.clone(),
            reason: "polygon has zero planar area".into(),
            acceptance_rate: 0.0,
        });
    }
    let bboxes: Vec<_> = zone.parts.iter().map(|p| p.bbox()).collect();

    let mut rng = zone_rng(plan.seed, zone_index);
    let mut out = Vec::with_capacity(plan.points_per_zone);
    let mut attempts = 0u64;
    for _ in 0..plan.points_per_zone {
        let target = unit(&mut rng) * total;
        let mut acc = 0.0;
        let mut part_idx = areas.len() - 1;
        for (i, a) in areas.iter().enumerate() {
            acc += a;
            if target < acc {
                part_idx = i;
                break;
            }
        }
        let (part, bb) = (&zone.parts[part_idx], bboxes[part_idx]);

        let mut accepted = None;
        for _ in 0..plan.max_rejections_per_point {
            attempts += 1;
            let lon = bb.min_lon + unit(&mut rng) * (bb.max_lon - bb.min_lon);
            let lat = bb.min_lat + unit(&mut rng) * (bb.max_lat - bb.min_lat);
            let p = GeoPoint { lat, lon };
            if part.contains(p) && point_in_polygon(p, zone) {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => out.push(p),
            None => {
                return Err(GeoError::Sampling {
                    zone_id: zone.zone_id.clone(),
                    reason: format!(
                        "rejection budget of {} exhausted",
                        plan.max_rejections_per_point
                    ),
                    acceptance_rate: out.len() as f64 / attempts as f64,
                })
            }
        }
    }
    Ok(out)
}

pub fn sample_id(zone_id: &str, k: usize) -> String {
    format!("{zone_id}-{k:03}")
}

/// Samples every zone; zone ordinals are their positions in `zones`.
pub fn sample_all(zones: &[ZonePolygon], plan: &SamplePlan, exec: Execution) -> Result<Vec<SampledPoint>, GeoError> {
    let per_zone = exec.try_map(zones, |i, z| {
        sample_uniform(z, plan, i).map(|pts| {
            pts.into_iter()
                .enumerate()
                .map(|(k, p)| SampledPoint {
                    zone_id: z.zone_id.clone(),
                    sample_id: sample_id(&z.zone_id, k),
                    lat: p.lat,
                    lon: p.lon,
                })
                .collect::<Vec<_>>()
        })
    })?;
    Ok(per_zone.into_iter().flatten().collect())
}

pub fn write_points_csv<W: Write>(w: W, points: &[SampledPoint]) -> Result<(), GeoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in points {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_points_jsonl<W: Write>(mut w: W, points: &[SampledPoint]) -> Result<(), GeoError> {
    for p in points {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

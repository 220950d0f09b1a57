use serde::{Deserialize, Serialize};

use super::{GeoError, GeoPoint};

/// Planar vertex in GeoJSON axis order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Zip,
    County,
    /// Census block group, used only for socioeconomic joins.
    BlockGroup,
}

impl std::fmt::Display for ZoneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ZoneKind::Zip => "zip",
            ZoneKind::County => "county",
            ZoneKind::BlockGroup => "block_group",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    fn of<'a>(coords: impl IntoIterator<Item = &'a Coord>) -> Self {
        let mut bbox = BBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for c in coords {
            bbox.min_lon = bbox.min_lon.min(c.lon);
            bbox.min_lat = bbox.min_lat.min(c.lat);
            bbox.max_lon = bbox.max_lon.max(c.lon);
            bbox.max_lat = bbox.max_lat.max(c.lat);
        }
        bbox
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }
}

/// One polygon of a (multi)polygon zone: `rings[0]` is the outer boundary,
/// the remaining rings are holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonPart {
    pub rings: Vec<Vec<Coord>>,
}

impl PolygonPart {
    pub fn bbox(&self) -> BBox {
        BBox::of(self.rings.first().into_iter().flatten())
    }

    /// Planar area in square degrees: outer minus holes.
    pub fn area(&self) -> f64 {
        let mut rings = self.rings.iter().map(|r| ring_signed_area(r).abs());
        let outer = rings.next().unwrap_or(0.0);
        (outer - rings.sum::<f64>()).max(0.0)
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        rings_contain(self.rings.iter(), p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePolygon {
    pub zone_id: String,
    pub kind: ZoneKind,
    pub parts: Vec<PolygonPart>,
    pub bbox: BBox,
}

impl ZonePolygon {
    pub fn new(zone_id: impl Into<String>, kind: ZoneKind, parts: Vec<PolygonPart>) -> Result<Self, GeoError> {
        let zone_id = zone_id.into();
        let invalid = |message: String| GeoError::InvalidGeometry {
            zone_id: zone_id.clone(),
            message,
        };
        if zone_id.is_empty() {
            return Err(invalid("empty zone id".into()));
        }
        if parts.is_empty() {
            return Err(invalid("no polygon parts".into()));
        }
        for (pi, part) in parts.iter().enumerate() {
            if part.rings.is_empty() {
                return Err(invalid(format!("part {pi} has no rings")));
            }
            for (ri, ring) in part.rings.iter().enumerate() {
                if ring.len() < 4 {
                    return Err(invalid(format!("part {pi} ring {ri} has {} vertices (< 4)", ring.len())));
                }
                if ring.first() != ring.last() {
                    return Err(invalid(format!("part {pi} ring {ri} is not closed")));
                }
                if let Some(c) = ring.iter().find(|c| GeoPoint::new(c.lat, c.lon).is_err()) {
                    return Err(invalid(format!("part {pi} ring {ri} has invalid vertex {c:?}")));
                }
            }
        }
        let bbox = BBox::of(parts.iter().flat_map(|p| p.rings.iter().flatten()));
        Ok(Self {
            zone_id,
            kind,
            parts,
            bbox,
        })
    }

    /// Total planar area in square degrees.
    pub fn area(&self) -> f64 {
        self.parts.iter().map(PolygonPart::area).sum()
    }

    fn rings(&self) -> impl Iterator<Item = &Vec<Coord>> + Clone {
        self.parts.iter().flat_map(|p| p.rings.iter())
    }
}

/// Even-odd containment over all rings. Points lying exactly on any edge
/// (outer or hole) count as inside.
pub fn point_in_polygon(p: GeoPoint, zone: &ZonePolygon) -> bool {
    zone.bbox.contains(p) && rings_contain(zone.rings(), p)
}

fn rings_contain<'a>(rings: impl Iterator<Item = &'a Vec<Coord>> + Clone, p: GeoPoint) -> bool {
    if rings.clone().any(|r| on_boundary(r, p)) {
        return true;
    }
    let mut inside = false;
    for ring in rings {
        for edge in ring.windows(2) {
            let (a, b) = (edge[0], edge[1]);
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn on_boundary(ring: &[Coord], p: GeoPoint) -> bool {
    ring.windows(2).any(|e| {
        let (a, b) = (e[0], e[1]);
        let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
        cross == 0.0
            && p.lon >= a.lon.min(b.lon)
            && p.lon <= a.lon.max(b.lon)
            && p.lat >= a.lat.min(b.lat)
            && p.lat <= a.lat.max(b.lat)
    })
}

fn ring_signed_area(ring: &[Coord]) -> f64 {
    ring.windows(2)
        .map(|e| e[0].lon * e[1].lat - e[1].lon * e[0].lat)
        .sum::<f64>()
        / 2.0
}

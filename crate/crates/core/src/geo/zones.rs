use std::collections::HashMap;
use std::path::Path;

use serde_json::Value;

use super::{Coord, GeoError, PolygonPart, ZoneKind, ZonePolygon};

pub const DEFAULT_ZIP_ID_PROPERTY: &str = "ZCTA5CE10";
pub const DEFAULT_COUNTY_ID_PROPERTY: &str = "GEOID";

pub fn default_id_property(kind: ZoneKind) -> &'static str {
    match kind {
        ZoneKind::Zip => DEFAULT_ZIP_ID_PROPERTY,
        ZoneKind::County | ZoneKind::BlockGroup => DEFAULT_COUNTY_ID_PROPERTY,
    }
}

/// Reads a GeoJSON FeatureCollection of Polygon/MultiPolygon zones.
///
/// `id_property` defaults to `ZCTA5CE10` for zips and `GEOID` for counties.
/// Features carrying `"role": "epicenter"` (as written by the choropleth
/// exporter) are skipped.
pub fn load_zones(path: &Path, kind: ZoneKind, id_property: Option<&str>) -> Result<Vec<ZonePolygon>, GeoError> {
    let text = std::fs::read_to_string(path)?;
    parse_zones(&text, kind, id_property)
}

pub fn parse_zones(text: &str, kind: ZoneKind, id_property: Option<&str>) -> Result<Vec<ZonePolygon>, GeoError> {
    let id_property = id_property.unwrap_or_else(|| default_id_property(kind));
    let root: Value = serde_json::from_str(text).map_err(|e| {
        let context = text
            .lines()
            .nth(e.line().saturating_sub(1))
            .unwrap_or("")
            .chars()
            .take(120)
            .collect();
        GeoError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
            context,
        }
    })?;

    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeoError::Parse {
            line: 1,
            column: 1,
            message: "top-level object is not a FeatureCollection".into(),
            context: String::new(),
        });
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoError::Parse {
            line: 1,
            column: 1,
            message: "FeatureCollection has no features array".into(),
            context: String::new(),
        })?;

    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut zones = Vec::with_capacity(features.len());
    for (idx, feature) in features.iter().enumerate() {
        let schema = |message: String| GeoError::Schema {
            feature_index: idx,
            message,
        };
        let props = feature.get("properties").and_then(Value::as_object);
        if props.and_then(|p| p.get("role")).and_then(Value::as_str) == Some("epicenter") {
            continue;
        }
        let zone_id = match props.and_then(|p| p.get(id_property)) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(schema(format!("missing zone id property {id_property:?}"))),
        };
        let geometry = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| schema("missing geometry".into()))?;
        let coords = geometry.get("coordinates").ok_or_else(|| schema("geometry has no coordinates".into()))?;
        let parts = match geometry.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![parse_polygon(coords).map_err(schema)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| schema("MultiPolygon coordinates are not an array".into()))?
                .iter()
                .map(parse_polygon)
                .collect::<Result<Vec<_>, _>>()
                .map_err(schema)?,
            other => return Err(schema(format!("unsupported geometry type {other:?}"))),
        };
        if let Some(&first) = seen.get(&zone_id) {
            return Err(GeoError::DuplicateZone {
                zone_id,
                first,
                second: idx,
            });
        }
        seen.insert(zone_id.clone(), idx);
        zones.push(ZonePolygon::new(zone_id, kind, parts)?);
    }
    Ok(zones)
}

fn parse_polygon(v: &Value) -> Result<PolygonPart, String> {
    let rings = v
        .as_array()
        .ok_or("polygon coordinates are not an array")?
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or_else(|| "ring is not an array".to_string())?
                .iter()
                .map(|pos| match pos.as_array().map(Vec::as_slice) {
                    Some([lon, lat, ..]) => match (lon.as_f64(), lat.as_f64()) {
                        (Some(lon), Some(lat)) => Ok(Coord { lon, lat }),
                        _ => Err(format!("non-numeric position {pos}")),
                    },
                    _ => Err(format!("bad position {pos}")),
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rings.is_empty() {
        return Err("polygon has no rings".into());
    }
    Ok(PolygonPart { rings })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"{"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"ZCTA5CE10":"94558"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type":"Feature","properties":{"ZCTA5CE10":"94559"},"geometry":{"type":"MultiPolygon","coordinates":[[[[2,2],[3,2],[3,3],[2,2]]],[[[5,5],[6,5],[6,6],[5,5]]]]}}
    ]}"#;

    #[test]
    fn two_features() {
        let zones = parse_zones(TWO, ZoneKind::Zip, None).unwrap();
        assert_eq!(zones.len(), 2);
        assert_eq!(zones[0].zone_id, "94558");
        assert_eq!(zones[1].zone_id, "94559");
        assert_eq!(zones[1].parts.len(), 2);
        assert_eq!(zones[1].bbox.max_lon, 6.0);
    }

    #[test]
    fn missing_id_names_feature() {
        let text = TWO.replace("\"ZCTA5CE10\":\"94558\"", "\"NAME\":\"x\"");
        match parse_zones(&text, ZoneKind::Zip, None) {
            Err(GeoError::Schema { feature_index, .. }) => assert_eq!(feature_index, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_rejected() {
        let text = TWO.replace("94559", "94558");
        assert!(matches!(
            parse_zones(&text, ZoneKind::Zip, None),
            Err(GeoError::DuplicateZone { first: 0, second: 1, .. })
        ));
    }

    #[test]
    fn malformed_reports_line() {
        let text = "{\"type\":\"FeatureCollection\",\n\"features\": [ oops ]}";
        match parse_zones(text, ZoneKind::Zip, None) {
            Err(GeoError::Parse { line, context, .. }) => {
                assert_eq!(line, 2);
                assert!(context.contains("oops"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_property_and_numeric_id() {
        let text = TWO.replace("\"ZCTA5CE10\":\"94558\"", "\"GEOID\":6055").replace("\"ZCTA5CE10\":\"94559\"", "\"GEOID\":\"06097\"");
        let zones = parse_zones(&text, ZoneKind::County, None).unwrap();
        assert_eq!(zones[0].zone_id, "6055");
        assert_eq!(zones[1].kind, ZoneKind::County);
    }
}

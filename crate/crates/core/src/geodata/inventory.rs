use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::GeoError;

/// Closed ring of `[x, y]` vertices in CRS coordinates (first == last).
pub type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Ring,
    #[serde(default)]
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring) -> Self {
        Self {
            exterior,
            holes: Vec::new(),
        }
    }

    pub fn with_hole(mut self, hole: Ring) -> Self {
        self.holes.push(hole);
        self
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    /// Axis-aligned rectangle ring, closed.
    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self::new(vec![
            [min_x, min_y],
            [max_x, min_y],
            [max_x, max_y],
            [min_x, max_y],
            [min_x, min_y],
        ])
    }
}

/// Inclusive calendar-date window of the triggering event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl EventWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, GeoError> {
        if start > end {
            return Err(GeoError::InvalidWindow(format!("{start} is after {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn single_day(day: NaiveDate) -> Self {
        Self {
            start: day,
            end: day,
        }
    }

    pub fn parse(start: &str, end: &str) -> Result<Self, GeoError> {
        Self::new(parse_date(start)?, parse_date(end)?)
    }
}

/// Accepts `YYYY-MM-DD` or an RFC 3339 timestamp (the date part is used).
pub fn parse_date(s: &str) -> Result<NaiveDate, GeoError> {
    let day = s.trim().get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d")
        .map_err(|e| GeoError::InvalidWindow(format!("bad date {s:?}: {e}")))
}

/// Landslide polygons of one inventory, all assumed to co-occur inside
/// `event_window`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInventory {
    pub inventory_id: String,
    pub event_window: EventWindow,
    pub polygons: Vec<Polygon>,
}

impl EventInventory {
    pub fn new(
        inventory_id: impl Into<String>,
        event_window: EventWindow,
        polygons: Vec<Polygon>,
    ) -> Result<Self, GeoError> {
        let inv = Self {
            inventory_id: inventory_id.into(),
            event_window,
            polygons,
        };
        inv.validate()?;
        Ok(inv)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.event_window.start > self.event_window.end {
            return Err(GeoError::InvalidWindow(format!(
                "{} is after {}",
                self.event_window.start, self.event_window.end
            )));
        }
        for (p, poly) in self.polygons.iter().enumerate() {
            for (r, ring) in poly.rings().enumerate() {
                validate_ring(ring, p, r)?;
            }
        }
        Ok(())
    }

    /// Reads a GeoJSON FeatureCollection of Polygon/MultiPolygon features. The
    /// event window comes from the collection-level `properties.event_start`
    /// and `properties.event_end`; `properties.inventory_id`, when present,
    /// overrides `default_id`.
    pub fn from_geojson_str(text: &str, default_id: &str) -> Result<Self, GeoError> {
        let root: Value =
            serde_json::from_str(text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
        if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
            return Err(GeoError::GeoJson("expected a FeatureCollection".into()));
        }
        let props = root.get("properties").cloned().unwrap_or(Value::Null);
        let date_prop = |key: &str| -> Result<&str, GeoError> {
            props
                .get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| GeoError::GeoJson(format!("missing collection property {key:?}")))
        };
        let window = EventWindow::parse(date_prop("event_start")?, date_prop("event_end")?)?;
        let id = props
            .get("inventory_id")
            .and_then(Value::as_str)
            .unwrap_or(default_id)
            .to_string();

        let features = root
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| GeoError::GeoJson("missing features array".into()))?;
        let mut polygons = Vec::new();
        for (i, f) in features.iter().enumerate() {
            let geom = f
                .get("geometry")
                .ok_or_else(|| GeoError::GeoJson(format!("feature {i} has no geometry")))?;
            let kind = geom.get("type").and_then(Value::as_str).unwrap_or("");
            let coords = geom
                .get("coordinates")
                .ok_or_else(|| GeoError::GeoJson(format!("feature {i} has no coordinates")))?;
            match kind {
                "Polygon" => polygons.push(parse_polygon(coords, i)?),
                "MultiPolygon" => {
                    let parts = coords.as_array().ok_or_else(|| {
                        GeoError::GeoJson(format!("feature {i}: MultiPolygon coordinates"))
                    })?;
                    for part in parts {
                        polygons.push(parse_polygon(part, i)?);
                    }
                }
                other => {
                    return Err(GeoError::GeoJson(format!(
                        "feature {i}: unsupported geometry type {other:?}"
                    )))
                }
            }
        }
        Self::new(id, window, polygons)
    }

    pub fn read_geojson(path: &Path) -> Result<Self, GeoError> {
        let text = std::fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("inventory");
        Self::from_geojson_str(&text, stem)
    }
}

fn validate_ring(ring: &Ring, polygon: usize, r: usize) -> Result<(), GeoError> {
    if ring.len() < 2 || ring.first() != ring.last() {
        return Err(GeoError::UnclosedRing { polygon, ring: r });
    }
    let mut distinct: Vec<[f64; 2]> = ring[..ring.len() - 1].to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(GeoError::DegenerateRing { polygon, ring: r });
    }
    Ok(())
}

fn parse_polygon(coords: &Value, feature: usize) -> Result<Polygon, GeoError> {
    let bad = || GeoError::GeoJson(format!("feature {feature}: malformed polygon coordinates"));
    let rings = coords.as_array().ok_or_else(bad)?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring.as_array().ok_or_else(bad)?;
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            let xy = p.as_array().ok_or_else(bad)?;
            let x = xy.first().and_then(Value::as_f64).ok_or_else(bad)?;
            let y = xy.get(1).and_then(Value::as_f64).ok_or_else(bad)?;
            out.push([x, y]);
        }
        parsed.push(out);
    }
    let mut it = parsed.into_iter();
    let exterior = it.next().ok_or_else(bad)?;
    Ok(Polygon {
        exterior,
        holes: it.collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_feature_collection() {
        let text = r#"{
          "type": "FeatureCollection",
          "properties": {"event_start": "2021-08-14", "event_end": "2021-08-17"},
          "features": [
            {"type": "Feature", "properties": {}, "geometry": {"type": "Polygon",
              "coordinates": [[[0,0],[10,0],[10,10],[0,10],[0,0]]]}},
            {"type": "Feature", "properties": {}, "geometry": {"type": "MultiPolygon",
              "coordinates": [[[[20,0],[30,0],[30,10],[20,0]]],
                              [[[40,0],[50,0],[50,10],[40,0]]]]}}
          ]
        }"#;
        let inv = EventInventory::from_geojson_str(text, "haiti").unwrap();
        assert_eq!(inv.inventory_id, "haiti");
        assert_eq!(inv.polygons.len(), 3);
        assert_eq!(inv.event_window.start.to_string(), "2021-08-14");
        assert_eq!(inv.event_window.end.to_string(), "2021-08-17");
    }

    #[test]
    fn rejects_unclosed_ring() {
        let text = r#"{"type": "FeatureCollection",
          "properties": {"event_start": "2018-09-28", "event_end": "2018-09-28"},
          "features": [{"type": "Feature", "geometry": {"type": "Polygon",
              "coordinates": [[[0,0],[10,0],[10,10],[0,10]]]}}]}"#;
        assert!(matches!(
            EventInventory::from_geojson_str(text, "x"),
            Err(GeoError::UnclosedRing { polygon: 0, ring: 0 })
        ));
    }

    #[test]
    fn rejects_reversed_window() {
        assert!(EventWindow::parse("2021-08-17", "2021-08-14").is_err());
        assert!(EventWindow::parse("2021-08-14", "2021-08-14").is_ok());
    }
}

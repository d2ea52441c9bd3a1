use std::path::Path;

use anyhow::{Context, Result};
use landslide_core::geodata::EventWindow;
use landslide_core::stac::BBox;
use serde::{Deserialize, Serialize};

/// Per-region settings shared by `stac-search` and `prepare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub inventory_geojson: String,
    /// `[min_lon, min_lat, max_lon, max_lat]`.
    pub bbox: [f64; 4],
    pub event_start: String,
    pub event_end: String,
    /// Scenes discarded by hand (e.g. snow cover).
    #[serde(default)]
    pub excluded_item_ids: Vec<String>,
}

impl RegionConfig {
    pub fn read(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.bbox()?;
        cfg.event_window()?;
        Ok((cfg, text))
    }

    pub fn bbox(&self) -> Result<BBox> {
        Ok(BBox::from_array(self.bbox)?)
    }

    pub fn event_window(&self) -> Result<EventWindow> {
        Ok(EventWindow::parse(&self.event_start, &self.event_end)?)
    }
}

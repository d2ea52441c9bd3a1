//! Georeferenced raster/vector primitives.
//!
//! All CRS handling is pass-through: grids and polygons that are combined must
//! already share a CRS, and any mismatch is reported as an error rather than
//! silently reprojected.

mod geotiff;
mod grid;
mod inventory;
mod rasterize;
mod rasterpack;
mod resample;

use std::io;

use thiserror::Error;

pub use geotiff::import_geotiff;
pub use grid::{DataType, GeoTransform, RasterData, RasterGrid};
pub use inventory::{EventInventory, EventWindow, Polygon, Ring};
pub use rasterize::rasterize_polygons;
pub use rasterpack::{
    decode_raster_pack, encode_raster_pack, read_raster_pack, write_raster_pack, RASTER_PACK_MAGIC,
};
pub use resample::{resample_to_grid, Resampling};

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("invalid geotransform: {0}")]
    InvalidTransform(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("target resolution must be > 0, got {0}")]
    InvalidResolution(f64),
    #[error("bilinear resampling requested on a categorical (u8) grid")]
    CategoricalBilinear,
    #[error("ring {ring} of polygon {polygon} is not closed")]
    UnclosedRing { polygon: usize, ring: usize },
    #[error("ring {ring} of polygon {polygon} has fewer than 3 distinct vertices")]
    DegenerateRing { polygon: usize, ring: usize },
    #[error("invalid event window: {0}")]
    InvalidWindow(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("size mismatch: header declares {expected} bytes, file holds {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported GeoTIFF variant: {0}")]
    UnsupportedVariant(String),
    #[error("TIFF decoding failed: {0}")]
    Tiff(String),
    #[error("GeoJSON: {0}")]
    GeoJson(String),
    #[error("CRS mismatch: EPSG:{0} vs EPSG:{1}")]
    CrsMismatch(u32, u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

//! Data side of the landslide change-detection toolkit.
//!
//! * [`geodata`]: georeferenced rasters, resampling, polygon burning and the
//!   `RasterPack` container.
//! * [`stac`]: scene discovery against a STAC API with an injectable transport.
//! * [`terrain`]: Horn slope/aspect and the normalized 4-band DEM stack.
//! * [`patchkit`]: windowing, filtering, sample blobs, manifest and splits.
//! * [`augment`]: D4 geometry, photometric jitter and histogram matching.

pub mod augment;
pub mod geodata;
pub mod patchkit;
pub mod stac;
pub mod terrain;

pub(crate) mod util;

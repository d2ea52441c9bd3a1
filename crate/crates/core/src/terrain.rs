//! Slope and aspect from a DEM (Horn's 3x3 stencil) and the normalized 4-band
//! DEM stack: elevation / 5000, slope / 90, sin(aspect), cos(aspect).

use thiserror::Error;

use crate::geodata::{GeoError, GeoTransform, RasterData, RasterGrid};

/// Normalization divisor for elevation in meters.
pub const ELEVATION_SCALE: f64 = 5000.0;
/// Slopes at or below this many degrees count as flat for aspect encoding.
pub const FLAT_SLOPE_EPS_DEG: f64 = 1e-6;
pub const DEM_STACK_BANDS: [&str; 4] = ["elevation", "slope", "aspect_sin", "aspect_cos"];

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("DEM must be at least 3x3, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("DEM must have exactly one elevation band, got {0}")]
    BandCount(usize),
    #[error("cell size must be > 0")]
    CellSize,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Slope in degrees `[0, 90]` and aspect as a compass bearing of the
/// downslope direction in `[0, 360)`. Aspect is `NaN` on flat cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeAspect {
    pub rows: usize,
    pub cols: usize,
    pub slope_deg: Vec<f64>,
    pub aspect_deg: Vec<f64>,
}

impl SlopeAspect {
    pub fn is_flat(&self, i: usize) -> bool {
        self.aspect_deg[i].is_nan()
    }
}

/// Horn gradients with edge replication at the borders.
///
/// `p = dz/dx` (east) and `q = dz/dy` (north) are the weighted 3x3 differences
/// divided by `8 * cell`. The downslope vector is `(-p, -q)` and aspect is
/// `atan2(east, north)` of it, so a surface rising to the east faces west
/// (270 degrees).
pub fn slope_aspect(
    elevation: &[f64],
    rows: usize,
    cols: usize,
    cell_x: f64,
    cell_y: f64,
) -> Result<SlopeAspect, TerrainError> {
    if rows < 3 || cols < 3 {
        return Err(TerrainError::TooSmall { rows, cols });
    }
    if !(cell_x > 0.0 && cell_y > 0.0) {
        return Err(TerrainError::CellSize);
    }
    assert_eq!(elevation.len(), rows * cols, "elevation length");
    let z = |r: isize, c: isize| -> f64 {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        elevation[r * cols + c]
    };
    let n = rows * cols;
    let mut slope_deg = Vec::with_capacity(n);
    let mut aspect_deg = Vec::with_capacity(n);
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            // Row index grows southward: r-1 is north.
            let (nw, n_, ne) = (z(r - 1, c - 1), z(r - 1, c), z(r - 1, c + 1));
            let (w, e) = (z(r, c - 1), z(r, c + 1));
            let (sw, s, se) = (z(r + 1, c - 1), z(r + 1, c), z(r + 1, c + 1));
            let p = ((ne + 2.0 * e + se) - (nw + 2.0 * w + sw)) / (8.0 * cell_x);
            let q = ((nw + 2.0 * n_ + ne) - (sw + 2.0 * s + se)) / (8.0 * cell_y);
            slope_deg.push(p.hypot(q).atan().to_degrees());
            aspect_deg.push(if p == 0.0 && q == 0.0 {
                f64::NAN
            } else {
                (-p).atan2(-q).to_degrees().rem_euclid(360.0)
            });
        }
    }
    Ok(SlopeAspect {
        rows,
        cols,
        slope_deg,
        aspect_deg,
    })
}

/// Slope/aspect of a single-band DEM grid using its pixel sizes.
pub fn slope_aspect_grid(dem: &RasterGrid) -> Result<SlopeAspect, TerrainError> {
    if dem.bands() != 1 {
        return Err(TerrainError::BandCount(dem.bands()));
    }
    let elevation: Vec<f64> = match dem.data() {
        RasterData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        RasterData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
    };
    let t = dem.transform();
    slope_aspect(&elevation, dem.rows(), dem.cols(), t.pixel_width, t.pixel_height)
}

/// `(sin, cos)` of aspect; `(0, 0)` where slope is at most
/// [`FLAT_SLOPE_EPS_DEG`] or aspect is undefined.
pub fn encode_aspect(aspect_deg: &[f64], slope_deg: &[f64]) -> (Vec<f64>, Vec<f64>) {
    aspect_deg
        .iter()
        .zip(slope_deg)
        .map(|(&a, &s)| {
            if s > FLAT_SLOPE_EPS_DEG && a.is_finite() {
                let rad = a.to_radians();
                (rad.sin(), rad.cos())
            } else {
                (0.0, 0.0)
            }
        })
        .unzip()
}

/// Normalized 4-band DEM stack (band order fixed by [`DEM_STACK_BANDS`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DemStack {
    grid: RasterGrid,
}

impl DemStack {
    /// Wraps an existing 4-band f32 grid in stack band order.
    pub fn from_grid(grid: RasterGrid) -> Result<Self, GeoError> {
        if grid.bands() != 4 || grid.dtype() != crate::geodata::DataType::F32 {
            return Err(GeoError::InvalidRaster(
                "DEM stack needs 4 f32 bands".to_string(),
            ));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &RasterGrid {
        &self.grid
    }

    pub fn into_grid(self) -> RasterGrid {
        self.grid
    }

    pub fn transform(&self) -> &GeoTransform {
        self.grid.transform()
    }

    pub fn rows(&self) -> usize {
        self.grid.rows()
    }

    pub fn cols(&self) -> usize {
        self.grid.cols()
    }

    pub fn band(&self, b: usize) -> &[f32] {
        self.grid.band_f32(b).expect("stack is f32")
    }
}

/// Derives slope and aspect, encodes aspect, and normalizes: elevation / 5000
/// (not clipped, so below-sea-level cells stay negative) and slope / 90.
pub fn build_dem_stack(dem: &RasterGrid) -> Result<DemStack, TerrainError> {
    let sa = slope_aspect_grid(dem)?;
    let (sin, cos) = encode_aspect(&sa.aspect_deg, &sa.slope_deg);
    let n = dem.band_len();
    let mut data = Vec::with_capacity(4 * n);
    for r in 0..dem.rows() {
        for c in 0..dem.cols() {
            data.push((dem.value(0, r, c) / ELEVATION_SCALE) as f32);
        }
    }
    data.extend(sa.slope_deg.iter().map(|&s| (s / 90.0).clamp(0.0, 1.0) as f32));
    data.extend(sin.iter().map(|&v| v as f32));
    data.extend(cos.iter().map(|&v| v as f32));
    let grid = RasterGrid::new(
        dem.rows(),
        dem.cols(),
        RasterData::F32(data),
        None,
        *dem.transform(),
        DEM_STACK_BANDS.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok(DemStack { grid })
}

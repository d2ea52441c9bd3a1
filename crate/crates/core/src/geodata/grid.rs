use serde::{Deserialize, Serialize};

use super::GeoError;

/// Affine north-up transform. `pixel_height` is stored positive; row index
/// grows southward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
    pub crs_code: u32,
}

impl GeoTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_width: f64,
        pixel_height: f64,
        crs_code: u32,
    ) -> Result<Self, GeoError> {
        let t = Self {
            origin_x,
            origin_y,
            pixel_width,
            pixel_height,
            crs_code,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.pixel_width > 0.0 && self.pixel_width.is_finite()) {
            return Err(GeoError::InvalidTransform(format!(
                "pixel_width must be > 0, got {}",
                self.pixel_width
            )));
        }
        if !(self.pixel_height > 0.0 && self.pixel_height.is_finite()) {
            return Err(GeoError::InvalidTransform(format!(
                "pixel_height must be > 0, got {}",
                self.pixel_height
            )));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(GeoError::InvalidTransform("non-finite origin".into()));
        }
        Ok(())
    }

    /// World coordinates of the top-left corner of pixel `(col, row)`.
    /// Fractional indices address points inside the pixel.
    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + col * self.pixel_width,
            self.origin_y - row * self.pixel_height,
        )
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_width,
            (self.origin_y - y) / self.pixel_height,
        )
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        self.pixel_to_world(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Transform of the sub-window whose top-left pixel is `(col, row)`.
    pub fn window(&self, col: usize, row: usize) -> GeoTransform {
        let (x, y) = self.pixel_to_world(col as f64, row as f64);
        GeoTransform {
            origin_x: x,
            origin_y: y,
            ..*self
        }
    }

    /// Same origin and CRS, square pixels of `res`.
    pub fn with_resolution(&self, res: f64) -> GeoTransform {
        GeoTransform {
            pixel_width: res,
            pixel_height: res,
            ..*self
        }
    }

    /// Equality up to `tol` in CRS units on every real-valued field.
    pub fn approx_eq(&self, other: &GeoTransform, tol: f64) -> bool {
        self.crs_code == other.crs_code
            && (self.origin_x - other.origin_x).abs() <= tol
            && (self.origin_y - other.origin_y).abs() <= tol
            && (self.pixel_width - other.pixel_width).abs() <= tol
            && (self.pixel_height - other.pixel_height).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    F32,
    U8,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::F32 => "f32",
            DataType::U8 => "u8",
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DataType::F32 => 4,
            DataType::U8 => 1,
        }
    }
}

/// Band-major, row-major pixel storage.
#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl RasterData {
    pub fn len(&self) -> usize {
        match self {
            RasterData::F32(v) => v.len(),
            RasterData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DataType {
        match self {
            RasterData::F32(_) => DataType::F32,
            RasterData::U8(_) => DataType::U8,
        }
    }
}

/// Georeferenced multi-band 2-D array with optional nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    rows: usize,
    cols: usize,
    data: RasterData,
    nodata: Option<f64>,
    transform: GeoTransform,
    band_names: Vec<String>,
}

impl RasterGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        data: RasterData,
        nodata: Option<f64>,
        transform: GeoTransform,
        band_names: Vec<String>,
    ) -> Result<Self, GeoError> {
        transform.validate()?;
        if band_names.is_empty() {
            return Err(GeoError::InvalidRaster("at least one band required".into()));
        }
        let expected = band_names.len() * rows * cols;
        if data.len() != expected {
            return Err(GeoError::InvalidRaster(format!(
                "{} bands of {rows}x{cols} need {expected} values, got {}",
                band_names.len(),
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            nodata,
            transform,
            band_names,
        })
    }

    /// Single-band f32 grid.
    pub fn from_f32(
        rows: usize,
        cols: usize,
        values: Vec<f32>,
        transform: GeoTransform,
        name: &str,
    ) -> Result<Self, GeoError> {
        Self::new(rows, cols, RasterData::F32(values), None, transform, vec![name.to_string()])
    }

    /// Single-band u8 grid.
    pub fn from_u8(
        rows: usize,
        cols: usize,
        values: Vec<u8>,
        transform: GeoTransform,
        name: &str,
    ) -> Result<Self, GeoError> {
        Self::new(rows, cols, RasterData::U8(values), None, transform, vec![name.to_string()])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.band_names.len()
    }

    pub fn band_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &RasterData {
        &self.data
    }

    pub fn into_data(self) -> RasterData {
        self.data
    }

    pub fn dtype(&self) -> DataType {
        self.data.dtype()
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn set_nodata(&mut self, nodata: Option<f64>) {
        self.nodata = nodata;
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|b| b == name)
    }

    pub fn band_f32(&self, band: usize) -> Option<&[f32]> {
        let n = self.band_len();
        match &self.data {
            RasterData::F32(v) if band < self.bands() => Some(&v[band * n..(band + 1) * n]),
            _ => None,
        }
    }

    pub fn band_u8(&self, band: usize) -> Option<&[u8]> {
        let n = self.band_len();
        match &self.data {
            RasterData::U8(v) if band < self.bands() => Some(&v[band * n..(band + 1) * n]),
            _ => None,
        }
    }

    /// Pixel value widened to f64 regardless of storage type.
    pub fn value(&self, band: usize, row: usize, col: usize) -> f64 {
        let i = band * self.band_len() + row * self.cols + col;
        match &self.data {
            RasterData::F32(v) => f64::from(v[i]),
            RasterData::U8(v) => f64::from(v[i]),
        }
    }

    pub fn is_nodata_value(&self, value: f64) -> bool {
        match self.nodata {
            None => false,
            Some(nd) if nd.is_nan() => value.is_nan(),
            Some(nd) => value == nd,
        }
    }

    /// Per-pixel validity of one band (1 valid, 0 nodata).
    pub fn band_validity(&self, band: usize) -> Vec<u8> {
        let n = self.band_len();
        let mut out = vec![1u8; n];
        if self.nodata.is_none() {
            return out;
        }
        for (i, o) in out.iter_mut().enumerate() {
            let v = match &self.data {
                RasterData::F32(d) => f64::from(d[band * n + i]),
                RasterData::U8(d) => f64::from(d[band * n + i]),
            };
            if self.is_nodata_value(v) {
                *o = 0;
            }
        }
        out
    }

    /// Per-pixel validity across all bands: a pixel is valid only if no band
    /// holds the nodata sentinel.
    pub fn validity_mask(&self) -> Vec<u8> {
        let mut out = vec![1u8; self.band_len()];
        if self.nodata.is_none() {
            return out;
        }
        for b in 0..self.bands() {
            for (o, v) in out.iter_mut().zip(self.band_validity(b)) {
                *o &= v;
            }
        }
        out
    }

    /// Equality that compares float payloads by bit pattern (NaN-safe).
    pub fn bitwise_eq(&self, other: &RasterGrid) -> bool {
        let data_eq = match (&self.data, &other.data) {
            (RasterData::F32(a), RasterData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (RasterData::U8(a), RasterData::U8(b)) => a == b,
            _ => false,
        };
        let nodata_eq = match (self.nodata, other.nodata) {
            (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
            (None, None) => true,
            _ => false,
        };
        data_eq
            && nodata_eq
            && self.rows == other.rows
            && self.cols == other.cols
            && self.transform == other.transform
            && self.band_names == other.band_names
    }

    /// Copy of a `size_rows x size_cols` window starting at `(col, row)`,
    /// with the transform shifted accordingly.
    pub fn crop(
        &self,
        col: usize,
        row: usize,
        size_cols: usize,
        size_rows: usize,
    ) -> Result<RasterGrid, GeoError> {
        if col + size_cols > self.cols || row + size_rows > self.rows {
            return Err(GeoError::InvalidRaster(format!(
                "window ({col},{row})+{size_cols}x{size_rows} exceeds {}x{}",
                self.cols, self.rows
            )));
        }
        let n = self.band_len();
        let data = match &self.data {
            RasterData::F32(v) => RasterData::F32(crop_planes(v, n, self.cols, col, row, size_cols, size_rows)),
            RasterData::U8(v) => RasterData::U8(crop_planes(v, n, self.cols, col, row, size_cols, size_rows)),
        };
        RasterGrid::new(
            size_rows,
            size_cols,
            data,
            self.nodata,
            self.transform.window(col, row),
            self.band_names.clone(),
        )
    }
}

fn crop_planes<T: Copy>(
    data: &[T],
    plane_len: usize,
    cols: usize,
    col: usize,
    row: usize,
    size_cols: usize,
    size_rows: usize,
) -> Vec<T> {
    let bands = data.len() / plane_len.max(1);
    let mut out = Vec::with_capacity(bands * size_cols * size_rows);
    for b in 0..bands {
        let plane = &data[b * plane_len..(b + 1) * plane_len];
        for r in row..row + size_rows {
            out.extend_from_slice(&plane[r * cols + col..r * cols + col + size_cols]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utm() -> GeoTransform {
        GeoTransform::new(500_000.0, 2_000_000.0, 10.0, 10.0, 32618).unwrap()
    }

    #[test]
    fn rejects_non_positive_pixel_size() {
        assert!(GeoTransform::new(0.0, 0.0, 0.0, 10.0, 4326).is_err());
        assert!(GeoTransform::new(0.0, 0.0, 10.0, -10.0, 4326).is_err());
    }

    #[test]
    fn band_count_must_match_data() {
        let err = RasterGrid::new(
            2,
            2,
            RasterData::F32(vec![0.0; 4]),
            None,
            utm(),
            vec!["a".into(), "b".into()],
        );
        assert!(err.is_err());
    }

    #[test]
    fn validity_follows_nodata() {
        let mut g = RasterGrid::from_f32(1, 3, vec![0.0, 5.0, 0.0], utm(), "B02").unwrap();
        assert_eq!(g.validity_mask(), vec![1, 1, 1]);
        g.set_nodata(Some(0.0));
        assert_eq!(g.validity_mask(), vec![0, 1, 0]);
    }

    #[test]
    fn crop_shifts_transform() {
        let g = RasterGrid::from_f32(3, 3, (0..9).map(|v| v as f32).collect(), utm(), "x").unwrap();
        let c = g.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.band_f32(0).unwrap(), &[4.0, 5.0, 7.0, 8.0]);
        assert_eq!(c.transform().origin_x, 500_010.0);
        assert_eq!(c.transform().origin_y, 1_999_990.0);
    }

    proptest! {
        #[test]
        fn world_pixel_round_trip(
            ox in -1.0e6f64..1.0e6, oy in -1.0e7f64..1.0e7,
            pw in 0.5f64..100.0, ph in 0.5f64..100.0,
            col in 0.0f64..10_000.0, row in 0.0f64..10_000.0,
        ) {
            let t = GeoTransform::new(ox, oy, pw, ph, 32633).unwrap();
            let (x, y) = t.pixel_to_world(col, row);
            let (c, r) = t.world_to_pixel(x, y);
            let (x2, y2) = t.pixel_to_world(c, r);
            prop_assert!((x - x2).abs() < 1e-6);
            prop_assert!((y - y2).abs() < 1e-6);
        }
    }
}

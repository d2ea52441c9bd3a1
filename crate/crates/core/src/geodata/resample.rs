use serde::{Deserialize, Serialize};

use super::{GeoError, RasterData, RasterGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    Nearest,
    Bilinear,
}

/// Resamples `src` onto square pixels of `target_res` CRS units, keeping the
/// origin. The output extent covers the source extent (partial trailing pixels
/// are rounded up).
///
/// Destination pixel centers are mapped back into source pixel space. Nearest
/// picks the source pixel containing the mapped center; bilinear interpolates
/// between the four surrounding source centers (clamped at the borders) and
/// renormalizes the weights over non-nodata neighbours.
pub fn resample_to_grid(
    src: &RasterGrid,
    target_res: f64,
    method: Resampling,
) -> Result<RasterGrid, GeoError> {
    if !(target_res > 0.0 && target_res.is_finite()) {
        return Err(GeoError::InvalidResolution(target_res));
    }
    let t = src.transform();
    let sx = target_res / t.pixel_width;
    let sy = target_res / t.pixel_height;
    let out_cols = out_extent(src.cols(), t.pixel_width, target_res);
    let out_rows = out_extent(src.rows(), t.pixel_height, target_res);
    let transform = t.with_resolution(target_res);

    let data = match (method, src.data()) {
        (Resampling::Bilinear, RasterData::U8(_)) => return Err(GeoError::CategoricalBilinear),
        (Resampling::Nearest, RasterData::F32(v)) => {
            RasterData::F32(nearest(v, src, out_rows, out_cols, sx, sy))
        }
        (Resampling::Nearest, RasterData::U8(v)) => {
            RasterData::U8(nearest(v, src, out_rows, out_cols, sx, sy))
        }
        (Resampling::Bilinear, RasterData::F32(v)) => {
            RasterData::F32(bilinear(v, src, out_rows, out_cols, sx, sy))
        }
    };
    RasterGrid::new(
        out_rows,
        out_cols,
        data,
        src.nodata(),
        transform,
        src.band_names().to_vec(),
    )
}

fn out_extent(n: usize, src_res: f64, target_res: f64) -> usize {
    let exact = n as f64 * src_res / target_res;
    // Absorb floating noise such as 60/10*2 = 11.999999999.
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

fn src_index(dst: usize, scale: f64, n: usize) -> usize {
    let u = (dst as f64 + 0.5) * scale;
    (u.floor() as usize).min(n - 1)
}

fn nearest<T: Copy>(
    v: &[T],
    src: &RasterGrid,
    out_rows: usize,
    out_cols: usize,
    sx: f64,
    sy: f64,
) -> Vec<T> {
    let (rows, cols) = (src.rows(), src.cols());
    let col_map: Vec<usize> = (0..out_cols).map(|c| src_index(c, sx, cols)).collect();
    let mut out = Vec::with_capacity(src.bands() * out_rows * out_cols);
    for b in 0..src.bands() {
        let plane = &v[b * rows * cols..(b + 1) * rows * cols];
        for r in 0..out_rows {
            let sr = src_index(r, sy, rows);
            let line = &plane[sr * cols..(sr + 1) * cols];
            out.extend(col_map.iter().map(|&sc| line[sc]));
        }
    }
    out
}

/// Source-space coordinate of a destination center, clamped to the range of
/// source centers, split into (lower index, upper index, fraction).
fn bilinear_tap(dst: usize, scale: f64, n: usize) -> (usize, usize, f64) {
    let u = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = u.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, u - i0 as f64)
}

fn bilinear(
    v: &[f32],
    src: &RasterGrid,
    out_rows: usize,
    out_cols: usize,
    sx: f64,
    sy: f64,
) -> Vec<f32> {
    let (rows, cols) = (src.rows(), src.cols());
    let nodata = src.nodata();
    let fill = nodata.map(|n| n as f32).unwrap_or(f32::NAN);
    let col_taps: Vec<_> = (0..out_cols).map(|c| bilinear_tap(c, sx, cols)).collect();
    let mut out = Vec::with_capacity(src.bands() * out_rows * out_cols);
    for b in 0..src.bands() {
        let plane = &v[b * rows * cols..(b + 1) * rows * cols];
        for r in 0..out_rows {
            let (r0, r1, fr) = bilinear_tap(r, sy, rows);
            for &(c0, c1, fc) in &col_taps {
                let taps = [
                    (r0, c0, (1.0 - fr) * (1.0 - fc)),
                    (r0, c1, (1.0 - fr) * fc),
                    (r1, c0, fr * (1.0 - fc)),
                    (r1, c1, fr * fc),
                ];
                let mut acc = 0.0f64;
                let mut wsum = 0.0f64;
                for (rr, cc, w) in taps {
                    if w == 0.0 {
                        continue;
                    }
                    let x = f64::from(plane[rr * cols + cc]);
                    if src.is_nodata_value(x) {
                        continue;
                    }
                    acc += w * x;
                    wsum += w;
                }
                out.push(if wsum > 0.0 { (acc / wsum) as f32 } else { fill });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::GeoTransform;

    fn grid(rows: usize, cols: usize, res: f64, values: Vec<f32>) -> RasterGrid {
        let t = GeoTransform::new(0.0, 0.0, res, res, 32633).unwrap();
        RasterGrid::from_f32(rows, cols, values, t, "B01").unwrap()
    }

    #[test]
    fn nearest_60m_to_10m_makes_6x6_blocks() {
        let src = grid(2, 2, 60.0, vec![1.0, 2.0, 3.0, 4.0]);
        let out = resample_to_grid(&src, 10.0, Resampling::Nearest).unwrap();
        assert_eq!((out.rows(), out.cols()), (12, 12));
        assert_eq!(out.transform().pixel_width, 10.0);
        let v = out.band_f32(0).unwrap();
        // Oracle: col_src = floor(col_dst * 10 / 60), same for rows.
        for r in 0..12 {
            for c in 0..12 {
                let expect = [1.0, 2.0, 3.0, 4.0][(r * 10 / 60) * 2 + c * 10 / 60];
                assert_eq!(v[r * 12 + c], expect, "at ({r},{c})");
            }
        }
    }

    #[test]
    fn native_resolution_nearest_is_identity() {
        let values: Vec<f32> = (0..35).map(|i| (i as f32).sin()).collect();
        let src = grid(5, 7, 10.0, values);
        let out = resample_to_grid(&src, 10.0, Resampling::Nearest).unwrap();
        assert!(out.bitwise_eq(&src));
    }

    #[test]
    fn bilinear_keeps_constants() {
        let src = grid(3, 4, 20.0, vec![0.3125; 12]);
        let out = resample_to_grid(&src, 10.0, Resampling::Bilinear).unwrap();
        assert_eq!((out.rows(), out.cols()), (6, 8));
        assert!(out.band_f32(0).unwrap().iter().all(|&v| (v - 0.3125).abs() < 1e-7));
    }

    #[test]
    fn bilinear_skips_nodata_neighbours() {
        let mut src = grid(2, 2, 20.0, vec![1.0, -9999.0, 1.0, 1.0]);
        src.set_nodata(Some(-9999.0));
        let out = resample_to_grid(&src, 10.0, Resampling::Bilinear).unwrap();
        let v = out.band_f32(0).unwrap();
        // Only output (0,3) samples the nodata source pixel alone; every
        // other output renormalizes over its valid neighbours.
        assert_eq!(v[3], -9999.0);
        assert!(v.iter().enumerate().all(|(i, &x)| i == 3 || x == 1.0), "{v:?}");

        let mut all_bad = grid(2, 2, 20.0, vec![-9999.0; 4]);
        all_bad.set_nodata(Some(-9999.0));
        let out = resample_to_grid(&all_bad, 10.0, Resampling::Bilinear).unwrap();
        assert!(out.band_f32(0).unwrap().iter().all(|&x| x == -9999.0));
    }

    #[test]
    fn nearest_preserves_value_set() {
        let src = grid(3, 3, 30.0, vec![1.0, 5.0, 9.0, 2.0, 6.0, 7.0, 3.0, 3.0, 3.0]);
        let out = resample_to_grid(&src, 10.0, Resampling::Nearest).unwrap();
        let mut a: Vec<u32> = src.band_f32(0).unwrap().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u32> = out.band_f32(0).unwrap().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        a.dedup();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let src = grid(2, 2, 10.0, vec![0.0; 4]);
        assert!(matches!(
            resample_to_grid(&src, 0.0, Resampling::Nearest),
            Err(GeoError::InvalidResolution(_))
        ));
        assert!(resample_to_grid(&src, -5.0, Resampling::Nearest).is_err());
        let t = GeoTransform::new(0.0, 0.0, 20.0, 20.0, 32633).unwrap();
        let mask = RasterGrid::from_u8(2, 2, vec![0, 1, 2, 3], t, "cloud").unwrap();
        assert!(matches!(
            resample_to_grid(&mask, 10.0, Resampling::Bilinear),
            Err(GeoError::CategoricalBilinear)
        ));
        let up = resample_to_grid(&mask, 10.0, Resampling::Nearest).unwrap();
        assert_eq!(up.band_u8(0).unwrap()[..4], [0, 0, 1, 1]);
    }
}

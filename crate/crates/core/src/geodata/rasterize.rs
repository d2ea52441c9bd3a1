use super::{EventInventory, GeoError, GeoTransform, Polygon, RasterData, RasterGrid};

/// Burns inventory polygons into a u8 mask (1 landslide, 0 background).
///
/// A pixel is set when its center falls inside a polygon under the even-odd
/// rule (holes subtract). Scanlines use a half-open convention in pixel space:
/// an edge spans rows whose center `v` satisfies `v_min <= v < v_max`, and a
/// span covers centers `u` with `u_left <= u < u_right`, so centers lying
/// exactly on a top or left edge are inside and those on a bottom or right
/// edge are outside.
pub fn rasterize_polygons(
    inv: &EventInventory,
    transform: &GeoTransform,
    rows: usize,
    cols: usize,
) -> Result<RasterGrid, GeoError> {
    inv.validate()?;
    let mut mask = vec![0u8; rows * cols];
    let mut crossings = Vec::new();
    for poly in &inv.polygons {
        burn_polygon(poly, transform, rows, cols, &mut mask, &mut crossings);
    }
    RasterGrid::new(
        rows,
        cols,
        RasterData::U8(mask),
        None,
        *transform,
        vec!["landslide".to_string()],
    )
}

fn burn_polygon(
    poly: &Polygon,
    transform: &GeoTransform,
    rows: usize,
    cols: usize,
    mask: &mut [u8],
    crossings: &mut Vec<f64>,
) {
    let rings: Vec<Vec<(f64, f64)>> = poly
        .rings()
        .map(|ring| {
            ring.iter()
                .map(|&[x, y]| transform.world_to_pixel(x, y))
                .collect()
        })
        .collect();
    let (mut v_min, mut v_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, v) in rings.iter().flatten() {
        v_min = v_min.min(v);
        v_max = v_max.max(v);
    }
    if !(v_max >= 0.0 && v_min <= rows as f64) {
        return;
    }
    let row_lo = ((v_min - 0.5).ceil().max(0.0)) as usize;
    let row_hi = ((v_max - 0.5).ceil().max(0.0) as usize).min(rows);

    for row in row_lo..row_hi {
        let v = row as f64 + 0.5;
        crossings.clear();
        for ring in &rings {
            for edge in ring.windows(2) {
                let ((u0, v0), (u1, v1)) = (edge[0], edge[1]);
                let (lo, hi) = if v0 <= v1 { (v0, v1) } else { (v1, v0) };
                if lo <= v && v < hi {
                    crossings.push(u0 + (v - v0) * (u1 - u0) / (v1 - v0));
                }
            }
        }
        crossings.sort_by(|a, b| a.total_cmp(b));
        for span in crossings.chunks_exact(2) {
            let first = (span[0] - 0.5).ceil().max(0.0);
            let last = (span[1] - 0.5).ceil().min(cols as f64);
            if last <= first {
                continue;
            }
            let line = &mut mask[row * cols..(row + 1) * cols];
            for px in &mut line[first as usize..last as usize] {
                *px = 1;
            }
        }
    }
}

//! `RasterPack`: the toolkit's canonical on-disk raster container.
//!
//! Layout (little-endian): magic `RPK1`, header length as u32, UTF-8 JSON
//! header, then band-major row-major raw samples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataType, GeoError, GeoTransform, RasterData, RasterGrid};

pub const RASTER_PACK_MAGIC: [u8; 4] = *b"RPK1";

#[derive(Serialize, Deserialize)]
struct Header {
    bands: usize,
    rows: usize,
    cols: usize,
    dtype: String,
    nodata: Option<f64>,
    transform: GeoTransform,
    band_names: Vec<String>,
}

pub fn encode_raster_pack(grid: &RasterGrid) -> Result<Vec<u8>, GeoError> {
    if grid.nodata().is_some_and(|v| !v.is_finite()) {
        return Err(GeoError::Header("nodata must be finite to be stored".into()));
    }
    let header = Header {
        bands: grid.bands(),
        rows: grid.rows(),
        cols: grid.cols(),
        dtype: grid.dtype().as_str().to_string(),
        nodata: grid.nodata(),
        transform: *grid.transform(),
        band_names: grid.band_names().to_vec(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| GeoError::Header(e.to_string()))?;
    let payload = grid.data().len() * grid.dtype().size_of();
    let mut out = Vec::with_capacity(8 + json.len() + payload);
    out.extend_from_slice(&RASTER_PACK_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    match grid.data() {
        RasterData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        RasterData::U8(v) => out.extend_from_slice(v),
    }
    Ok(out)
}

pub fn decode_raster_pack(bytes: &[u8]) -> Result<RasterGrid, GeoError> {
    if bytes.len() < 8 {
        return Err(GeoError::SizeMismatch {
            expected: 8,
            actual: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != RASTER_PACK_MAGIC {
        return Err(GeoError::BadMagic {
            expected: RASTER_PACK_MAGIC,
            found,
        });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(GeoError::SizeMismatch {
            expected: header_end,
            actual: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| GeoError::Header(e.to_string()))?;
    let dtype = match header.dtype.as_str() {
        "f32" => DataType::F32,
        "u8" => DataType::U8,
        other => return Err(GeoError::UnknownDtype(other.to_string())),
    };
    let count = header.bands * header.rows * header.cols;
    let expected = header_end + count * dtype.size_of();
    if bytes.len() != expected {
        return Err(GeoError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[header_end..];
    let data = match dtype {
        DataType::F32 => RasterData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DataType::U8 => RasterData::U8(payload.to_vec()),
    };
    if header.band_names.len() != header.bands {
        return Err(GeoError::Header(format!(
            "{} band names for {} bands",
            header.band_names.len(),
            header.bands
        )));
    }
    RasterGrid::new(
        header.rows,
        header.cols,
        data,
        header.nodata,
        header.transform,
        header.band_names,
    )
}

pub fn write_raster_pack(grid: &RasterGrid, path: &Path) -> Result<(), GeoError> {
    fs::write(path, encode_raster_pack(grid)?)?;
    Ok(())
}

pub fn read_raster_pack(path: &Path) -> Result<RasterGrid, GeoError> {
    decode_raster_pack(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t() -> GeoTransform {
        GeoTransform::new(399_960.0, 2_100_000.0, 10.0, 10.0, 32618).unwrap()
    }

    #[test]
    fn file_size_is_header_plus_payload() {
        let g = RasterGrid::from_f32(2, 2, vec![1.0, 2.0, 3.0, 4.0], t(), "B02").unwrap();
        let bytes = encode_raster_pack(&g).unwrap();
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 8 + header_len + 16);
        assert_eq!(&bytes[..4], b"RPK1");
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rpk");
        let mut g = RasterGrid::new(
            2,
            3,
            RasterData::F32(vec![0.0, -1.5, f32::NAN, 7.25, 1e-30, 3.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0]),
            None,
            t(),
            vec!["elevation".into(), "slope".into()],
        )
        .unwrap();
        g.set_nodata(Some(-9999.0));
        write_raster_pack(&g, &path).unwrap();
        let back = read_raster_pack(&path).unwrap();
        assert!(back.bitwise_eq(&g));
        // A second cycle produces identical bytes.
        let first = fs::read(&path).unwrap();
        write_raster_pack(&back, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let g = RasterGrid::from_u8(2, 2, vec![0, 1, 2, 3], t(), "cloud").unwrap();
        let mut bytes = encode_raster_pack(&g).unwrap();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_raster_pack(&bad), Err(GeoError::BadMagic { .. })));
        bytes.pop();
        assert!(matches!(decode_raster_pack(&bytes), Err(GeoError::SizeMismatch { .. })));
    }

    #[test]
    fn rejects_unknown_dtype() {
        let g = RasterGrid::from_u8(1, 1, vec![0], t(), "m").unwrap();
        let bytes = encode_raster_pack(&g).unwrap();
        let text = String::from_utf8_lossy(&bytes[8..]).replace("\"u8\"", "\"i8\"");
        let mut forged = bytes[..8].to_vec();
        forged.extend_from_slice(text.as_bytes());
        assert!(matches!(decode_raster_pack(&forged), Err(GeoError::UnknownDtype(d)) if d == "i8"));
    }

    proptest! {
        #[test]
        fn bitwise_stable_over_two_cycles(
            rows in 1usize..6, cols in 1usize..6, bands in 1usize..4,
            seed in any::<u32>(), use_u8 in any::<bool>(),
        ) {
            let n = rows * cols * bands;
            let data = if use_u8 {
                RasterData::U8((0..n).map(|i| (i as u32 ^ seed) as u8).collect())
            } else {
                RasterData::F32((0..n).map(|i| f32::from_bits((i as u32).wrapping_mul(2_654_435_761) ^ seed)).collect())
            };
            let names = (0..bands).map(|b| format!("b{b}")).collect();
            let g = RasterGrid::new(rows, cols, data, Some(f64::from(seed % 7)), t(), names).unwrap();
            let once = encode_raster_pack(&g).unwrap();
            let back = decode_raster_pack(&once).unwrap();
            prop_assert!(back.bitwise_eq(&g));
            prop_assert_eq!(encode_raster_pack(&back).unwrap(), once);
        }
    }
}

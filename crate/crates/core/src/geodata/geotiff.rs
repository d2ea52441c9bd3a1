//! Read-only GeoTIFF subset: uncompressed or deflate, stripped or tiled,
//! chunky sample layout, north-up transform from pixel-scale + tiepoint (or a
//! rotation-free model transformation), EPSG code from the GeoKey directory.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::tags::Tag;

use super::{GeoError, GeoTransform, RasterData, RasterGrid};

const GT_RASTER_TYPE: u16 = 1025;
const GEOGRAPHIC_TYPE: u16 = 2048;
const PROJECTED_CS_TYPE: u16 = 3072;
const PIXEL_IS_POINT: u16 = 2;

fn tiff_err(e: tiff::TiffError) -> GeoError {
    GeoError::Tiff(e.to_string())
}

pub fn import_geotiff(path: &Path) -> Result<RasterGrid, GeoError> {
    let file = BufReader::new(File::open(path)?);
    let mut dec = Decoder::new(file)
        .map_err(tiff_err)?
        .with_limits(Limits::unlimited());

    let compression = dec
        .find_tag_unsigned::<u16>(Tag::Compression)
        .map_err(tiff_err)?
        .unwrap_or(1);
    if !matches!(compression, 1 | 8 | 32946) {
        return Err(GeoError::UnsupportedVariant(format!(
            "Compression (259) = {compression}"
        )));
    }
    let photometric = dec
        .find_tag_unsigned::<u16>(Tag::PhotometricInterpretation)
        .map_err(tiff_err)?
        .unwrap_or(1);
    if !matches!(photometric, 0..=2) {
        return Err(GeoError::UnsupportedVariant(format!(
            "PhotometricInterpretation (262) = {photometric}"
        )));
    }
    let planar = dec
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(tiff_err)?
        .unwrap_or(1);
    let samples = dec
        .find_tag_unsigned::<u16>(Tag::SamplesPerPixel)
        .map_err(tiff_err)?
        .unwrap_or(1) as usize;
    if planar != 1 && samples > 1 {
        return Err(GeoError::UnsupportedVariant(format!(
            "PlanarConfiguration (284) = {planar}"
        )));
    }

    let (width, height) = dec.dimensions().map_err(tiff_err)?;
    let (cols, rows) = (width as usize, height as usize);
    let transform = read_transform(&mut dec)?;
    let nodata = match dec.find_tag(Tag::GdalNodata).map_err(tiff_err)? {
        Some(v) => {
            let s = v.into_string().map_err(tiff_err)?;
            let s = s.trim_matches(|c: char| c == '\0' || c.is_whitespace());
            Some(s.parse::<f64>().map_err(|_| {
                GeoError::UnsupportedVariant(format!("GDAL_NODATA (42113) = {s:?}"))
            })?)
        }
        None => None,
    };

    let image = dec.read_image().map_err(tiff_err)?;
    let data = match image {
        DecodingResult::U8(v) if samples == 1 => RasterData::U8(v),
        DecodingResult::U8(v) => RasterData::U8(deinterleave(&v, samples)),
        DecodingResult::U16(v) => to_f32(&v, samples, |x| f32::from(x)),
        DecodingResult::I16(v) => to_f32(&v, samples, |x| f32::from(x)),
        DecodingResult::U32(v) => to_f32(&v, samples, |x| x as f32),
        DecodingResult::I32(v) => to_f32(&v, samples, |x| x as f32),
        DecodingResult::F32(v) => to_f32(&v, samples, |x| x),
        DecodingResult::F64(v) => to_f32(&v, samples, |x| x as f32),
        DecodingResult::I8(v) => to_f32(&v, samples, |x| f32::from(x)),
        _ => {
            return Err(GeoError::UnsupportedVariant(
                "SampleFormat/BitsPerSample (339/258) combination".into(),
            ))
        }
    };
    let band_names = (1..=samples).map(|b| format!("band{b}")).collect();
    RasterGrid::new(rows, cols, data, nodata, transform, band_names)
}

fn to_f32<T: Copy>(v: &[T], samples: usize, f: impl Fn(T) -> f32) -> RasterData {
    let widened: Vec<f32> = v.iter().map(|&x| f(x)).collect();
    RasterData::F32(if samples == 1 {
        widened
    } else {
        deinterleave(&widened, samples)
    })
}

/// Pixel-interleaved samples to band-major planes.
fn deinterleave<T: Copy>(v: &[T], samples: usize) -> Vec<T> {
    let n = v.len() / samples;
    let mut out = Vec::with_capacity(v.len());
    for b in 0..samples {
        out.extend((0..n).map(|i| v[i * samples + b]));
    }
    out
}

fn read_transform<R: std::io::Read + std::io::Seek>(
    dec: &mut Decoder<R>,
) -> Result<GeoTransform, GeoError> {
    let keys = dec
        .find_tag(Tag::GeoKeyDirectoryTag)
        .map_err(tiff_err)?
        .ok_or_else(|| GeoError::UnsupportedVariant("missing GeoKeyDirectory (34735)".into()))?
        .into_u16_vec()
        .map_err(tiff_err)?;
    let mut epsg = None;
    let mut raster_type = 1u16;
    if keys.len() >= 4 {
        let n = keys[3] as usize;
        for entry in keys[4..].chunks_exact(4).take(n) {
            let (id, location, value) = (entry[0], entry[1], entry[3]);
            if location != 0 {
                continue;
            }
            match id {
                PROJECTED_CS_TYPE => epsg = Some(u32::from(value)),
                GEOGRAPHIC_TYPE if epsg.is_none() => epsg = Some(u32::from(value)),
                GT_RASTER_TYPE => raster_type = value,
                _ => {}
            }
        }
    }
    let crs_code = epsg.ok_or_else(|| {
        GeoError::UnsupportedVariant("no EPSG code in GeoKeyDirectory (34735)".into())
    })?;

    let scale = dec
        .find_tag(Tag::ModelPixelScaleTag)
        .map_err(tiff_err)?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err)?;
    let tiepoint = dec
        .find_tag(Tag::ModelTiepointTag)
        .map_err(tiff_err)?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err)?;
    let (mut ox, mut oy, pw, ph) = match (scale, tiepoint) {
        (Some(s), Some(t)) if s.len() >= 2 && t.len() >= 6 => {
            (t[3] - t[0] * s[0], t[4] + t[1] * s[1], s[0], s[1])
        }
        _ => {
            let m = dec
                .find_tag(Tag::ModelTransformationTag)
                .map_err(tiff_err)?
                .ok_or_else(|| {
                    GeoError::UnsupportedVariant(
                        "no ModelPixelScale/ModelTiepoint (33550/33922) or ModelTransformation (34264)"
                            .into(),
                    )
                })?
                .into_f64_vec()
                .map_err(tiff_err)?;
            if m.len() < 8 || m[1] != 0.0 || m[4] != 0.0 {
                return Err(GeoError::UnsupportedVariant(
                    "rotated ModelTransformation (34264)".into(),
                ));
            }
            (m[3], m[7], m[0], -m[5])
        }
    };
    if raster_type == PIXEL_IS_POINT {
        ox -= 0.5 * pw;
        oy += 0.5 * ph;
    }
    GeoTransform::new(ox, oy, pw, ph, crs_code)
}

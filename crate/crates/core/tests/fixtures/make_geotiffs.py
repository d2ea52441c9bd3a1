"""Regenerates the GeoTIFF fixtures with Pillow (independent of the Rust reader).

    python3 make_geotiffs.py

Values are recorded in the Rust tests that read these files.
"""
from PIL import Image, TiffImagePlugin
from PIL.TiffTags import TAGS_V2, TagInfo

# Register the GeoTIFF tags so Pillow writes them with the right types.
GEO_TAGS = {
    33550: ("ModelPixelScaleTag", 12, 3),
    33922: ("ModelTiepointTag", 12, 6),
    34735: ("GeoKeyDirectoryTag", 3, 0),
    42113: ("GDAL_NODATA", 2, 1),
}
for tag, (name, typ, length) in GEO_TAGS.items():
    TAGS_V2[tag] = TagInfo(tag, name, typ, length)


def geo_ifd(nodata=None):
    ifd = TiffImagePlugin.ImageFileDirectory_v2()
    ifd[33550] = (10.0, 10.0, 0.0)
    ifd[33922] = (0.0, 0.0, 0.0, 500000.0, 2000000.0, 0.0)
    # Version 1.1.0, 3 keys: model type projected, raster type PixelIsArea,
    # ProjectedCSTypeGeoKey = 32618 (WGS 84 / UTM 18N).
    ifd[34735] = (1, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, 32618)
    if nodata is not None:
        ifd[42113] = nodata
    return ifd


VALUES = [
    [0.0, 1.5, 2.0, 3.0],
    [4.0, 5.0, 6.25, 7.0],
    [8.0, 9.0, 0.0, 11.0],
    [12.0, 13.0, 14.0, -2.5],
]


def float_image():
    img = Image.new("F", (4, 4))
    img.putdata([v for row in VALUES for v in row])
    return img


float_image().save("plain_4x4.tif", tiffinfo=geo_ifd(), compression=None)
float_image().save("nodata0_4x4.tif", tiffinfo=geo_ifd("0"), compression=None)
float_image().save("deflate_4x4.tif", tiffinfo=geo_ifd(), compression="tiff_adobe_deflate")

gray = Image.new("L", (8, 8))
gray.putdata(list(range(0, 128, 2)))
gray.save("jpeg_8x8.tif", tiffinfo=geo_ifd(), compression="jpeg")

rgb = Image.new("RGB", (2, 2))
rgb.putdata([(1, 2, 3), (4, 5, 6), (7, 8, 9), (10, 11, 12)])
rgb.save("rgb_2x2.tif", tiffinfo=geo_ifd(), compression=None)

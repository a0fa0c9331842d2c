import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from pnid2st.imageprep import (
    CanonicalImage, ImageError, contrast_stretch, crop, load_and_normalize, plan_tiles, tile_filename,
    write_tiles,
)


def save(tmp_path, name, img, **kw):
    path = tmp_path / name
    img.save(path, **kw)
    return path


@pytest.mark.parametrize("name,fmt", [("a.png", "PNG"), ("a.jpg", "JPEG"), ("a.tif", "TIFF")])
def test_supported_formats_load_as_grayscale(tmp_path, name, fmt):
    path = save(tmp_path, name, Image.new("RGB", (40, 30), (200, 100, 50)))
    img = load_and_normalize(path)
    assert img.pixels.shape == (30, 40) and img.pixels.dtype == np.uint8
    assert img.provenance["format"] == fmt
    assert abs(int(img.pixels[0, 0]) - round(0.299 * 200 + 0.587 * 100 + 0.114 * 50)) <= 2


def test_transparent_pixels_become_white(tmp_path):
    img = Image.new("RGBA", (4, 4), (0, 0, 0, 0))
    img.putpixel((0, 0), (0, 0, 0, 255))
    loaded = load_and_normalize(save(tmp_path, "t.png", img))
    assert loaded.pixels[0, 0] == 0 and loaded.pixels[3, 3] == 255


def test_unsupported_and_missing_files(tmp_path):
    with pytest.raises(ImageError, match="unsupported format 'BMP'"):
        load_and_normalize(save(tmp_path, "a.bmp", Image.new("L", (4, 4))))
    with pytest.raises(ImageError, match="no such file"):
        load_and_normalize(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageError, match="unreadable"):
        load_and_normalize(tmp_path / "junk.png")


def test_multipage_tiff_is_rejected(tmp_path):
    frames = [Image.new("L", (4, 4), v) for v in (0, 255)]
    path = tmp_path / "m.tif"
    frames[0].save(path, save_all=True, append_images=frames[1:])
    with pytest.raises(ImageError, match="multi-page"):
        load_and_normalize(path)


def test_contrast_stretch_spans_full_range(tmp_path):
    ramp = np.tile(np.linspace(100, 150, 64).astype(np.uint8), (8, 1))
    out = contrast_stretch(ramp)
    assert out.min() == 0 and out.max() == 255
    assert np.all(np.diff(out[0].astype(int)) >= 0)
    flat = np.full((4, 4), 77, np.uint8)
    assert np.array_equal(contrast_stretch(flat), flat)
    loaded = load_and_normalize(save(tmp_path, "r.png", Image.fromarray(ramp)), stretch=True)
    assert loaded.provenance["stretch"] and loaded.pixels.max() == 255


def test_canonical_image_validates_pixels():
    with pytest.raises(ImageError):
        CanonicalImage(np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(ImageError):
        CanonicalImage(np.zeros((2, 2), np.float32))


def test_shift_inward_border_tiles():
    plan = plan_tiles(1800, 1000, 1000, 1000, 100)
    assert [(r.x, r.y, r.w, r.h) for r in plan.rects] == [(0, 0, 1000, 1000), (800, 0, 1000, 1000)]
    plan = plan_tiles(2500, 1100, 1024, 1024, 128)
    assert sorted({r.x for r in plan.rects}) == [0, 896, 1476]
    assert sorted({r.y for r in plan.rects}) == [0, 76]
    # a stride-1000 second tile would end at 2200, so it moves in to 800
    plan = plan_tiles(2000, 800, 1200, 800, 200)
    assert [(r.x, r.w) for r in plan.rects] == [(0, 1200), (800, 1200)]


def test_tiles_larger_than_image_are_cut_down():
    plan = plan_tiles(300, 200, 1024, 1024, 128)
    assert [(r.x, r.y, r.w, r.h) for r in plan.rects] == [(0, 0, 300, 200)]


@pytest.mark.parametrize("args,fragment", [
    ((0, 10), "image dimensions"),
    ((10, 10, 0, 5), "tile dimensions"),
    ((10, 10, 5, 5, 5), "overlap"),
    ((10, 10, 5, 5, -1), "overlap"),
])
def test_plan_tiles_rejects_bad_parameters(args, fragment):
    with pytest.raises(ValueError, match=fragment):
        plan_tiles(*args)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 3000), st.integers(1, 3000), st.integers(16, 1200), st.integers(16, 1200), st.data())
def test_tiling_covers_image_with_required_overlap(width, height, tw, th, data):
    overlap = data.draw(st.integers(0, min(tw, th) - 1))
    plan = plan_tiles(width, height, tw, th, overlap)
    cols = sorted({r.x for r in plan.rects})
    rows = sorted({r.y for r in plan.rects})
    assert len(plan.rects) == len(cols) * len(rows)
    for r in plan.rects:
        assert 0 <= r.x and r.x + r.w <= width and 0 <= r.y and r.y + r.h <= height
        assert (r.w, r.h) == (plan.tile_w, plan.tile_h)
    for starts, size, length in ((cols, plan.tile_w, width), (rows, plan.tile_h, height)):
        assert starts[0] == 0 and starts[-1] + size == length
        for a, b in zip(starts, starts[1:]):
            assert a + size - b >= min(overlap, size)  # adjacent tiles overlap enough
    assert [(r.row, r.col) for r in plan.rects] == sorted((r.row, r.col) for r in plan.rects)


def test_crop_and_write_tiles(tmp_path):
    pixels = np.arange(60 * 50, dtype=np.uint32).reshape(50, 60).astype(np.uint8)
    img = CanonicalImage(pixels)
    plan = plan_tiles(60, 50, 40, 40, 10)
    tiles = crop(img, plan)
    r = plan.rects[-1]
    assert np.array_equal(tiles[-1], pixels[r.y:r.y + 40, r.x:r.x + 40])
    paths = write_tiles(img, plan, tmp_path / "tiles", "sheet")
    assert [p.name for p in paths] == [tile_filename("sheet", r) for r in plan.rects]
    assert paths[0].name == "sheet_r0_c0.png"
    assert np.array_equal(np.asarray(Image.open(paths[-1])), tiles[-1])


def test_crop_rejects_plan_for_other_image():
    with pytest.raises(ValueError, match="exceeds image bounds"):
        crop(CanonicalImage(np.zeros((10, 10), np.uint8)), plan_tiles(20, 20, 15, 15, 5))

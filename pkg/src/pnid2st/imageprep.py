"""Raster loading, grayscale normalization and overlapping tiling of P&IDs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

SUPPORTED_FORMATS = ("PNG", "JPEG", "TIFF")
DEFAULT_TILE = 1024
DEFAULT_OVERLAP = 128


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class CanonicalImage:
    pixels: np.ndarray  # (height, width) uint8
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ImageError("pixels must be a 2-D uint8 array")
        if min(self.pixels.shape) < 1:
            raise ImageError("image must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def to_grayscale(img: Image.Image) -> np.ndarray:
    """ITU-R 601-2 luma; transparent regions are composited onto white first."""
    if img.mode in ("RGBA", "LA") or (img.mode == "P" and "transparency" in img.info):
        rgba = img.convert("RGBA")
        background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        img = Image.alpha_composite(background, rgba)
    return np.asarray(img.convert("L"), dtype=np.uint8).copy()


def contrast_stretch(pixels: np.ndarray, low_pct: float = 2.0, high_pct: float = 98.0) -> np.ndarray:
    """Map the [low_pct, high_pct] percentile range affinely onto 0..255, clipping outside."""
    lo, hi = np.percentile(pixels, [low_pct, high_pct])
    if hi <= lo:
        return pixels.copy()
    scaled = (pixels.astype(np.float64) - lo) * (255.0 / (hi - lo))
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def load_and_normalize(path: Union[str, Path], stretch: bool = False) -> CanonicalImage:
    path = Path(path)
    try:
        img = Image.open(path)
    except FileNotFoundError:
        raise ImageError(f"no such file: {path}") from None
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"unreadable image {path}: {exc}") from None
    with img:
        if img.format not in SUPPORTED_FORMATS:
            raise ImageError(f"unsupported format {img.format!r} for {path}; "
                             f"expected one of {', '.join(SUPPORTED_FORMATS)}")
        if getattr(img, "n_frames", 1) > 1:
            raise ImageError(f"{path}: multi-page images are not supported")
        pixels = to_grayscale(img)
        fmt = img.format
    if stretch:
        pixels = contrast_stretch(pixels)
    return CanonicalImage(pixels, {"source": str(path), "format": fmt, "stretch": stretch})


@dataclass(frozen=True)
class TileRect:
    x: int
    y: int
    w: int
    h: int
    row: int
    col: int


@dataclass(frozen=True)
class TilePlan:
    tile_w: int
    tile_h: int
    overlap: int
    rects: tuple[TileRect, ...]
    width: int = 0
    height: int = 0


def _axis_starts(length: int, tile: int, overlap: int) -> list[int]:
    if tile >= length:
        return [0]
    stride = tile - overlap
    starts = list(range(0, length - tile, stride))
    # last tile shifted inward so it ends exactly at the border
    starts.append(length - tile)
    return starts


def plan_tiles(width: int, height: int, tile_w: int = DEFAULT_TILE, tile_h: int = DEFAULT_TILE,
               overlap: int = DEFAULT_OVERLAP) -> TilePlan:
    """Row-major grid of equally sized tiles covering ``width x height``.

    Tiles larger than the image are cut down to the image size. Border tiles
    are shifted inward rather than shrunk, so their overlap with the
    neighbour can exceed ``overlap``.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    if tile_w < 1 or tile_h < 1:
        raise ValueError("tile dimensions must be >= 1")
    if not 0 <= overlap < min(tile_w, tile_h):
        raise ValueError(f"overlap must satisfy 0 <= overlap < min(tile_w, tile_h), got {overlap}")
    tw, th = min(tile_w, width), min(tile_h, height)
    xs = _axis_starts(width, tw, overlap)
    ys = _axis_starts(height, th, overlap)
    rects = tuple(TileRect(x, y, tw, th, r, c) for r, y in enumerate(ys) for c, x in enumerate(xs))
    return TilePlan(tw, th, overlap, rects, width, height)


def crop(img: CanonicalImage, plan: TilePlan) -> list[np.ndarray]:
    tiles = []
    for r in plan.rects:
        if r.x < 0 or r.y < 0 or r.x + r.w > img.width or r.y + r.h > img.height:
            raise ValueError(f"tile {r} exceeds image bounds {img.width}x{img.height}")
        tiles.append(img.pixels[r.y:r.y + r.h, r.x:r.x + r.w].copy())
    return tiles


def tile_filename(stem: str, rect: TileRect) -> str:
    return f"{stem}_r{rect.row}_c{rect.col}.png"


def write_tiles(img: CanonicalImage, plan: TilePlan, out_dir: Union[str, Path], stem: str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for rect, pixels in zip(plan.rects, crop(img, plan)):
        path = out_dir / tile_filename(stem, rect)
        Image.fromarray(pixels).save(path, format="PNG")
        paths.append(path)
    return paths

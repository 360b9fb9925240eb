"""Thermal preprocessing: radiometric-to-Celsius conversion, per-frame
normalization, multi-palette pseudo-color rendering, and CLAHE.

The four shipped palettes (ironbow, whitehot, rainbow, sepia) are 256-entry
RGB lookup tables stored as ASCII data files next to this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

PALETTE_NAMES = ("ironbow", "whitehot", "rainbow", "sepia")

ABSOLUTE_ZERO_C = -273.15


class ThermalError(ValueError):
    pass


class CalibrationError(ThermalError):
    pass


@dataclass(frozen=True)
class RadiometricFrame:
    """Raw 16-bit sensor counts plus the linear calibration mapping to degC."""

    raw: np.ndarray  # uint16, shape (H, W)
    calib_scale: float = 0.01  # degC per count (centikelvin convention)
    calib_offset: float = ABSOLUTE_ZERO_C

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.uint16)
        if raw.ndim != 2 or raw.size == 0:
            raise ThermalError("radiometric frame must be a non-empty 2-D array")
        object.__setattr__(self, "raw", raw)

    @property
    def height(self) -> int:
        return self.raw.shape[0]

    @property
    def width(self) -> int:
        return self.raw.shape[1]


@dataclass(frozen=True)
class TemperatureMap:
    temp_c: np.ndarray  # float64, shape (H, W)

    def __post_init__(self):
        t = np.asarray(self.temp_c, dtype=np.float64)
        if t.ndim != 2 or t.size == 0:
            raise ThermalError("temperature map must be a non-empty 2-D array")
        if not np.all(np.isfinite(t)):
            raise ThermalError("temperature map contains non-finite values")
        if np.any(t <= ABSOLUTE_ZERO_C):
            raise CalibrationError("temperature at or below absolute zero")
        object.__setattr__(self, "temp_c", t)

    @property
    def height(self) -> int:
        return self.temp_c.shape[0]

    @property
    def width(self) -> int:
        return self.temp_c.shape[1]


@dataclass(frozen=True)
class PaletteLut:
    name: str
    table: np.ndarray  # uint8, shape (256, 3)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.uint8)
        if table.shape != (256, 3):
            raise ThermalError("palette LUT must have exactly 256 RGB entries")
        object.__setattr__(self, "table", table)


@dataclass(frozen=True)
class RgbImage:
    pixels: np.ndarray  # uint8, shape (H, W, 3)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.size == 0:
            raise ThermalError("RGB image must have shape (H, W, 3)")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def radiometric_to_celsius(frame: RadiometricFrame) -> TemperatureMap:
    """Apply the linear calibration temp = raw * scale + offset."""
    temp = frame.raw.astype(np.float64) * frame.calib_scale + frame.calib_offset
    if np.any(temp <= ABSOLUTE_ZERO_C):
        raise CalibrationError("calibration yields temperatures at/below -273.15 degC")
    return TemperatureMap(temp_c=temp)


def celsius_to_radiometric(temp: TemperatureMap, calib_scale: float = 0.01,
                           calib_offset: float = ABSOLUTE_ZERO_C) -> RadiometricFrame:
    """Quantize a temperature map back to raw counts (inverse calibration)."""
    raw = np.rint((temp.temp_c - calib_offset) / calib_scale)
    raw = np.clip(raw, 0, 65535).astype(np.uint16)
    return RadiometricFrame(raw=raw, calib_scale=calib_scale, calib_offset=calib_offset)


def normalize_temperature(tmap: TemperatureMap) -> np.ndarray:
    """Per-frame min-max normalization to [0, 1]; constant frames map to 0.5."""
    t = tmap.temp_c
    lo = float(t.min())
    hi = float(t.max())
    if hi - lo <= 0.0:
        return np.full_like(t, 0.5)
    return (t - lo) / (hi - lo)


def apply_palette(gray: np.ndarray, lut: PaletteLut) -> RgbImage:
    """Colorize a [0, 1] grayscale raster through a 256-entry LUT."""
    g = np.asarray(gray, dtype=np.float64)
    if g.min() < 0.0 or g.max() > 1.0:
        raise ThermalError("grayscale input must lie in [0, 1]")
    idx = np.rint(g * 255.0).astype(np.intp)
    return RgbImage(pixels=lut.table[idx])


# ---------------------------------------------------------------------------
# Palette LUT construction and data files
# ---------------------------------------------------------------------------

def _interp_channel(xs, ys):
    return np.clip(np.rint(np.interp(np.arange(256), xs, ys)), 0, 255).astype(np.uint8)


def _build_palette(name: str) -> np.ndarray:
    i = np.arange(256, dtype=np.float64)
    if name == "whitehot":
        # Identity gray; injective by construction.
        g = i.astype(np.uint8)
        return np.stack([g, g, g], axis=1)
    if name == "rainbow":
        # Hue sweep blue (240 deg) -> red (0 deg), full saturation/value.
        hue = 240.0 * (1.0 - i / 255.0)
        rgb = np.empty((256, 3), dtype=np.uint8)
        for k, h in enumerate(hue):
            sector = int(h // 60.0) % 6
            f = h / 60.0 - math.floor(h / 60.0)
            v, p = 255.0, 0.0
            q = v * (1.0 - f)
            t = v * f
            r, g, b = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][sector]
            rgb[k] = (round(r), round(g), round(b))
        return rgb
    if name == "ironbow":
        xs = [0, 64, 128, 192, 255]
        r = _interp_channel(xs, [0, 96, 220, 255, 255])
        g = _interp_channel(xs, [0, 0, 60, 160, 255])
        b = _interp_channel(xs, [0, 130, 90, 20, 240])
        return np.stack([r, g, b], axis=1)
    if name == "sepia":
        # Gray through a fixed warm tint matrix.
        r = np.clip(np.rint(i * 1.351), 0, 255).astype(np.uint8)
        g = np.clip(np.rint(i * 1.203), 0, 255).astype(np.uint8)
        b = np.clip(np.rint(i * 0.937), 0, 255).astype(np.uint8)
        return np.stack([r, g, b], axis=1)
    raise ThermalError(f"unknown palette: {name}")


def palette_file_text(name: str) -> str:
    """Serialize a palette as the shipped 'index r g b' ASCII format."""
    table = _build_palette(name)
    lines = [f"{k} {r} {g} {b}" for k, (r, g, b) in enumerate(table)]
    return "\n".join(lines) + "\n"


def parse_palette_file(name: str, text: str) -> PaletteLut:
    table = np.zeros((256, 3), dtype=np.uint8)
    seen = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ThermalError(f"palette line {lineno}: expected 'index r g b'")
        k, r, g, b = map(int, parts)
        if not (0 <= k < 256):
            raise ThermalError(f"palette line {lineno}: index out of range")
        table[k] = (r, g, b)
        seen += 1
    if seen != 256:
        raise ThermalError(f"palette file has {seen} entries, expected 256")
    return PaletteLut(name=name, table=table)


def load_palette(name: str) -> PaletteLut:
    """Load one of the shipped palette LUTs from the package data directory."""
    if name not in PALETTE_NAMES:
        raise ThermalError(f"unknown palette: {name}")
    text = resources.files("pvpipeline").joinpath(f"data/palettes/{name}.txt").read_text()
    return parse_palette_file(name, text)


def load_all_palettes() -> list:
    return [load_palette(n) for n in PALETTE_NAMES]


# ---------------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------------

def _tile_mapping(tile: np.ndarray, clip_limit: float, n_bins: int) -> np.ndarray:
    """Equalization mapping for one tile: clipped histogram -> CDF -> levels.

    The mapping convention is m(v) = round(cdf(v) * (n_bins - 1)) with cdf
    inclusive of v, so an unclipped single tile reproduces global histogram
    equalization exactly.
    """
    hist = np.bincount(tile.ravel(), minlength=n_bins).astype(np.float64)
    n = hist.sum()
    if math.isfinite(clip_limit):
        ceiling = clip_limit * n / n_bins
        excess = np.maximum(hist - ceiling, 0.0).sum()
        hist = np.minimum(hist, ceiling)
        hist += excess / n_bins  # uniform redistribution, fixed order
    cdf = np.cumsum(hist) / hist.sum()
    return np.rint(cdf * (n_bins - 1))


def clahe(image: np.ndarray, tile_grid=(8, 8), clip_limit: float = 3.0,
          n_bins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on a single channel.

    Per-tile histograms are clipped at clip_limit x the uniform bin height
    with the excess redistributed uniformly; per-pixel values are bilinearly
    interpolated between the mappings of the four surrounding tile centers.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ThermalError("clahe operates on single-channel rasters")
    rows, cols = tile_grid
    h, w = img.shape
    if rows < 1 or cols < 1 or clip_limit < 1.0:
        raise ThermalError("tile grid must be >= 1x1 and clip_limit >= 1")
    if h < rows or w < cols:
        raise ThermalError("tile grid larger than image")
    img_u = np.clip(img, 0, n_bins - 1).astype(np.intp)

    row_edges = np.linspace(0, h, rows + 1).astype(int)
    col_edges = np.linspace(0, w, cols + 1).astype(int)
    maps = np.empty((rows, cols, n_bins))
    centers_r = np.empty(rows)
    centers_c = np.empty(cols)
    for i in range(rows):
        centers_r[i] = (row_edges[i] + row_edges[i + 1] - 1) / 2.0
        for j in range(cols):
            tile = img_u[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]]
            maps[i, j] = _tile_mapping(tile, clip_limit, n_bins)
    for j in range(cols):
        centers_c[j] = (col_edges[j] + col_edges[j + 1] - 1) / 2.0

    rr = np.arange(h, dtype=np.float64)
    cc = np.arange(w, dtype=np.float64)
    # Tile-center interpolation coordinates, clamped at the borders.
    i0 = np.clip(np.searchsorted(centers_r, rr, side="right") - 1, 0, rows - 1)
    j0 = np.clip(np.searchsorted(centers_c, cc, side="right") - 1, 0, cols - 1)
    i1 = np.minimum(i0 + 1, rows - 1)
    j1 = np.minimum(j0 + 1, cols - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fr = np.where(i1 > i0, (rr - centers_r[i0]) / (centers_r[i1] - centers_r[i0]), 0.0)
        fc = np.where(j1 > j0, (cc - centers_c[j0]) / (centers_c[j1] - centers_c[j0]), 0.0)
    fr = np.clip(fr, 0.0, 1.0)[:, None]
    fc = np.clip(fc, 0.0, 1.0)[None, :]

    vals = img_u
    m00 = maps[i0[:, None], j0[None, :], vals]
    m01 = maps[i0[:, None], j1[None, :], vals]
    m10 = maps[i1[:, None], j0[None, :], vals]
    m11 = maps[i1[:, None], j1[None, :], vals]
    out = (1 - fr) * ((1 - fc) * m00 + fc * m01) + fr * ((1 - fc) * m10 + fc * m11)
    return np.rint(out).astype(img.dtype if np.issubdtype(img.dtype, np.integer) else np.uint8)


def clahe_rgb(image: RgbImage, tile_grid=(8, 8), clip_limit: float = 3.0) -> RgbImage:
    """CLAHE on the luminance channel of an RGB image; chroma ratios kept."""
    px = image.pixels.astype(np.float64)
    lum = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    lum_u = np.rint(lum).astype(np.uint8)
    eq = clahe(lum_u, tile_grid=tile_grid, clip_limit=clip_limit).astype(np.float64)
    ratio = np.where(lum > 0, eq / np.maximum(lum, 1e-9), 1.0)
    out = np.clip(px * ratio[..., None], 0, 255).astype(np.uint8)
    return RgbImage(pixels=out)


# ---------------------------------------------------------------------------
# PGM / PPM I/O (binary, zero-dependency golden-test formats)
# ---------------------------------------------------------------------------

def write_pgm16(path, frame: RadiometricFrame) -> None:
    """16-bit big-endian binary PGM (P5, maxval 65535)."""
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii"))
        fh.write(frame.raw.astype(">u2").tobytes())


def read_pgm16(path, calib_scale: float = 0.01,
               calib_offset: float = ABSOLUTE_ZERO_C) -> RadiometricFrame:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, rest = data.split(b"\n", 1)
    if magic != b"P5":
        raise ThermalError("not a binary PGM (P5) file")
    dims, rest = rest.split(b"\n", 1)
    w, h = map(int, dims.split())
    maxval, rest = rest.split(b"\n", 1)
    if int(maxval) != 65535:
        raise ThermalError("expected 16-bit PGM (maxval 65535)")
    raw = np.frombuffer(rest[: w * h * 2], dtype=">u2").reshape(h, w).astype(np.uint16)
    return RadiometricFrame(raw=raw, calib_scale=calib_scale, calib_offset=calib_offset)


def write_ppm(path, image: RgbImage) -> None:
    """8-bit binary PPM (P6)."""
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(image.pixels.tobytes())


def read_ppm(path) -> RgbImage:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, rest = data.split(b"\n", 1)
    if magic != b"P6":
        raise ThermalError("not a binary PPM (P6) file")
    dims, rest = rest.split(b"\n", 1)
    w, h = map(int, dims.split())
    maxval, rest = rest.split(b"\n", 1)
    if int(maxval) != 255:
        raise ThermalError("expected 8-bit PPM")
    px = np.frombuffer(rest[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return RgbImage(pixels=px.copy())

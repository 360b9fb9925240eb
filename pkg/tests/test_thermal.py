import itertools

import numpy as np
import pytest

from pvpipeline.thermal import (ABSOLUTE_ZERO_C, CalibrationError,
                                PALETTE_NAMES, PaletteLut, RadiometricFrame,
                                RgbImage, TemperatureMap, ThermalError,
                                apply_palette, celsius_to_radiometric, clahe,
                                clahe_rgb, load_all_palettes, load_palette,
                                normalize_temperature, palette_file_text,
                                parse_palette_file, radiometric_to_celsius,
                                read_pgm16, read_ppm, write_pgm16, write_ppm)


def test_centikelvin_calibration_example():
    # 29815 centikelvin counts with scale 0.01 / offset -273.15 -> 25.00 degC
    frame = RadiometricFrame(raw=np.full((2, 2), 29815, dtype=np.uint16),
                             calib_scale=0.01, calib_offset=ABSOLUTE_ZERO_C)
    t = radiometric_to_celsius(frame)
    assert t.temp_c == pytest.approx(np.full((2, 2), 25.0))


def test_calibration_round_trip():
    rng = np.random.default_rng(0)
    raw = rng.integers(20000, 40000, size=(16, 12)).astype(np.uint16)
    frame = RadiometricFrame(raw=raw, calib_scale=0.01,
                             calib_offset=ABSOLUTE_ZERO_C)
    back = celsius_to_radiometric(radiometric_to_celsius(frame))
    assert np.array_equal(back.raw, raw)


def test_below_absolute_zero_rejected():
    frame = RadiometricFrame(raw=np.zeros((2, 2), dtype=np.uint16),
                             calib_scale=0.01, calib_offset=ABSOLUTE_ZERO_C)
    with pytest.raises(CalibrationError):
        radiometric_to_celsius(frame)


def test_normalize_constant_frame_maps_to_half():
    t = TemperatureMap(temp_c=np.full((4, 4), 30.0))
    assert np.all(normalize_temperature(t) == 0.5)


def test_normalize_range():
    t = TemperatureMap(temp_c=np.array([[10.0, 20.0], [30.0, 50.0]]))
    g = normalize_temperature(t)
    assert g.min() == 0.0 and g.max() == 1.0
    assert g[0, 1] == pytest.approx(0.25)


def test_apply_palette_indexing():
    table = np.arange(256, dtype=np.uint8)[:, None].repeat(3, axis=1)
    lut = PaletteLut(name="gray", table=table)
    gray = np.array([[0.0, 0.5, 1.0]])
    img = apply_palette(gray, lut)
    assert img.pixels[0, 0, 0] == 0
    assert img.pixels[0, 1, 0] == 128  # rint(0.5 * 255)
    assert img.pixels[0, 2, 0] == 255


def test_apply_palette_rejects_out_of_range():
    lut = load_palette("ironbow")
    with pytest.raises(ThermalError):
        apply_palette(np.array([[1.2]]), lut)


def test_palette_files_parse_and_round_trip():
    for name in PALETTE_NAMES:
        text = palette_file_text(name)
        lut = parse_palette_file(name, text)
        assert lut.table.shape == (256, 3)
        packaged = load_palette(name)
        assert np.array_equal(lut.table, packaged.table)


def test_palettes_pairwise_distinct():
    luts = {l.name: l.table for l in load_all_palettes()}
    assert set(luts) == set(PALETTE_NAMES)
    for a, b in itertools.combinations(PALETTE_NAMES, 2):
        differing = np.any(luts[a] != luts[b], axis=1).sum()
        assert differing >= 254, (a, b, differing)


def test_whitehot_monotone_luminance():
    lut = load_palette("whitehot")
    lum = lut.table.astype(float) @ [0.299, 0.587, 0.114]
    assert np.all(np.diff(lum) >= 0)


def _global_he_oracle(img: np.ndarray) -> np.ndarray:
    """Classic histogram equalization: m(v) = round(cdf_inclusive(v)*255)."""
    hist = np.bincount(img.ravel(), minlength=256)
    cdf = np.cumsum(hist) / img.size
    return np.rint(cdf * 255).astype(np.uint8)[img]


def test_clahe_single_tile_unclipped_equals_global_he():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(40, 56)).astype(np.uint8)
    out = clahe(img, tile_grid=(1, 1), clip_limit=float("inf"))
    assert np.array_equal(out, _global_he_oracle(img))


def test_clahe_clip_limit_bounds_transfer_slope():
    # A heavily peaked histogram: clipping caps the equalization slope, so
    # the clipped transfer stays much closer to identity than the unclipped.
    rng = np.random.default_rng(2)
    img = np.full((64, 64), 100, dtype=np.uint8)
    img[rng.uniform(size=img.shape) < 0.02] = 200
    unclipped = clahe(img, tile_grid=(1, 1), clip_limit=float("inf"))
    clipped = clahe(img, tile_grid=(1, 1), clip_limit=1.5)
    dev_unclipped = np.abs(unclipped.astype(int) - img.astype(int)).mean()
    dev_clipped = np.abs(clipped.astype(int) - img.astype(int)).mean()
    assert dev_clipped < dev_unclipped


def test_clahe_output_domain_and_determinism():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, size=(32, 48)).astype(np.uint8)
    a = clahe(img, tile_grid=(4, 4), clip_limit=2.0)
    b = clahe(img, tile_grid=(4, 4), clip_limit=2.0)
    assert np.array_equal(a, b)
    assert a.dtype == np.uint8


def test_clahe_validates_inputs():
    img = np.zeros((8, 8), dtype=np.uint8)
    with pytest.raises(ThermalError):
        clahe(img, tile_grid=(0, 2))
    with pytest.raises(ThermalError):
        clahe(img, clip_limit=0.5)
    with pytest.raises(ThermalError):
        clahe(np.zeros((4, 4, 3), dtype=np.uint8))
    with pytest.raises(ThermalError):
        clahe(np.zeros((2, 2), dtype=np.uint8), tile_grid=(4, 4))


def test_clahe_rgb_preserves_shape_and_adds_contrast():
    rng = np.random.default_rng(4)
    base = rng.integers(90, 110, size=(32, 32, 3)).astype(np.uint8)
    out = clahe_rgb(RgbImage(pixels=base), tile_grid=(2, 2))
    assert out.pixels.shape == base.shape
    assert int(out.pixels.max()) - int(out.pixels.min()) \
        >= int(base.max()) - int(base.min())


def test_pgm16_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    raw = rng.integers(0, 65535, size=(10, 14)).astype(np.uint16)
    frame = RadiometricFrame(raw=raw, calib_scale=0.01,
                             calib_offset=ABSOLUTE_ZERO_C)
    path = tmp_path / "frame.pgm"
    write_pgm16(path, frame)
    back = read_pgm16(path)
    assert np.array_equal(back.raw, raw)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    px = rng.integers(0, 256, size=(9, 7, 3)).astype(np.uint8)
    path = tmp_path / "img.ppm"
    write_ppm(path, RgbImage(pixels=px))
    back = read_ppm(path)
    assert np.array_equal(back.pixels, px)

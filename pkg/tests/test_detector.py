from collections import deque

import numpy as np
import pytest

from pvpipeline.detector import (BoundingBox, Detection, DetectorError,
                                 ThresholdDetectorConfig,
                                 detection_confidence, detect)
from pvpipeline.thermal import TemperatureMap


def _bfs_components_oracle(mask: np.ndarray):
    """Independent 8-connected component labelling by breadth-first search."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            comp = []
            queue = deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                comp.append((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if (0 <= ny < h and 0 <= nx < w and mask[ny, nx]
                                and not seen[ny, nx]):
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            comps.append(frozenset(comp))
    return set(comps)


def _random_frame(rng, shape=(32, 40), n_blobs=3, ambient=25.0):
    img = np.full(shape, ambient)
    for _ in range(n_blobs):
        cy = rng.uniform(3, shape[0] - 3)
        cx = rng.uniform(3, shape[1] - 3)
        peak = rng.uniform(5.0, 12.0)
        sigma = rng.uniform(0.8, 2.5)
        yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
        img += peak * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2)
                             / (2 * sigma ** 2))
    return img


def test_detections_match_bfs_component_oracle():
    rng = np.random.default_rng(0)
    config = ThresholdDetectorConfig(delta_c=4.0, min_blob_px=3)
    for _ in range(20):
        img = _random_frame(rng)
        temp = TemperatureMap(temp_c=img)
        dets = detect(temp, config)
        ambient = float(np.median(img))
        mask = img > ambient + config.delta_c
        comps = [c for c in _bfs_components_oracle(mask)
                 if len(c) >= config.min_blob_px]
        assert len(dets) == len(comps)
        # Each detection bbox must exactly bound one oracle component.
        boxes = {(float(min(x for _, x in c)), float(min(y for y, _ in c)),
                  float(max(x for _, x in c) + 1), float(max(y for y, _ in c) + 1))
                 for c in comps}
        for d in dets:
            key = (d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max)
            assert key in boxes


def test_min_blob_px_filters_small_components():
    img = np.full((16, 16), 25.0)
    img[4, 4] = 40.0  # single hot pixel
    dets = detect(TemperatureMap(temp_c=img),
                  ThresholdDetectorConfig(delta_c=4.0, min_blob_px=3))
    assert dets == []
    dets = detect(TemperatureMap(temp_c=img),
                  ThresholdDetectorConfig(delta_c=4.0, min_blob_px=1))
    assert len(dets) == 1
    assert dets[0].peak_temp_c == pytest.approx(40.0)


def test_uniform_frame_yields_no_detections():
    img = np.full((16, 16), 25.0)
    assert detect(TemperatureMap(temp_c=img)) == []


def test_confidence_monotone_in_excess_and_area():
    config = ThresholdDetectorConfig()
    c1 = detection_confidence(5.0, 10, config)
    c2 = detection_confidence(8.0, 10, config)
    c3 = detection_confidence(5.0, 40, config)
    assert 0.0 < c1 < c2 <= 1.0
    assert c1 < c3
    assert detection_confidence(8.0, 10, config) == pytest.approx(
        detection_confidence(8.0, 10, config))


def test_bbox_and_detection_validation():
    with pytest.raises(DetectorError):
        BoundingBox(x_min=2.0, y_min=0.0, x_max=1.0, y_max=1.0)
    box = BoundingBox(x_min=0.0, y_min=0.0, x_max=2.0, y_max=3.0)
    assert box.area == 6.0
    assert box.center == (1.0, 1.5)
    with pytest.raises(DetectorError):
        Detection(bbox=box, class_id="x", confidence=1.5, peak_temp_c=30.0)
    d = Detection(bbox=box, class_id="x", confidence=0.4, peak_temp_c=30.0)
    assert d.with_confidence(0.9).confidence == 0.9


def test_detection_order_deterministic():
    rng = np.random.default_rng(1)
    img = _random_frame(rng, n_blobs=4)
    a = detect(TemperatureMap(temp_c=img))
    b = detect(TemperatureMap(temp_c=img))
    assert [d.bbox for d in a] == [d.bbox for d in b]

import numpy as np
import pytest

from pvpipeline.dedup import (DbscanParams, DedupError, GroundTruthPoint,
                              NOISE, convex_hull, dbscan_labels, deduplicate,
                              dup_fp_rate, merge_cluster)
from pvpipeline.detector import BoundingBox, Detection
from pvpipeline.geodesy import (EnuOffset, GeoPoint, GeoPolygon, enu_to_geo,
                                geo_to_enu, haversine_distance)
from pvpipeline.geoprojection import ProjectedDetection

ORIGIN = GeoPoint(lat=49.407, lon=26.984)


def _pt(east, north):
    return enu_to_geo(ORIGIN, EnuOffset(east=east, north=north))


def _proj(east, north, class_id="hotspot", conf=0.8, temp=40.0, half=0.2,
          media="a.jpg"):
    verts = tuple(_pt(east + dx, north + dy)
                  for dx, dy in ((-half, -half), (half, -half),
                                 (half, half), (-half, half)))
    det = Detection(bbox=BoundingBox(x_min=0, y_min=0, x_max=2, y_max=2),
                    class_id=class_id, confidence=conf, peak_temp_c=temp)
    return ProjectedDetection(detection=det, polygon=GeoPolygon(vertices=verts),
                              centroid=_pt(east, north), frame_id="f",
                              timestamp="2025-09-30T10:00:00Z",
                              media_rgb=media, media_tiff=media + ".tiff")


def _components_oracle(points, epsilon):
    """For min_pts=2 DBSCAN reduces to connected components of the
    epsilon-graph, with isolated points as noise."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    isolated = [True] * n
    for i in range(n):
        for j in range(i + 1, n):
            if haversine_distance(points[i], points[j]) <= epsilon:
                isolated[i] = isolated[j] = False
                parent[find(i)] = find(j)
    comps = {}
    for i in range(n):
        if not isolated[i]:
            comps.setdefault(find(i), set()).add(i)
    noise = {i for i in range(n) if isolated[i]}
    return {frozenset(c) for c in comps.values()}, noise


def _partition(labels):
    comps = {}
    noise = set()
    for i, lab in enumerate(labels):
        if lab == NOISE:
            noise.add(i)
        else:
            comps.setdefault(lab, set()).add(i)
    return {frozenset(c) for c in comps.values()}, noise


def test_dbscan_matches_component_oracle_over_epsilon_sweep():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        points = [_pt(float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10)))
                  for _ in range(n)]
        for epsilon in (0.3, 1.0, 3.0, 8.0):
            got = _partition(dbscan_labels(points, epsilon, 2))
            assert got == _components_oracle(points, epsilon)


def test_dbscan_border_points_min_pts_3():
    # Chain at 0, 1, 2 m with epsilon 1.2: only the middle point is core,
    # the ends are border points that join its cluster.
    points = [_pt(0.0, 0.0), _pt(1.0, 0.0), _pt(2.0, 0.0)]
    labels = dbscan_labels(points, 1.2, 3)
    assert labels == [0, 0, 0]
    # Remove the middle point: nobody is core any more.
    labels = dbscan_labels([points[0], points[2]], 1.2, 3)
    assert labels == [NOISE, NOISE]


def test_dbscan_permutation_invariance():
    rng = np.random.default_rng(1)
    points = [_pt(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
              for _ in range(8)]
    base = _partition(dbscan_labels(points, 1.5, 2))
    for _ in range(10):
        perm = rng.permutation(len(points))
        labels = dbscan_labels([points[i] for i in perm], 1.5, 2)
        comps, noise = _partition(labels)
        remapped = ({frozenset(int(perm[i]) for i in c) for c in comps},
                    {int(perm[i]) for i in noise})
        assert remapped == base


def test_convex_hull_known_square():
    pts = [(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5), (0.2, 0.7)]
    hull = convex_hull(pts)
    assert set(hull) == {(0, 0), (1, 0), (1, 1), (0, 1)}
    assert len(hull) == 4


def test_deduplicate_merges_near_duplicates():
    dets = [
        _proj(0.0, 0.0, conf=0.7, temp=41.0),
        _proj(0.3, 0.1, conf=0.9, temp=39.0, media="b.jpg"),
        _proj(-0.2, 0.2, conf=0.8, temp=43.5),
        _proj(8.0, 8.0, conf=0.6, temp=38.0),
    ]
    events = deduplicate(dets, DbscanParams(epsilon=1.0, min_pts=2))
    assert len(events) == 2
    assert [e.id for e in events] == ["clu_000", "clu_001"]
    merged = min(events, key=lambda e: haversine_distance(e.centroid, ORIGIN))
    assert set(merged.member_ids) == {0, 1, 2}
    assert merged.confidence == pytest.approx(0.9)
    assert merged.peak_temp_c == pytest.approx(43.5)
    assert merged.media_rgb == "b.jpg"  # best-confidence member's media
    assert merged.hull_excess_area_m2 > 0.0
    # The merged hull must contain every member centroid.
    for i in (0, 1, 2):
        assert haversine_distance(merged.centroid, dets[i].centroid) < 1.0


def test_deduplicate_partitions_by_class():
    dets = [_proj(0.0, 0.0, class_id="hotspot"),
            _proj(0.1, 0.0, class_id="diode_fault")]
    events = deduplicate(dets, DbscanParams(epsilon=1.0, min_pts=2))
    assert len(events) == 2
    assert sorted(e.class_id for e in events) == ["diode_fault", "hotspot"]


def test_deduplicate_order_invariant_output():
    rng = np.random.default_rng(2)
    dets = [_proj(float(rng.uniform(-6, 6)), float(rng.uniform(-6, 6)),
                  conf=float(rng.uniform(0.3, 0.95))) for _ in range(12)]
    base = deduplicate(dets)
    for _ in range(5):
        perm = list(rng.permutation(len(dets)))
        events = deduplicate([dets[i] for i in perm])
        assert len(events) == len(base)
        for got, want in zip(events, base):
            assert got.id == want.id
            assert got.class_id == want.class_id
            assert haversine_distance(got.centroid, want.centroid) < 1e-6
            assert got.confidence == pytest.approx(want.confidence)


def test_merge_cluster_collinear_fallback():
    # Degenerate members whose vertices all lie on one line keep the best
    # member's polygon instead of a hull.
    def line_proj(shift, conf):
        verts = tuple(_pt(x + shift, 0.0) for x in (-0.2, -0.1, 0.1, 0.2))
        det = Detection(bbox=BoundingBox(x_min=0, y_min=0, x_max=1, y_max=1),
                        class_id="hotspot", confidence=conf, peak_temp_c=40.0)
        return ProjectedDetection(detection=det,
                                  polygon=GeoPolygon(vertices=verts),
                                  centroid=_pt(shift, 0.0), frame_id="f",
                                  timestamp="2025-09-30T10:00:00Z")

    a, b = line_proj(0.0, 0.5), line_proj(0.05, 0.9)
    event = merge_cluster([a, b], [0, 1], "clu_000")
    assert event.polygon == b.polygon
    assert event.hull_excess_area_m2 == 0.0


# ---------------------------------------------------------------------------
# Duplicate false-positive rate
# ---------------------------------------------------------------------------

def test_dup_fp_rate_hand_cases():
    gt = [GroundTruthPoint(position=_pt(0.0, 0.0), class_id="hotspot")]
    items = [_proj(0.1, 0.0), _proj(-0.1, 0.1), _proj(0.0, -0.2)]
    # Three detections of one defect: two duplicates among three items.
    assert dup_fp_rate(items, gt) == pytest.approx(2.0 / 3.0)
    assert dup_fp_rate(items[:1], gt) == 0.0
    assert dup_fp_rate([], gt) == 0.0


def test_dup_fp_rate_unmatched_and_denominator():
    gt = [GroundTruthPoint(position=_pt(0.0, 0.0), class_id="hotspot")]
    items = [_proj(0.1, 0.0), _proj(0.0, 0.1), _proj(50.0, 50.0)]
    # One duplicate out of three items, or out of two false positives.
    assert dup_fp_rate(items, gt, denominator="total") == pytest.approx(1 / 3)
    assert dup_fp_rate(items, gt, denominator="fp") == pytest.approx(1 / 2)


def test_dup_fp_rate_class_awareness():
    gt = [GroundTruthPoint(position=_pt(0.0, 0.0), class_id="hotspot")]
    items = [_proj(0.1, 0.0, class_id="diode_fault"),
             _proj(0.0, 0.1, class_id="diode_fault")]
    assert dup_fp_rate(items, gt, class_aware=True) == 0.0
    assert dup_fp_rate(items, gt, class_aware=False) == pytest.approx(0.5)


def test_dedup_validation_errors():
    with pytest.raises(DedupError):
        DbscanParams(epsilon=0.0)
    with pytest.raises(DedupError):
        DbscanParams(min_pts=0)
    with pytest.raises(DedupError):
        dup_fp_rate([], [], match_radius=0.0)
    with pytest.raises(DedupError):
        dup_fp_rate([], [], denominator="bogus")

"""Geo-spatial de-duplication: DBSCAN over haversine distances between
detection centroids, per-class cluster merging into canonical defect
events, and the duplicate-induced false-positive (Dup-FP) metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geodesy import (EnuOffset, GeoPoint, GeoPolygon, enu_to_geo, geo_to_enu,
                      haversine_distance, polygon_centroid)
from .geoprojection import ProjectedDetection

NOISE = -1


class DedupError(ValueError):
    pass


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float = 1.0  # meters
    min_pts: int = 2

    def __post_init__(self):
        if self.epsilon <= 0:
            raise DedupError("epsilon must be positive")
        if self.min_pts < 1:
            raise DedupError("min_pts must be at least 1")


@dataclass(frozen=True)
class DefectEvent:
    id: str
    class_id: str
    confidence: float       # max over members
    peak_temp_c: float      # max over members
    centroid: GeoPoint
    polygon: GeoPolygon
    member_ids: tuple       # indices into the input detection list
    media_rgb: str = ""
    media_tiff: str = ""
    hull_excess_area_m2: float = 0.0  # hull-minus-union over-approximation bound


def dbscan_labels(points, epsilon: float, min_pts: int) -> list:
    """Standard DBSCAN over a list of GeoPoints with haversine distances.

    Labels are cluster indices (contiguous from 0) or NOISE. Core-point
    expansion proceeds in input order, so labels are deterministic.
    """
    n = len(points)
    if n == 0:
        return []
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = haversine_distance(points[i], points[j])
            dist[i, j] = dist[j, i] = d
    neighbors = [np.nonzero(dist[i] <= epsilon)[0] for i in range(n)]

    labels = [None] * n
    cluster = 0
    for i in range(n):
        if labels[i] is not None:
            continue
        if neighbors[i].size < min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = list(neighbors[i])
        k = 0
        while k < len(queue):
            j = queue[k]
            k += 1
            if labels[j] == NOISE:
                labels[j] = cluster  # border point
            if labels[j] is not None:
                continue
            labels[j] = cluster
            if neighbors[j].size >= min_pts:
                queue.extend(neighbors[j])
        cluster += 1
    return labels


def dbscan_haversine(detections, params: DbscanParams) -> list:
    return dbscan_labels([d.centroid for d in detections], params.epsilon,
                         params.min_pts)


def convex_hull(points):
    """Andrew's monotone chain on 2-D (x, y) tuples; returns hull CCW."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def half(iterable):
        chain = []
        for p in iterable:
            while len(chain) >= 2:
                ox, oy = chain[-2]
                ax, ay = chain[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    return lower[:-1] + upper[:-1]


def _polygon_area(xy) -> float:
    area = 0.0
    n = len(xy)
    for i in range(n):
        x0, y0 = xy[i]
        x1, y1 = xy[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return abs(area) / 2.0


def merge_cluster(members, member_ids, event_id: str) -> DefectEvent:
    """Merge detections of one cluster into a canonical event.

    Geometry is the convex hull of all member polygon vertices on the local
    ENU plane (a robust surrogate for the exact polygon union; members are
    near-coincident quads). Confidence and peak temperature take the max.
    """
    if not members:
        raise DedupError("cannot merge an empty cluster")
    anchor = members[0].polygon.vertices[0]
    all_xy = []
    for det in members:
        for v in det.polygon.vertices:
            off = geo_to_enu(anchor, v)
            all_xy.append((off.east, off.north))
    hull = convex_hull(all_xy)
    if len(hull) < 3:
        # Collinear degenerate geometry: keep the best member's polygon.
        best = max(members, key=lambda d: d.detection.confidence)
        hull_poly = best.polygon
        excess = 0.0
    else:
        hull_poly = GeoPolygon(vertices=tuple(
            enu_to_geo(anchor, EnuOffset(east=x, north=y)) for x, y in hull))
        member_area = max(_polygon_area(
            [(geo_to_enu(anchor, v).east, geo_to_enu(anchor, v).north)
             for v in det.polygon.vertices]) for det in members)
        excess = max(_polygon_area(hull) - member_area, 0.0)
    centroid, _ = polygon_centroid(hull_poly)
    best = max(members, key=lambda d: d.detection.confidence)
    return DefectEvent(
        id=event_id,
        class_id=best.detection.class_id,
        confidence=max(d.detection.confidence for d in members),
        peak_temp_c=max(d.detection.peak_temp_c for d in members),
        centroid=centroid,
        polygon=hull_poly,
        member_ids=tuple(member_ids),
        media_rgb=best.media_rgb,
        media_tiff=best.media_tiff,
        hull_excess_area_m2=excess,
    )


def deduplicate(detections, params: DbscanParams = DbscanParams()) -> list:
    """Consolidate per-frame detections into unique defect events.

    Detections are partitioned by class and clustered independently; noise
    points become singleton events. Event ids are assigned after sorting
    clusters by (class, centroid lat, centroid lon).
    """
    groups = {}
    for idx, det in enumerate(detections):
        groups.setdefault(det.detection.class_id, []).append(idx)

    raw_events = []
    for class_id in sorted(groups):
        idxs = groups[class_id]
        members = [detections[i] for i in idxs]
        labels = dbscan_haversine(members, params)
        clusters = {}
        singletons = []
        for local, lab in enumerate(labels):
            if lab == NOISE:
                singletons.append(local)
            else:
                clusters.setdefault(lab, []).append(local)
        for lab in sorted(clusters):
            local_ids = clusters[lab]
            raw_events.append(([members[i] for i in local_ids],
                               [idxs[i] for i in local_ids]))
        for local in singletons:
            raw_events.append(([members[local]], [idxs[local]]))

    merged = [merge_cluster(m, ids, "tmp") for m, ids in raw_events]
    order = sorted(range(len(merged)),
                   key=lambda i: (merged[i].class_id, merged[i].centroid.lat,
                                  merged[i].centroid.lon))
    events = []
    for rank, i in enumerate(order):
        e = merged[i]
        events.append(DefectEvent(
            id=f"clu_{rank:03d}", class_id=e.class_id, confidence=e.confidence,
            peak_temp_c=e.peak_temp_c, centroid=e.centroid, polygon=e.polygon,
            member_ids=e.member_ids, media_rgb=e.media_rgb,
            media_tiff=e.media_tiff, hull_excess_area_m2=e.hull_excess_area_m2))
    return events


@dataclass(frozen=True)
class GroundTruthPoint:
    """A geo-located ground-truth defect for metric computation."""
    position: GeoPoint
    class_id: str


def dup_fp_rate(items, ground_truth, match_radius: float = 1.0,
                class_aware: bool = True, denominator: str = "total") -> float:
    """Duplicate-induced false-positive rate.

    Items (detections or events, anything with .centroid and a class) are
    greedily matched to the nearest ground-truth defect within match_radius
    (same class when class_aware). A ground truth with m >= 1 matches
    contributes m - 1 duplicate FPs.

    denominator: "total" divides by all items (default); "fp" divides by
    the number of unmatched-or-duplicate items (false positives only).
    """
    if match_radius <= 0:
        raise DedupError("match_radius must be positive")
    if denominator not in ("total", "fp"):
        raise DedupError("denominator must be 'total' or 'fp'")
    if not items:
        return 0.0
    match_counts = [0] * len(ground_truth)
    unmatched = 0
    for item in items:
        cls = item.class_id if hasattr(item, "class_id") else item.detection.class_id
        best = None
        best_d = match_radius
        for gi, gt in enumerate(ground_truth):
            if class_aware and gt.class_id != cls:
                continue
            d = haversine_distance(item.centroid, gt.position)
            if d <= best_d:
                best = gi
                best_d = d
        if best is None:
            unmatched += 1
        else:
            match_counts[best] += 1
    duplicates = sum(max(m - 1, 0) for m in match_counts)
    if denominator == "total":
        return duplicates / len(items)
    fps = duplicates + unmatched
    return duplicates / fps if fps else 0.0

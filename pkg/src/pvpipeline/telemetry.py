"""Relevance-only telemetry: bit-exact JSON mission payloads, KML export,
pluggable publish sinks (file / HTTP POST), and raw-vs-telemetry bandwidth
accounting.

The JSON serializer formats every number explicitly (6 decimal places for
coordinates, 2 for confidence and temperature) and emits keys in a fixed
order with no insignificant whitespace, so payload bytes are identical
across runs and platforms.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
import urllib.error
import urllib.request
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .dedup import DefectEvent

HTTP_ATTEMPTS = 3
HTTP_BACKOFF_BASE_S = 0.5
KML_NS = "http://www.opengis.net/kml/2.2"


class TelemetryError(ValueError):
    pass


class DeliveryError(RuntimeError):
    """Raised when a sink fails after all retries; carries the payload."""

    def __init__(self, message: str, payload: bytes):
        super().__init__(message)
        self.payload = payload


@dataclass(frozen=True)
class MediaRef:
    rgb: str = ""
    tiff: str = ""


@dataclass(frozen=True)
class DetectionRecord:
    """One detection record inside a mission report."""
    id: str
    class_id: str
    conf: float
    temp_c: float
    centroid: tuple       # (lat, lon)
    polygon: tuple        # ((lat, lon), ...)
    media: MediaRef = MediaRef()

    def __post_init__(self):
        if not self.id:
            raise TelemetryError("record id must be non-empty")
        if len(self.polygon) < 3:
            raise TelemetryError("polygon needs at least 3 vertices")


@dataclass(frozen=True)
class MissionReport:
    site_id: str
    uav: str
    ts_utc: str
    detections: tuple = ()

    def __post_init__(self):
        parse_ts_utc(self.ts_utc)  # validates
        ids = [d.id for d in self.detections]
        if len(ids) != len(set(ids)):
            raise TelemetryError("duplicate detection ids in report")


def parse_ts_utc(ts: str) -> datetime:
    if not ts.endswith("Z"):
        raise TelemetryError(f"ts_utc must end with 'Z': {ts!r}")
    try:
        return datetime.strptime(ts, "%Y-%m-%dT%H:%M:%SZ").replace(
            tzinfo=timezone.utc)
    except ValueError as exc:
        raise TelemetryError(f"ts_utc not RFC-3339 UTC: {ts!r}") from exc


def event_to_record(event: DefectEvent) -> DetectionRecord:
    return DetectionRecord(
        id=event.id,
        class_id=event.class_id,
        conf=event.confidence,
        temp_c=event.peak_temp_c,
        centroid=(event.centroid.lat, event.centroid.lon),
        polygon=tuple((v.lat, v.lon) for v in event.polygon.vertices),
        media=MediaRef(rgb=event.media_rgb, tiff=event.media_tiff),
    )


def build_report(site_id: str, uav: str, ts_utc: str, events) -> MissionReport:
    return MissionReport(site_id=site_id, uav=uav, ts_utc=ts_utc,
                         detections=tuple(event_to_record(e) for e in events))


def _coord(value: float) -> str:
    return f"{value:.6f}"


def _pair(lat: float, lon: float) -> str:
    return f"[{_coord(lat)},{_coord(lon)}]"


def _record_json(rec: DetectionRecord) -> str:
    polygon = ",".join(_pair(lat, lon) for lat, lon in rec.polygon)
    return ('{'
            f'"id":{json.dumps(rec.id)},'
            f'"class":{json.dumps(rec.class_id)},'
            f'"conf":{rec.conf:.2f},'
            f'"temp_C":{rec.temp_c:.2f},'
            f'"centroid_wgs84":{_pair(rec.centroid[0], rec.centroid[1])},'
            f'"polygon_wgs84":[{polygon}],'
            f'"media":{{"rgb":{json.dumps(rec.media.rgb)},'
            f'"tiff":{json.dumps(rec.media.tiff)}}}'
            '}')


def to_json(report: MissionReport) -> bytes:
    detections = ",".join(_record_json(r) for r in report.detections)
    text = ('{'
            f'"site_id":{json.dumps(report.site_id)},'
            f'"uav":{json.dumps(report.uav)},'
            f'"ts_utc":{json.dumps(report.ts_utc)},'
            f'"detections":[{detections}]'
            '}')
    return text.encode("utf-8")


def parse_report(payload: bytes) -> MissionReport:
    obj = json.loads(payload.decode("utf-8"))
    records = tuple(
        DetectionRecord(
            id=d["id"], class_id=d["class"], conf=d["conf"],
            temp_c=d["temp_C"],
            centroid=tuple(d["centroid_wgs84"]),
            polygon=tuple(tuple(p) for p in d["polygon_wgs84"]),
            media=MediaRef(rgb=d["media"]["rgb"], tiff=d["media"]["tiff"]))
        for d in obj["detections"])
    return MissionReport(site_id=obj["site_id"], uav=obj["uav"],
                         ts_utc=obj["ts_utc"], detections=records)


def to_kml(report: MissionReport) -> bytes:
    ET.register_namespace("", KML_NS)
    kml = ET.Element(f"{{{KML_NS}}}kml")
    doc = ET.SubElement(kml, f"{{{KML_NS}}}Document")
    name = ET.SubElement(doc, f"{{{KML_NS}}}name")
    name.text = f"{report.site_id} {report.ts_utc}"
    for rec in report.detections:
        pm = ET.SubElement(doc, f"{{{KML_NS}}}Placemark")
        pm_name = ET.SubElement(pm, f"{{{KML_NS}}}name")
        pm_name.text = rec.id
        desc = ET.SubElement(pm, f"{{{KML_NS}}}description")
        desc.text = (f"class={rec.class_id} conf={rec.conf:.2f} "
                     f"temp_C={rec.temp_c:.2f}")
        poly = ET.SubElement(pm, f"{{{KML_NS}}}Polygon")
        outer = ET.SubElement(poly, f"{{{KML_NS}}}outerBoundaryIs")
        ring = ET.SubElement(outer, f"{{{KML_NS}}}LinearRing")
        coords = ET.SubElement(ring, f"{{{KML_NS}}}coordinates")
        ring_pts = list(rec.polygon) + [rec.polygon[0]]  # closed ring
        coords.text = " ".join(
            f"{_coord(lon)},{_coord(lat)},0" for lat, lon in ring_pts)
    return (b'<?xml version="1.0" encoding="UTF-8"?>\n'
            + ET.tostring(kml, encoding="unicode").encode("utf-8"))


@dataclass
class BandwidthLedger:
    raw_bytes: int = 0
    telemetry_bytes: int = 0
    mission_duration_s: float = 0.0

    def record_frame(self, width: int, height: int):
        """Raw-size model: 16-bit thermal plus 8-bit RGB, uncompressed."""
        self.raw_bytes += width * height * 2 + width * height * 3

    def record_publish(self, nbytes: int):
        if nbytes < 0:
            raise TelemetryError("payload size cannot be negative")
        self.telemetry_bytes += nbytes


def bandwidth_savings(ledger: BandwidthLedger) -> float:
    if ledger.raw_bytes <= 0:
        raise TelemetryError("bandwidth savings undefined: raw_bytes == 0")
    return 1.0 - ledger.telemetry_bytes / ledger.raw_bytes


class FileSink:
    """Writes payloads atomically (temp file + rename) to a fixed path."""

    def __init__(self, path: str):
        self.path = path

    def send(self, payload: bytes):
        directory = os.path.dirname(os.path.abspath(self.path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class HttpSink:
    """POSTs payloads as application/json with exponential-backoff retries."""

    def __init__(self, url: str, attempts: int = HTTP_ATTEMPTS,
                 backoff_base_s: float = HTTP_BACKOFF_BASE_S,
                 timeout_s: float = 5.0, sleep=time.sleep):
        self.url = url
        self.attempts = attempts
        self.backoff_base_s = backoff_base_s
        self.timeout_s = timeout_s
        self._sleep = sleep

    def send(self, payload: bytes):
        last_error = None
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff_base_s * 2 ** (attempt - 1))
            req = urllib.request.Request(
                self.url, data=payload, method="POST",
                headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout_s) as r:
                    if 200 <= r.status < 300:
                        return
                    last_error = f"HTTP status {r.status}"
            except (urllib.error.URLError, OSError) as exc:
                last_error = str(exc)
        raise DeliveryError(
            f"delivery failed after {self.attempts} attempts: {last_error}",
            payload)


def publish(report: MissionReport, sink, ledger: BandwidthLedger = None) -> bytes:
    payload = to_json(report)
    sink.send(payload)
    if ledger is not None:
        ledger.record_publish(len(payload))
    return payload


def detection_record_lines(projected) -> bytes:
    """Line-delimited interchange format for projected detections,
    consumed by the offline `dedup` command."""
    lines = []
    for pd in projected:
        obj = {
            "frame_id": pd.frame_id,
            "timestamp": pd.timestamp,
            "class": pd.detection.class_id,
            "conf": pd.detection.confidence,
            "temp_C": pd.detection.peak_temp_c,
            "bbox": [pd.detection.bbox.x_min, pd.detection.bbox.y_min,
                     pd.detection.bbox.x_max, pd.detection.bbox.y_max],
            "centroid_wgs84": [pd.centroid.lat, pd.centroid.lon],
            "polygon_wgs84": [[v.lat, v.lon] for v in pd.polygon.vertices],
            "media": {"rgb": pd.media_rgb, "tiff": pd.media_tiff},
        }
        lines.append(json.dumps(obj, sort_keys=True))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def parse_detection_record_lines(data: bytes):
    """Inverse of detection_record_lines; raises with 1-based line numbers."""
    from .detector import BoundingBox, Detection
    from .geodesy import GeoPoint, GeoPolygon
    from .geoprojection import ProjectedDetection

    out = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            bbox = BoundingBox(*obj["bbox"])
            det = Detection(bbox=bbox, class_id=obj["class"],
                            confidence=obj["conf"], peak_temp_c=obj["temp_C"])
            poly = GeoPolygon(vertices=tuple(
                GeoPoint(lat=lat, lon=lon, alt=0.0)
                for lat, lon in obj["polygon_wgs84"]))
            lat, lon = obj["centroid_wgs84"]
            out.append(ProjectedDetection(
                detection=det, polygon=poly,
                centroid=GeoPoint(lat=lat, lon=lon, alt=0.0),
                frame_id=obj.get("frame_id", 0),
                timestamp=obj.get("timestamp", 0.0),
                media_rgb=obj.get("media", {}).get("rgb", ""),
                media_tiff=obj.get("media", {}).get("tiff", "")))
        except (KeyError, TypeError, ValueError) as exc:
            raise TelemetryError(f"line {lineno}: {exc}") from exc
    return out

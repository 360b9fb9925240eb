"""Deterministic synthetic-mission generator and end-to-end harness.

Builds a PV plant with seeded ground-truth defects, plans a nadir lawnmower
survey, synthesizes thermal/RGB sensor packets through a forward pinhole
model, runs the full onboard pipeline (palette rendering, fusion embedding,
detection, re-acquisition, projection, de-duplication, telemetry), and
scores recall, Dup-FP, and bandwidth savings.

Radiometric model for synthetic blobs: each defect adds a Gaussian excess
over ambient. Three physically motivated attenuations shape the
operational trends:
  - pixel integration: peak scales by sigma_px^2 / (sigma_px^2 + psf_px^2),
    so high-altitude (small sigma_px) blobs lose contrast;
  - vignetting: peak scales by 1 - v * (r / r_max)^2 at image radius r,
    so off-axis views are weaker than boresight views (what re-acquisition
    recovers by centering);
  - motion blur: peak scales by 1 / (1 + blur_px / (2 * sigma_px)) with
    blur_px = speed * exposure / gsd, so faster flight lowers contrast.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .dedup import DbscanParams, GroundTruthPoint, deduplicate, dup_fp_rate
from .detector import BoundingBox, Detection, ThresholdDetectorConfig, detect
from .fusion import FusionModel, ToySample, downsample, gated_fuse, \
    mean_pairwise_distance
from .geodesy import EnuOffset, GeoPoint, enu_to_geo
from .geoprojection import Attitude, GroundPlane, UavPose, \
    camera_to_world_rotation, project_detection
from .reacquisition import CameraIntrinsics, ReacqPolicy, backproject, \
    pointing_angles, reacquisition_decision
from .telemetry import BandwidthLedger, MissionReport, bandwidth_savings, \
    build_report, to_json
from .thermal import PALETTE_NAMES, RgbImage, TemperatureMap, apply_palette, \
    clahe_rgb, load_all_palettes, normalize_temperature

# Fault taxonomy labels used for ground-truth classes.
FAULT_CLASSES = ("hotspot_single", "hotspot_multi", "diode_bypass",
                 "string_open", "string_short", "soiling", "shading",
                 "cracking", "delamination", "junction_box")

# RNG substream tags: toggling one noise source must not shift the others.
_STREAM_PLANT = 11
_STREAM_POSE = 31
_STREAM_CONF = 23
_STREAM_MISS = 29
_STREAM_CLUTTER = 47


class SimulationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Scene
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantLayout:
    origin: GeoPoint
    rows: int = 10
    cols: int = 10
    module_size: tuple = (0.8, 0.5)   # (east extent, north extent) meters
    pitch: tuple = (1.0, 1.0)         # (col/east, row/north) spacing meters
    elevation: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise SimulationError("plant grid must be at least 1x1")
        if min(self.module_size) <= 0 or min(self.pitch) <= 0:
            raise SimulationError("module size and pitch must be positive")
        if (self.pitch[0] < self.module_size[0]
                or self.pitch[1] < self.module_size[1]):
            raise SimulationError("pitch must be at least the module size")

    @property
    def extent(self) -> tuple:
        """(east, north) extent of the module field in meters."""
        return (self.cols * self.pitch[0], self.rows * self.pitch[1])


@dataclass(frozen=True)
class GroundTruthDefect:
    id: str
    module: tuple               # (row, col)
    class_id: str
    offset: tuple               # (east, north) meters within the module
    peak_excess_c: float
    sigma_m: float
    east: float                 # plant-local ENU meters
    north: float
    position: GeoPoint
    is_small: bool = False

    def __post_init__(self):
        if self.peak_excess_c <= 0 or self.sigma_m <= 0:
            raise SimulationError("defect excess and sigma must be positive")


@dataclass(frozen=True)
class DefectMix:
    """Ground-truth generation parameters."""
    count: int | None = 8       # exact defect count; None means use density
    density: float = 0.08       # per-module defect probability when count is None
    n_small: int = 3
    min_separation_m: float = 2.5
    excess_range_c: tuple = (7.0, 9.0)
    small_excess_range_c: tuple = (6.0, 7.0)
    sigma_m: float = 0.25
    small_sigma_m: float = 0.12

    def __post_init__(self):
        if self.count is None and not (0.0 < self.density <= 1.0):
            raise SimulationError("density must lie in (0, 1]")


def generate_plant(seed: int, layout: PlantLayout,
                   mix: DefectMix = DefectMix()):
    """Seeded plant + defect generation: defects on distinct modules with a
    minimum pairwise separation (rejection sampling, deterministic)."""
    rng = np.random.default_rng([seed, _STREAM_PLANT])
    n_modules = layout.rows * layout.cols
    if mix.count is not None:
        target = mix.count
    else:
        target = int(rng.binomial(n_modules, mix.density))
    if target > n_modules:
        raise SimulationError("more defects than modules")

    chosen = []       # (row, col, east, north)
    attempts = 0
    while len(chosen) < target:
        attempts += 1
        if attempts > 20000:
            raise SimulationError(
                "cannot place defects with the requested separation")
        r = int(rng.integers(layout.rows))
        c = int(rng.integers(layout.cols))
        if any(m[0] == r and m[1] == c for m in chosen):
            continue
        off_e = float(rng.uniform(0.2, 0.8)) * layout.module_size[0]
        off_n = float(rng.uniform(0.2, 0.8)) * layout.module_size[1]
        east = c * layout.pitch[0] + off_e
        north = r * layout.pitch[1] + off_n
        if any(math.hypot(east - m[2], north - m[3]) < mix.min_separation_m
               for m in chosen):
            continue
        chosen.append((r, c, east, north))

    defects = []
    n_small = min(mix.n_small, target)
    for i, (r, c, east, north) in enumerate(chosen):
        small = i < n_small
        lo, hi = mix.small_excess_range_c if small else mix.excess_range_c
        excess = float(rng.uniform(lo, hi))
        sigma = mix.small_sigma_m if small else mix.sigma_m
        cls = str(rng.choice(FAULT_CLASSES))
        pos = enu_to_geo(layout.origin, EnuOffset(east=east, north=north,
                                                  up=layout.elevation))
        defects.append(GroundTruthDefect(
            id=f"gt_{i:03d}", module=(r, c), class_id=cls,
            offset=(east - c * layout.pitch[0], north - r * layout.pitch[1]),
            peak_excess_c=excess, sigma_m=sigma, east=east, north=north,
            position=pos, is_small=small))
    return layout, defects


# ---------------------------------------------------------------------------
# Flight planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlightPlan:
    altitude: float = 10.0        # meters AGL
    speed: float = 2.0            # m/s
    along_overlap: float = 0.7
    cross_overlap: float = 0.3

    def __post_init__(self):
        if self.altitude <= 0 or self.speed <= 0:
            raise SimulationError("altitude and speed must be positive")
        if not (0.0 <= self.along_overlap < 1.0
                and 0.0 <= self.cross_overlap < 1.0):
            raise SimulationError("overlaps must lie in [0, 1)")


@dataclass(frozen=True)
class FramePose:
    """Planned camera station in plant-local ENU with gimbal orientation."""
    east: float
    north: float
    altitude: float
    gimbal: Attitude
    time_s: float


def footprint(plan: FlightPlan, intr: CameraIntrinsics) -> tuple:
    """Nadir ground footprint (east, north) = (alt*W/fx, alt*H/fy)."""
    return (plan.altitude * intr.width / intr.fx,
            plan.altitude * intr.height / intr.fy)


def coverage_multiplicity(along_overlap: float) -> int:
    return max(1, math.ceil(1.0 / (1.0 - along_overlap)))


def plan_flight(layout: PlantLayout, plan: FlightPlan,
                intr: CameraIntrinsics) -> list:
    """Nadir lawnmower: north-south lines spaced east by
    footprint_e*(1-cross_overlap). Along-track spacing is
    footprint_n / ceil(1/(1-along_overlap)), which is at most
    footprint_n*(1-along_overlap) and guarantees that every in-plant point
    is imaged by at least ceil(1/(1-along_overlap)) frames.
    """
    ext_e, ext_n = layout.extent
    if ext_e <= 0 or ext_n <= 0:
        raise SimulationError("zero-area plant")
    fp_e, fp_n = footprint(plan, intr)

    line_spacing = fp_e * (1.0 - plan.cross_overlap)
    if ext_e <= fp_e:
        lines = [ext_e / 2.0]
    else:
        n_lines = math.ceil((ext_e - fp_e) / line_spacing) + 1
        spacing = (ext_e - fp_e) / (n_lines - 1)
        lines = [fp_e / 2.0 + i * spacing for i in range(n_lines)]

    step = fp_n / coverage_multiplicity(plan.along_overlap)
    # Overshoot half a footprint past both plant edges so edge modules get
    # the full along-track multiplicity.
    n_along = math.ceil((ext_n + fp_n) / step) + 1
    along = [-fp_n / 2.0 + k * step for k in range(n_along)]

    nadir = Attitude(pitch=-math.pi / 2.0)
    poses = []
    t = 0.0
    prev = None
    for i, east in enumerate(lines):
        stations = along if i % 2 == 0 else list(reversed(along))
        for north in stations:
            if prev is not None:
                t += math.hypot(east - prev[0], north - prev[1]) / plan.speed
            poses.append(FramePose(east=east, north=north,
                                   altitude=plan.altitude, gimbal=nadir,
                                   time_s=t))
            prev = (east, north)
    return poses


# ---------------------------------------------------------------------------
# Sensor synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenderModel:
    ambient_c: float = 25.0
    psf_px: float = 0.7         # optics/pixel-integration blur, pixels
    vignette: float = 0.6       # peak attenuation coefficient at the corners
    exposure_s: float = 0.025    # motion-blur integration time

    def __post_init__(self):
        if not (0.0 <= self.vignette <= 1.0):
            raise SimulationError("vignette coefficient must lie in [0, 1]")


@dataclass(frozen=True)
class SyntheticDetectorNoise:
    confidence_sigma: float = 0.1
    miss_probability: float = 0.0
    clutter_rate: float = 0.0         # expected clutter detections per frame
    pos_sigma_m: float = 0.12         # measured-pose position noise
    att_sigma_rad: float = 0.0        # measured-gimbal angle noise

    def __post_init__(self):
        if not (0.0 <= self.miss_probability <= 1.0):
            raise SimulationError("miss probability must lie in [0, 1]")
        if min(self.confidence_sigma, self.clutter_rate,
               self.pos_sigma_m, self.att_sigma_rad) < 0:
            raise SimulationError("noise parameters must be non-negative")


@dataclass(frozen=True)
class SensorPacket:
    frame_id: str
    time_s: float
    pose_true: FramePose
    pose_meas: FramePose
    temp: TemperatureMap
    rgb: RgbImage


def render_frame(defects, pose: FramePose, intr: CameraIntrinsics,
                 render: RenderModel, speed: float) -> TemperatureMap:
    """Forward-project defect blobs through the pinhole onto the thermal
    raster; see the module docstring for the attenuation model."""
    rot = camera_to_world_rotation(
        UavPose(position=GeoPoint(lat=0.0, lon=0.0, alt=pose.altitude),
                gimbal=pose.gimbal))
    img = np.full((intr.height, intr.width), render.ambient_c)
    vv, uu = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    r_max = math.hypot(intr.cx, intr.cy)
    gsd = pose.altitude / intr.fx
    blur_px = speed * render.exposure_s / gsd
    for d in defects:
        ned = np.array([d.north - pose.north, d.east - pose.east,
                        pose.altitude])
        cam = rot.T @ ned
        if cam[2] <= 0.1:
            continue
        u0 = intr.fx * cam[0] / cam[2] + intr.cx
        v0 = intr.fy * cam[1] / cam[2] + intr.cy
        sigma_px = d.sigma_m * intr.fx / cam[2]
        margin = 4.0 * sigma_px
        if not (-margin <= u0 < intr.width + margin
                and -margin <= v0 < intr.height + margin):
            continue
        r_frac = math.hypot(u0 - intr.cx, v0 - intr.cy) / r_max
        peak = d.peak_excess_c
        peak *= sigma_px ** 2 / (sigma_px ** 2 + render.psf_px ** 2)
        peak *= max(1.0 - render.vignette * min(r_frac, 1.0) ** 2, 0.0)
        peak *= 1.0 / (1.0 + blur_px / (2.0 * sigma_px))
        img += peak * np.exp(-((uu - u0) ** 2 + (vv - v0) ** 2)
                             / (2.0 * sigma_px ** 2))
    return TemperatureMap(temp_c=img)


def _flat_rgb(intr: CameraIntrinsics) -> RgbImage:
    return RgbImage(pixels=np.full((intr.height, intr.width, 3), 96,
                                   dtype=np.uint8))


def _perturbed_pose(pose: FramePose, noise: SyntheticDetectorNoise,
                    rng) -> FramePose:
    de, dn, dz = rng.normal(0.0, noise.pos_sigma_m, size=3)
    dp, dy = rng.normal(0.0, noise.att_sigma_rad, size=2)
    gimbal = Attitude(roll=pose.gimbal.roll, pitch=pose.gimbal.pitch + dp,
                      yaw=pose.gimbal.yaw + dy)
    return FramePose(east=pose.east + de, north=pose.north + dn,
                     altitude=pose.altitude + 0.2 * dz, gimbal=gimbal,
                     time_s=pose.time_s)


def simulate_frames(defects, poses, intr: CameraIntrinsics,
                    noise: SyntheticDetectorNoise, render: RenderModel,
                    speed: float, seed: int) -> list:
    """Deterministic sensor stream: frames rendered from the true pose,
    measured poses perturbed by the configured noise."""
    packets = []
    for k, pose in enumerate(poses):
        rng = np.random.default_rng([seed, _STREAM_POSE, k])
        meas = _perturbed_pose(pose, noise, rng)
        temp = render_frame(defects, pose, intr, render, speed)
        packets.append(SensorPacket(frame_id=f"f{k:04d}", time_s=pose.time_s,
                                    pose_true=pose, pose_meas=meas,
                                    temp=temp, rgb=_flat_rgb(intr)))
    return packets


# ---------------------------------------------------------------------------
# Mission configuration and pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MissionConfig:
    seed: int = 0
    site_id: str = "SIM-PLANT-01"
    uav: str = "SIM-UAV"
    start_utc: str = "2025-09-30T10:00:00Z"
    layout: PlantLayout = field(default_factory=lambda: PlantLayout(
        origin=GeoPoint(lat=49.4070, lon=26.9840, alt=0.0)))
    mix: DefectMix = field(default_factory=DefectMix)
    plan: FlightPlan = field(default_factory=FlightPlan)
    intrinsics: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics(
        fx=100.0, fy=100.0, cx=39.5, cy=31.5, width=80, height=64))
    detector: ThresholdDetectorConfig = field(default_factory=lambda: ThresholdDetectorConfig(
        delta_c=2.0, min_blob_px=3, logit_bias=-3.2, logit_per_deg=1.0,
        logit_per_log_px=0.5))
    noise: SyntheticDetectorNoise = field(default_factory=SyntheticDetectorNoise)
    render: RenderModel = field(default_factory=RenderModel)
    policy: ReacqPolicy = field(default_factory=lambda: ReacqPolicy(
        tau_ra=0.5, min_area_frac=0.01, max_rounds=2))
    reacq_enabled: bool = True
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    match_radius_m: float = 1.0
    clahe_enabled: bool = True


@dataclass(frozen=True)
class AcceptedDetection:
    projected: object            # ProjectedDetection
    gt_index: int | None
    via_reacq: bool


@dataclass
class MissionTrace:
    config: MissionConfig
    defects: list
    frames: int = 0
    detections_seen: int = 0
    accepted: list = field(default_factory=list)   # AcceptedDetection
    rejected: int = 0
    reacq_rounds: int = 0
    reacq_confirms: int = 0
    events: list = field(default_factory=list)
    palette_spreads: list = field(default_factory=list)
    ledger: BandwidthLedger = field(default_factory=BandwidthLedger)


@dataclass(frozen=True)
class MetricsReport:
    recall: float
    recall_small: float
    dup_fp_raw: float
    dup_fp_dedup: float
    event_count: int
    gt_count: int
    bandwidth_savings: float
    reacq_rounds: int
    reacq_confirms: int

    def __post_init__(self):
        for rate in (self.recall, self.recall_small, self.dup_fp_raw,
                     self.dup_fp_dedup):
            if not (0.0 <= rate <= 1.0):
                raise SimulationError("metric rates must lie in [0, 1]")


def _ts_utc(start_utc: str, offset_s: float) -> str:
    start = datetime.strptime(start_utc, "%Y-%m-%dT%H:%M:%SZ").replace(
        tzinfo=timezone.utc)
    return (start + timedelta(seconds=round(offset_s))).strftime(
        "%Y-%m-%dT%H:%M:%SZ")


def _uav_pose(layout: PlantLayout, pose: FramePose) -> UavPose:
    position = enu_to_geo(layout.origin,
                          EnuOffset(east=pose.east, north=pose.north,
                                    up=pose.altitude))
    return UavPose(position=position, gimbal=pose.gimbal)


def _conf_noise(seed: int, frame_idx: int, det_idx: int, rounds: int,
                sigma: float) -> float:
    if sigma == 0.0:
        return 0.0
    rng = np.random.default_rng([seed, _STREAM_CONF, frame_idx, det_idx, rounds])
    return float(rng.normal(0.0, sigma))


def _missed(seed: int, frame_idx: int, det_idx: int, prob: float) -> bool:
    if prob <= 0.0:
        return False
    rng = np.random.default_rng([seed, _STREAM_MISS, frame_idx, det_idx])
    return bool(rng.uniform() < prob)


def _fusion_embed(model: FusionModel, luts, temp: TemperatureMap,
                  rgb: RgbImage, clahe_enabled: bool) -> float:
    """Exercise the palette->encoder->gate path on the live frame; returns
    the palette-embedding spread recorded in the trace."""
    gray = normalize_temperature(temp)
    renders = []
    for lut in luts:
        img = apply_palette(gray, lut)
        if clahe_enabled:
            img = clahe_rgb(img, tile_grid=(2, 2))
        renders.append(downsample(img.pixels / 255.0, model.crop_size).ravel())
    sample = ToySample(palette_inputs=np.stack(renders),
                       rgb_input=downsample(rgb.pixels / 255.0,
                                            model.crop_size).ravel(),
                       is_positive=False, box=None)
    zs = model.palette_embeddings(sample)
    z_bar = zs.mean(axis=0)
    from .fusion import encode
    r = encode(sample.rgb_input, model._encoder(model.params, "r"))
    gated_fuse(z_bar, r, model._gate(model.params))
    return mean_pairwise_distance(zs)


def _nearest_gt(point: GeoPoint, defects, match_radius: float):
    from .geodesy import haversine_distance
    best, best_d = None, match_radius
    for i, d in enumerate(defects):
        dist = haversine_distance(point, d.position)
        if dist <= best_d:
            best, best_d = i, dist
    return best


def _clutter_detections(intr: CameraIntrinsics, rate: float, seed: int,
                        frame_idx: int) -> list:
    if rate <= 0.0:
        return []
    rng = np.random.default_rng([seed, _STREAM_CLUTTER, frame_idx])
    out = []
    for _ in range(int(rng.poisson(rate))):
        u = float(rng.uniform(2, intr.width - 4))
        v = float(rng.uniform(2, intr.height - 4))
        conf = float(rng.uniform(0.55, 0.9))
        out.append(Detection(
            bbox=BoundingBox(x_min=u, y_min=v, x_max=u + 2.0, y_max=v + 2.0),
            class_id="clutter", confidence=conf,
            peak_temp_c=30.0))
    return out


def run_mission(config: MissionConfig):
    """Algorithm: per frame render -> palettes/fusion -> detect ->
    re-acquisition loop -> project; then dedup -> report -> ledger."""
    layout, defects = generate_plant(config.seed, config.layout, config.mix)
    poses = plan_flight(layout, config.plan, config.intrinsics)
    packets = simulate_frames(defects, poses, config.intrinsics, config.noise,
                              config.render, config.plan.speed, config.seed)
    plane = GroundPlane(elevation=layout.elevation)
    model = FusionModel(seed=config.seed, crop_size=16)
    luts = load_all_palettes()
    trace = MissionTrace(config=config, defects=defects)
    intr = config.intrinsics
    frame_area = float(intr.width * intr.height)

    extra_frame_counter = [len(packets)]

    def handle_detection(det, packet, frame_idx, det_idx):
        """Confirmation loop (accept / re-acquire / reject) for one raw
        detection; returns the accepted (detection, pose) or None."""
        rounds = 0
        current = det
        pose_true, pose_meas = packet.pose_true, packet.pose_meas
        while True:
            noisy = min(max(current.confidence + _conf_noise(
                config.seed, frame_idx, det_idx, rounds,
                config.noise.confidence_sigma), 0.0), 1.0)
            current = current.with_confidence(noisy)
            rot_true = camera_to_world_rotation(_uav_pose(layout, pose_true))
            decision = reacquisition_decision(
                current, frame_area, config.policy, rounds,
                intr=intr, rot_cam_to_world=rot_true)
            if decision.action == "accept":
                if rounds > 0:
                    trace.reacq_confirms += 1
                return current, pose_meas
            if decision.action == "reject" or not config.reacq_enabled:
                return None
            # Re-acquire: point the gimbal along the target's line of
            # sight and render a fresh, centered view at the same station.
            trace.reacq_rounds += 1
            rounds += 1
            u, v = current.bbox.center
            los = rot_true @ backproject(u, v, intr)
            pitch, yaw = pointing_angles(los)
            gimbal = Attitude(pitch=pitch, yaw=yaw)
            pose_true = replace(pose_true, gimbal=gimbal)
            pose_meas = replace(pose_meas, gimbal=gimbal)
            frame = render_frame(defects, pose_true, intr, config.render,
                                 speed=0.0)  # hover during re-acquisition
            trace.ledger.record_frame(intr.width, intr.height)
            extra_frame_counter[0] += 1
            redetections = detect(frame, config.detector)
            if not redetections:
                return None
            current = min(redetections, key=lambda d: math.hypot(
                d.bbox.center[0] - intr.cx, d.bbox.center[1] - intr.cy))

    for frame_idx, packet in enumerate(packets):
        trace.frames += 1
        trace.ledger.record_frame(intr.width, intr.height)
        trace.palette_spreads.append(_fusion_embed(
            model, luts, packet.temp, packet.rgb, config.clahe_enabled))
        detections = detect(packet.temp, config.detector)
        detections += _clutter_detections(intr, config.noise.clutter_rate,
                                          config.seed, frame_idx)
        for det_idx, det in enumerate(detections):
            trace.detections_seen += 1
            if _missed(config.seed, frame_idx, det_idx,
                       config.noise.miss_probability):
                continue
            outcome = handle_detection(det, packet, frame_idx, det_idx)
            if outcome is None:
                trace.rejected += 1
                continue
            accepted, pose_meas = outcome
            projected = project_detection(
                accepted, intr, _uav_pose(layout, pose_meas), plane,
                frame_id=packet.frame_id,
                timestamp=_ts_utc(config.start_utc, packet.time_s),
                media_rgb=f"sim://{config.site_id}/{packet.frame_id}.jpg",
                media_tiff=f"sim://{config.site_id}/{packet.frame_id}.tif")
            gt_index = _nearest_gt(projected.centroid, defects,
                                   config.match_radius_m)
            if gt_index is not None:
                # Stand-in for the classifier head: ground-truth class of
                # the nearest defect.
                relabeled = Detection(
                    bbox=accepted.bbox, class_id=defects[gt_index].class_id,
                    confidence=accepted.confidence,
                    peak_temp_c=accepted.peak_temp_c)
                projected = replace(projected, detection=relabeled)
            trace.accepted.append(AcceptedDetection(
                projected=projected, gt_index=gt_index,
                via_reacq=False))

    trace.events = deduplicate([a.projected for a in trace.accepted],
                               config.dbscan)
    report = build_report(config.site_id, config.uav,
                          _ts_utc(config.start_utc,
                                  poses[-1].time_s if poses else 0.0),
                          trace.events)
    trace.ledger.record_publish(len(to_json(report)))
    trace.ledger.mission_duration_s = poses[-1].time_s if poses else 1.0
    return trace, report, trace.ledger


def evaluate(trace: MissionTrace, defects=None,
             match_radius: float | None = None) -> MetricsReport:
    defects = trace.defects if defects is None else defects
    radius = trace.config.match_radius_m if match_radius is None else match_radius
    gt = [GroundTruthPoint(position=d.position, class_id=d.class_id)
          for d in defects]

    from .geodesy import haversine_distance
    matched = set()
    for event in trace.events:
        for i, d in enumerate(defects):
            if (event.class_id == d.class_id
                    and haversine_distance(event.centroid, d.position) <= radius):
                matched.add(i)
    small = [i for i, d in enumerate(defects) if d.is_small]
    recall = len(matched) / len(defects) if defects else 1.0
    recall_small = (len(matched & set(small)) / len(small)) if small else 1.0

    raw_items = [a.projected for a in trace.accepted]
    return MetricsReport(
        recall=recall,
        recall_small=recall_small,
        dup_fp_raw=dup_fp_rate(raw_items, gt, match_radius=radius),
        dup_fp_dedup=dup_fp_rate(trace.events, gt, match_radius=radius),
        event_count=len(trace.events),
        gt_count=len(defects),
        bandwidth_savings=bandwidth_savings(trace.ledger),
        reacq_rounds=trace.reacq_rounds,
        reacq_confirms=trace.reacq_confirms,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

SWEEP_PARAMS = ("altitude", "speed", "epsilon")


def _with_value(config: MissionConfig, parameter: str, value: float) -> MissionConfig:
    if parameter == "altitude":
        return replace(config, plan=replace(config.plan, altitude=float(value)))
    if parameter == "speed":
        return replace(config, plan=replace(config.plan, speed=float(value)))
    if parameter == "epsilon":
        return replace(config, dbscan=replace(config.dbscan, epsilon=float(value)))
    raise SimulationError(f"unknown sweep parameter: {parameter!r}")


def sweep(parameter: str, values, base: MissionConfig) -> list:
    """One full mission per value with a shared seed; returns
    [(value, MetricsReport)] in input order."""
    if not list(values):
        raise SimulationError("sweep needs at least one value")
    rows = []
    for value in values:
        trace, _, _ = run_mission(_with_value(base, parameter, value))
        rows.append((float(value), evaluate(trace)))
    return rows


def sweep_csv(parameter: str, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([parameter, "recall", "recall_small", "dup_fp_raw",
                     "dup_fp_dedup", "event_count", "gt_count",
                     "bandwidth_savings", "reacq_rounds", "reacq_confirms"])
    for value, m in rows:
        writer.writerow([f"{value:g}", f"{m.recall:.4f}",
                         f"{m.recall_small:.4f}", f"{m.dup_fp_raw:.4f}",
                         f"{m.dup_fp_dedup:.4f}", m.event_count, m.gt_count,
                         f"{m.bandwidth_savings:.4f}", m.reacq_rounds,
                         m.reacq_confirms])
    return buf.getvalue()


def metrics_csv(metrics: MetricsReport) -> str:
    return sweep_csv("value", [(0.0, metrics)])

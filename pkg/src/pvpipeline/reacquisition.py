"""Adaptive re-acquisition geometry: pixel back-projection, world-frame
line-of-sight, minimal axis-angle solution, Rodrigues rotation, and gimbal
command synthesis.

Conventions: world frame is NED (north, east, down); camera frame has +z
along the optical axis, +x right, +y down in the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import Detection

PARALLEL_EPS = 1e-12


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 0    # sensor size in pixels; optional (0 = unspecified)
    height: int = 0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if self.width < 0 or self.height < 0:
            raise GeometryError("sensor dimensions must be non-negative")


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray  # unit vector (3,)
    angle: float      # radians in [0, pi]

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if self.angle != 0.0 and abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise GeometryError("axis must be a unit vector")
        object.__setattr__(self, "axis", axis)


@dataclass(frozen=True)
class GimbalCommand:
    delta_pitch: float
    delta_yaw: float


@dataclass(frozen=True)
class ReacqPolicy:
    tau_ra: float = 0.5
    min_area_frac: float = 0.005
    max_rounds: int = 2

    def __post_init__(self):
        if not (0.0 < self.tau_ra < 1.0):
            raise GeometryError("tau_ra must lie in (0, 1)")
        if self.min_area_frac <= 0 or self.max_rounds < 1:
            raise GeometryError("invalid re-acquisition policy")


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise GeometryError("cannot normalize the zero vector")
    return v / n


def check_rotation(r: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise GeometryError("rotation matrix must be 3x3")
    if not np.allclose(r.T @ r, np.eye(3), atol=tol) or abs(np.linalg.det(r) - 1.0) > tol:
        raise GeometryError("matrix is not a proper rotation")
    return r


def backproject(u: float, v: float, intr: CameraIntrinsics) -> np.ndarray:
    """Unit direction in the camera frame for pixel (u, v)."""
    ray = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    return unit(ray)


def to_world(v: np.ndarray, rot_cam_to_world: np.ndarray) -> np.ndarray:
    """Rotate a camera-frame unit direction into the world (NED) frame."""
    r = check_rotation(rot_cam_to_world)
    return r @ np.asarray(v, dtype=np.float64)


def solve_axis_angle(c: np.ndarray, c_target: np.ndarray) -> AxisAngle:
    """Minimal rotation taking unit vector c to unit vector c_target:
    axis = c x c' / |c x c'|, angle = arccos(c . c').

    Degenerate branches: parallel vectors give angle 0 with a +z axis;
    antiparallel vectors use a deterministic perpendicular axis.
    """
    c = np.asarray(c, dtype=np.float64)
    t = np.asarray(c_target, dtype=np.float64)
    cross = np.cross(c, t)
    norm = np.linalg.norm(cross)
    dot = float(np.clip(np.dot(c, t), -1.0, 1.0))
    if norm < PARALLEL_EPS:
        if dot > 0.0:
            return AxisAngle(axis=np.array([0.0, 0.0, 1.0]), angle=0.0)
        # Antiparallel: project +x onto c's orthogonal complement; fall back
        # to +y when c is (anti)parallel to +x.
        probe = np.array([1.0, 0.0, 0.0])
        perp = probe - np.dot(probe, c) * c
        if np.linalg.norm(perp) < 1e-6:
            probe = np.array([0.0, 1.0, 0.0])
            perp = probe - np.dot(probe, c) * c
        return AxisAngle(axis=unit(perp), angle=math.pi)
    return AxisAngle(axis=cross / norm, angle=math.acos(dot))


def rodrigues_rotate(c: np.ndarray, aa: AxisAngle) -> np.ndarray:
    """c cos(t) + (k x c) sin(t) + k (k . c)(1 - cos(t))."""
    c = np.asarray(c, dtype=np.float64)
    k = aa.axis
    ct = math.cos(aa.angle)
    st = math.sin(aa.angle)
    return c * ct + np.cross(k, c) * st + k * np.dot(k, c) * (1.0 - ct)


def axis_angle_matrix(aa: AxisAngle) -> np.ndarray:
    """Equivalent rotation matrix R = I + sin(t) [k]x + (1 - cos(t)) [k]x^2."""
    kx, ky, kz = aa.axis
    k_cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(aa.angle) * k_cross \
        + (1.0 - math.cos(aa.angle)) * (k_cross @ k_cross)


def pointing_angles(c: np.ndarray):
    """(pitch, yaw) that point a boresight along NED direction c.

    yaw = atan2(east, north); pitch = atan2(-down, horizontal). The nadir
    singularity (no horizontal component) reports yaw 0 by convention.
    """
    n, e, d = np.asarray(c, dtype=np.float64)
    horiz = math.hypot(n, e)
    if horiz < PARALLEL_EPS:
        return (-math.pi / 2.0 if d > 0 else math.pi / 2.0), 0.0
    return math.atan2(-d, horiz), math.atan2(e, n)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def to_gimbal_command(c_new: np.ndarray, current_pitch: float,
                      current_yaw: float) -> GimbalCommand:
    """Pitch/yaw deltas that re-point the boresight along c_new (NED)."""
    pitch, yaw = pointing_angles(c_new)
    n, e, _ = np.asarray(c_new, dtype=np.float64)
    if math.hypot(n, e) < PARALLEL_EPS:
        return GimbalCommand(delta_pitch=wrap_angle(pitch - current_pitch), delta_yaw=0.0)
    return GimbalCommand(delta_pitch=wrap_angle(pitch - current_pitch),
                         delta_yaw=wrap_angle(yaw - current_yaw))


@dataclass(frozen=True)
class ReacqDecision:
    action: str  # "accept" | "reject" | "reacquire"
    command: GimbalCommand | None = None


def compute_reacq_command(det: Detection, intr: CameraIntrinsics,
                          rot_cam_to_world: np.ndarray) -> GimbalCommand:
    """Gimbal deltas that center the detection's bbox centroid.

    The target's world line-of-sight c is compared with the current world
    boresight c'; the command re-points the boresight along c.
    """
    u, v = det.bbox.center
    ray_cam = backproject(u, v, intr)
    c = to_world(ray_cam, rot_cam_to_world)
    boresight = rot_cam_to_world @ np.array([0.0, 0.0, 1.0])
    cur_pitch, cur_yaw = pointing_angles(boresight)
    return to_gimbal_command(c, cur_pitch, cur_yaw)


def reacquisition_decision(det: Detection, frame_area: float, policy: ReacqPolicy,
                           round_index: int, intr: CameraIntrinsics | None = None,
                           rot_cam_to_world: np.ndarray | None = None) -> ReacqDecision:
    """Accept confident detections; re-acquire small, low-confidence ones
    until the round budget runs out; reject afterwards."""
    if round_index > policy.max_rounds:
        raise GeometryError("round exceeds policy budget")
    if det.confidence >= policy.tau_ra:
        return ReacqDecision(action="accept")
    small = det.bbox.area / frame_area < policy.min_area_frac
    if small and round_index < policy.max_rounds:
        command = None
        if intr is not None and rot_cam_to_world is not None:
            command = compute_reacq_command(det, intr, rot_cam_to_world)
        return ReacqDecision(action="reacquire", command=command)
    return ReacqDecision(action="reject")

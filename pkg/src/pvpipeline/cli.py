"""Command-line orchestrator: simulate, dedup, fuse-check, reacquire-demo,
export-kml.

Exit codes are a stable contract: 0 ok, 1 config/usage error, 2 runtime
error, 3 verification failure. Verbosity is controlled by the
PV_PIPELINE_LOG environment variable (error | info | debug).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import tempfile

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

GRAD_TOL = 1e-4

log = logging.getLogger("pvpipeline")


def _setup_logging():
    level = os.environ.get("PV_PIPELINE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}
    if level not in levels:
        raise SystemExit(
            f"PV_PIPELINE_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level],
                        format="%(levelname)s %(name)s: %(message)s")


def _atomic_write(path: str, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .config import ConfigError, load_config
    from .simulator import evaluate, metrics_csv, run_mission
    from .telemetry import detection_record_lines, to_json, to_kml

    try:
        config = load_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        trace, report, ledger = run_mission(config)
        metrics = evaluate(trace)
    except Exception as exc:  # surfaced as a runtime failure with exit 2
        log.error("mission failed: %s", exc)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    out = args.out
    summary = (
        f"mission {config.site_id} seed={config.seed}\n"
        f"frames={trace.frames} detections={trace.detections_seen} "
        f"accepted={len(trace.accepted)} events={metrics.event_count} "
        f"gt={metrics.gt_count}\n"
        f"recall={metrics.recall:.4f} recall_small={metrics.recall_small:.4f}\n"
        f"dup_fp_raw={metrics.dup_fp_raw:.4f} "
        f"dup_fp_dedup={metrics.dup_fp_dedup:.4f}\n"
        f"bandwidth_savings={metrics.bandwidth_savings:.4f}\n"
        f"reacq_rounds={metrics.reacq_rounds} "
        f"reacq_confirms={metrics.reacq_confirms}\n")
    _atomic_write(os.path.join(out, "report.json"), to_json(report))
    _atomic_write(os.path.join(out, "report.kml"), to_kml(report))
    _atomic_write(os.path.join(out, "metrics.csv"),
                  metrics_csv(metrics).encode("utf-8"))
    _atomic_write(os.path.join(out, "summary.txt"), summary.encode("utf-8"))
    _atomic_write(os.path.join(out, "detections.jsonl"),
                  detection_record_lines([a.projected for a in trace.accepted]))
    sys.stdout.write(summary)
    return EXIT_OK


# ---------------------------------------------------------------------------
# dedup
# ---------------------------------------------------------------------------

def cmd_dedup(args) -> int:
    from .dedup import DbscanParams, DedupError, deduplicate
    from .telemetry import TelemetryError, event_to_record, \
        parse_detection_record_lines, _record_json

    try:
        params = DbscanParams(epsilon=args.epsilon, min_pts=args.min_pts)
    except DedupError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(args.input, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        print(f"cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        detections = parse_detection_record_lines(data)
    except TelemetryError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        events = deduplicate(detections, params)
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    body = ("[" + ",".join(_record_json(event_to_record(e)) for e in events)
            + "]").encode("utf-8")
    _atomic_write(args.out, body)
    print(f"detections in: {len(detections)}  events out: {len(events)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fuse-check
# ---------------------------------------------------------------------------

def run_fuse_check(seed: int = 0, dim: int = 16, n_instances: int = 20,
                   break_term: str = None):
    """Gradient-check suite for the loss stack. Returns a list of
    (term, max relative error). break_term is a test hook that corrupts one
    analytic gradient to exercise the failure path."""
    from . import fusion

    rng = np.random.default_rng(seed)
    results = []

    def check(term, closure, params):
        err = fusion.gradient_check(closure, params)
        if break_term == term:
            err += 1.0
        results.append((term, err))

    for _ in range(n_instances):
        # palette-invariance term
        zs = rng.standard_normal((4, dim))
        check("palette", lambda p, n=zs.size: (
            fusion.palette_invariance_loss(p.reshape(4, dim)),
            fusion.palette_invariance_loss_grad(p.reshape(4, dim))[1].ravel()),
            zs.ravel())
        # gate composition
        gate = fusion.GateParams.init(rng, dim, scale=0.5)
        z_bar = rng.standard_normal(dim)
        r = rng.standard_normal(dim)
        w = rng.standard_normal(dim)

        def gate_closure(p):
            zb, rr = p[:dim], p[dim:2 * dim]
            g = fusion.GateParams(
                weight=p[2 * dim:2 * dim + 2 * dim * dim].reshape(dim, 2 * dim),
                bias=p[2 * dim + 2 * dim * dim:])
            u, gates = fusion.gated_fuse(zb, rr, g)
            loss = float(w @ u)
            dz, dr, dwg, dbg = fusion.gated_fuse_backward(zb, rr, g, gates, w)
            return loss, np.concatenate([dz, dr, dwg.ravel(), dbg])

        check("gate", gate_closure,
              np.concatenate([z_bar, r, gate.weight.ravel(), gate.bias]))
        # focal
        logit = float(rng.normal())
        positive = bool(rng.integers(2))

        def focal_closure(p):
            prob = 1.0 / (1.0 + math.exp(-p[0]))
            loss, dprob = fusion.focal_loss_grad(prob, positive)
            return loss, np.array([dprob * prob * (1 - prob)])

        check("focal", focal_closure, np.array([logit]))
        # GIoU
        a = np.sort(rng.uniform(0, 1, 2))
        b = np.sort(rng.uniform(0, 1, 2))
        box_a = np.array([a[0], b[0], a[1] + 0.05, b[1] + 0.05])
        c = np.sort(rng.uniform(0, 1, 2))
        d = np.sort(rng.uniform(0, 1, 2))
        box_b = np.array([c[0], d[0], c[1] + 0.05, d[1] + 0.05])
        check("giou", lambda p: fusion.giou_loss_grad(p, box_b), box_a)

    # composite loss through the full toy model
    model = fusion.FusionModel(seed=seed, crop_size=4, hidden=4, dim=dim)
    samples = fusion.make_toy_samples(4, seed=seed, crop_size=4)
    closure = model.loss_closure(samples, fusion.LossWeights())
    err = fusion.gradient_check(closure, model.flatten())
    if break_term == "composite":
        err += 1.0
    results.append(("composite", err))
    return results


def cmd_fuse_check(args) -> int:
    results = run_fuse_check(seed=args.seed, dim=args.dim,
                             break_term=getattr(args, "break_term", None))
    worst = {}
    for term, err in results:
        worst[term] = max(worst.get(term, 0.0), err)
    failed = [t for t, e in worst.items() if not (e < GRAD_TOL)]
    for term in sorted(worst):
        status = "ok" if term not in failed else "FAIL"
        print(f"{term:10s} max_rel_err={worst[term]:.3e} {status}")
    if failed:
        print(f"verification failure: gradient terms {failed} exceed "
              f"{GRAD_TOL:g}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# reacquire-demo
# ---------------------------------------------------------------------------

def cmd_reacquire_demo(args) -> int:
    from .geoprojection import Attitude, GroundPlane, ProjectionError, \
        UavPose, camera_to_world_rotation, pixel_to_ground
    from .geodesy import GeoPoint
    from .reacquisition import (CameraIntrinsics, GeometryError, backproject,
                                pointing_angles, rodrigues_rotate,
                                solve_axis_angle, to_gimbal_command, unit)

    try:
        u, v = (float(x) for x in args.pixel.split(","))
        intr = CameraIntrinsics(fx=args.fx, fy=args.fy, cx=args.cx, cy=args.cy)
    except (ValueError, GeometryError) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    pose = UavPose(position=GeoPoint(lat=0.0, lon=0.0, alt=args.alt),
                   gimbal=Attitude(pitch=math.radians(args.gimbal_pitch)))
    rot = camera_to_world_rotation(pose)
    v_cam = backproject(u, v, intr)
    c = unit(rot @ v_cam)                      # target LOS, world frame
    boresight = rot @ np.array([0.0, 0.0, 1.0])
    aa = solve_axis_angle(boresight, c)
    c_new = rodrigues_rotate(boresight, aa)
    cur_pitch, cur_yaw = pointing_angles(boresight)
    cmd = to_gimbal_command(c_new, cur_pitch, cur_yaw)

    # Reprojection check: after rotating the camera by the command, the
    # target LOS should land on the principal point.
    reproj_cam = rodrigues_rotate(c, type(aa)(axis=aa.axis, angle=-aa.angle))
    v_cam_new = rot.T @ reproj_cam
    err_px = math.hypot(intr.fx * v_cam_new[0] / v_cam_new[2],
                        intr.fy * v_cam_new[1] / v_cam_new[2])

    print(f"v (camera ray):     [{v_cam[0]:+.6f} {v_cam[1]:+.6f} {v_cam[2]:+.6f}]")
    print(f"c (world LOS):      [{c[0]:+.6f} {c[1]:+.6f} {c[2]:+.6f}]")
    print(f"axis:               [{aa.axis[0]:+.6f} {aa.axis[1]:+.6f} {aa.axis[2]:+.6f}]")
    print(f"angle_rad:          {aa.angle:.9f}")
    print(f"delta_pitch_deg:    {math.degrees(cmd.delta_pitch):+.6f}")
    print(f"delta_yaw_deg:      {math.degrees(cmd.delta_yaw):+.6f}")
    print(f"reprojection_px:    {err_px:.3e}")
    try:
        ground = pixel_to_ground(u, v, intr, pose, GroundPlane())
        print(f"ground_wgs84:       [{ground.lat:.6f}, {ground.lon:.6f}]")
    except ProjectionError as exc:
        print(f"ground projection:  no intersection ({exc})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-kml
# ---------------------------------------------------------------------------

def cmd_export_kml(args) -> int:
    from .telemetry import TelemetryError, parse_report, to_kml
    try:
        with open(args.report, "rb") as fh:
            report = parse_report(fh.read())
    except OSError as exc:
        print(f"cannot read {args.report}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TelemetryError, ValueError, KeyError) as exc:
        print(f"invalid report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _atomic_write(args.out, to_kml(report))
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvpipeline",
        description="UAV photovoltaic-inspection pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a full simulated mission")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dedup", help="re-run de-duplication offline")
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--min-pts", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("fuse-check", help="run the gradient-check suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--break-term", dest="break_term", default=None,
                   help=argparse.SUPPRESS)  # negative-control test hook
    p.set_defaults(func=cmd_fuse_check)

    p = sub.add_parser("reacquire-demo",
                       help="print the re-pointing solution for one pixel")
    p.add_argument("--pixel", required=True, metavar="U,V")
    p.add_argument("--fx", type=float, required=True)
    p.add_argument("--fy", type=float, required=True)
    p.add_argument("--cx", type=float, required=True)
    p.add_argument("--cy", type=float, required=True)
    p.add_argument("--alt", type=float, default=10.0)
    p.add_argument("--gimbal-pitch", type=float, default=-90.0,
                   help="gimbal pitch in degrees (-90 = nadir)")
    p.set_defaults(func=cmd_reacquire_demo)

    p = sub.add_parser("export-kml", help="convert a report JSON to KML")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_kml)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

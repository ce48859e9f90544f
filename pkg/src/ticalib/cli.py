"""Command-line entry points: synth, simulate, rd, eval, weights-inspect.

Every run is fully determined by its flags and seeds. Exit codes:
0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import diversity, rotmath, synth, weights as weights_io
from .calibrator import Calibrator, CalibratorConfig, run_simulation
from .estimator import OracleEstimator, ProcrustesEstimator, TICEstimator
from .schedule import ScheduleError, parse_schedule
from .sensor_model import SENSOR_NAMES
from .synth import DatasetError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_seed() -> int:
    return int(os.environ.get("TIC_SEED", "0"))


def _resolve_motion(spec_text: str, seed: int, duration_s: float, rate_hz: float) -> synth.MotionSequence:
    """Motion source mini-grammar: gen:active, gen:static, or a JSONL path."""
    if spec_text.startswith("gen:"):
        preset = spec_text[4:]
        if preset == "active":
            spec = synth.MotionSpec.active(duration_s=duration_s, rate_hz=rate_hz)
        elif preset == "static":
            spec = synth.MotionSpec.static(duration_s=duration_s, rate_hz=rate_hz)
        else:
            raise UsageError(f"unknown generator preset {preset!r} (use gen:active or gen:static)")
        return synth.gen_motion(spec, seed)
    return synth.load_motion(spec_text, rate_hz=rate_hz)


def _parse_thresholds(text: str, sensors: int) -> diversity.TriggerConfig:
    if text == "default":
        return diversity.TriggerConfig()
    if text == "inf":
        return diversity.TriggerConfig.disabled(sensors)
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) == 1:
        return diversity.TriggerConfig.uniform(vals[0], sensors)
    if len(vals) != sensors:
        raise UsageError(f"expected {sensors} thresholds, got {len(vals)}")
    return diversity.TriggerConfig(thresholds=vals)


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    motion = _resolve_motion(args.motion, args.seed, args.duration, args.rate)
    dist = synth.ParamDistribution()
    n = args.n
    if len(motion) < n and args.count > 0:
        raise DatasetError(f"motion too short ({len(motion)} frames) for window length {n}")
    rng = np.random.default_rng(args.seed)
    samples = []
    rd_per_sensor = [[] for _ in range(motion.sensors)]
    for i in range(args.count):
        start = int(rng.integers(0, len(motion) - n + 1))
        smp = synth.make_sample(motion, start, dist, seed=args.seed + i + 1, leakage=not args.no_leakage, n=n)
        samples.append(smp)
        for s in range(motion.sensors):
            rd_per_sensor[s].append(diversity.rotation_diversity(smp.orientations[:, s]))
    synth.write_dataset(samples, args.out, sensors=motion.sensors, n=n)
    print(f"wrote {len(samples)} samples to {args.out}")
    if samples:
        meds = [int(np.median(r)) for r in rd_per_sensor]
        for s, med in enumerate(meds):
            name = SENSOR_NAMES[s] if motion.sensors == len(SENSOR_NAMES) else f"s{s}"
            print(f"  RD median {name}: {med}")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _make_estimator(args):
    if args.estimator == "oracle":
        return OracleEstimator()
    if args.estimator == "procrustes":
        return ProcrustesEstimator(gravity_refine=not args.no_leakage)
    if args.estimator == "tic":
        if not args.weights:
            raise UsageError("--weights is required with --estimator tic")
        if not os.path.exists(args.weights):
            raise DatasetError(f"missing file: {args.weights}")
        return TICEstimator(weights_io.load_weights(args.weights))
    raise UsageError(f"unknown estimator {args.estimator!r}")


def cmd_simulate(args) -> int:
    motion = _resolve_motion(args.motion, args.seed, args.duration, args.rate)
    try:
        sched = parse_schedule(args.schedule, sensors=motion.sensors)
    except ScheduleError as exc:
        raise UsageError(str(exc)) from exc
    trigger = _parse_thresholds(args.thresholds, motion.sensors)
    cfg = CalibratorConfig(n=args.n, t_interval=args.t_interval, rate_hz=motion.rate_hz, trigger=trigger)
    estimator = _make_estimator(args)
    report = run_simulation(motion, sched, cfg, estimator, leakage=not args.no_leakage)
    report.to_csv(args.out)
    print(f"wrote metrics to {args.out}")
    mean_ome, mean_ame = report.per_sensor_means()
    for s in range(motion.sensors):
        name = report.sensor_names[s]
        print(f"  {name}: mean OME {mean_ome[s]:.4f} deg, mean AME {mean_ame[s]:.4f} m/s^2")
    print(f"  average: OME {mean_ome.mean():.4f} deg, AME {mean_ame.mean():.4f} m/s^2")
    if args.figures:
        from .report import save_figures

        for p in save_figures(report, args.figures):
            print(f"wrote figure {p}")
    return 0


# ---------------------------------------------------------------------------
# rd


def cmd_rd(args) -> int:
    motion = _resolve_motion(args.motion, args.seed, args.duration, args.rate)
    n = args.n
    windows = len(motion) // n
    lines = ["window,sensor,rd"]
    for w in range(windows):
        block = motion.orientations[w * n : (w + 1) * n]
        for s in range(motion.sensors):
            lines.append(f"{w},{s},{diversity.rotation_diversity(block[:, s])}")
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
        print(f"wrote RD report ({windows} windows) to {args.out}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    calib = synth.load_motion(args.calibrated, rate_hz=args.rate)
    gt = synth.load_motion(args.ground_truth, rate_hz=args.rate)
    if len(calib) == 0 or len(gt) == 0:
        raise DatasetError("no frames")
    if len(calib) != len(gt) or calib.sensors != gt.sensors:
        raise DatasetError(
            f"length mismatch: calibrated {len(calib)}x{calib.sensors}, ground truth {len(gt)}x{gt.sensors}"
        )
    root = args.root
    from .calibrator import _yaw_angles

    psi_m = _yaw_angles(calib.orientations[:, root])
    psi_g = _yaw_angles(gt.orientations[:, root])
    t_count = len(calib)
    rel = rotmath.mats_from_eulers(
        np.stack([np.zeros(t_count), np.degrees(psi_m - psi_g), np.zeros(t_count)], axis=-1)
    )
    ome = rotmath.geodesic_deg(calib.orientations, np.einsum("tij,tsjk->tsik", rel, gt.orientations))
    ame = np.linalg.norm(calib.accels - np.einsum("tij,tsj->tsi", rel, gt.accels), axis=-1)

    rows = []
    for s in range(calib.sensors):
        name = SENSOR_NAMES[s] if calib.sensors == len(SENSOR_NAMES) else f"s{s}"
        rows.append((name, ome[:, s].mean(), ame[:, s].mean()))
    rows.append(("average", ome.mean(), ame.mean()))
    width = max(len(r[0]) for r in rows)
    print(f"{'sensor'.ljust(width)}  OME(deg)   AME(m/s2)")
    for name, o, a in rows:
        print(f"{name.ljust(width)}  {o:9.4f}  {a:9.4f}")
    if args.out:
        with open(args.out, "w") as f:
            f.write("sensor,ome_deg,ame_ms2\n")
            for name, o, a in rows:
                f.write(f"{name},{o:.9g},{a:.9g}\n")
        print(f"wrote summary to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# weights-inspect


def cmd_weights_inspect(args) -> int:
    if not os.path.exists(args.path):
        raise DatasetError(f"missing file: {args.path}")
    bundle = weights_io.load_weights(args.path)
    print(f"{args.path}: {len(bundle.tensors)} tensors, sensors={bundle.sensors}")
    print(f"  positional_encoding={bundle.positional_encoding} pre_norm={bundle.pre_norm}")
    for name in sorted(bundle.tensors):
        arr = bundle.tensors[name]
        print(f"  {name:28s} {str(arr.shape):14s} |mean|={np.abs(arr).mean():.5f}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="ticalib", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, motion=True):
        sp.add_argument("--seed", type=int, default=_default_seed(), help="RNG seed (env TIC_SEED)")
        if motion:
            sp.add_argument("--motion", default="gen:active", help="gen:active, gen:static, or JSONL path")
            sp.add_argument("--duration", type=float, default=60.0, help="generated motion length [s]")
            sp.add_argument("--rate", type=float, default=30.0, help="frame rate [Hz]")

    sp = sub.add_parser("synth", help="export a TICD training dataset")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--n", type=int, default=synth.DEFAULT_WINDOW, help="window length in frames")
    sp.add_argument("--no-leakage", action="store_true", help="disable gravity-leakage simulation")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("simulate", help="closed-loop calibration simulation; CSV + figures")
    common(sp)
    sp.add_argument("--schedule", default="identity", help='e.g. "ramp:sensor=nonroot,axis=y,rate=0.07"')
    sp.add_argument("--estimator", default="oracle", choices=["oracle", "procrustes", "tic"])
    sp.add_argument("--weights", help="TICW file for --estimator tic")
    sp.add_argument("--out", required=True, help="metrics CSV path")
    sp.add_argument("--figures", help="directory for PNG figures")
    sp.add_argument("--n", type=int, default=synth.DEFAULT_WINDOW, help="buffer length in frames")
    sp.add_argument("--t-interval", type=float, default=1.0, help="seconds between estimator runs")
    sp.add_argument("--thresholds", default="default", help='"default", "inf", one value, or S comma-separated')
    sp.add_argument("--no-leakage", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("rd", help="per-sensor rotation diversity per window")
    common(sp)
    sp.add_argument("--n", type=int, default=synth.DEFAULT_WINDOW, help="window length in frames")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_rd)

    sp = sub.add_parser("eval", help="OME/AME between a calibrated and a ground-truth stream")
    common(sp, motion=False)
    sp.add_argument("--calibrated", required=True, help="JSONL motion file")
    sp.add_argument("--ground-truth", required=True, help="JSONL motion file")
    sp.add_argument("--rate", type=float, default=30.0)
    sp.add_argument("--root", type=int, default=5, help="root sensor index for ego-yaw")
    sp.add_argument("--out", help="optional summary CSV")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("weights-inspect", help="show TICW header and tensor table")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_weights_inspect)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, weights_io.WeightFormatError, ScheduleError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

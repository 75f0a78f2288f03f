"""Command-line entry points.

Exit codes: 0 success, 1 task failure (rollout not successful, flow
validation out of tolerance), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import cloudio
from .camera import object_bounds, random_viewpoint
from .errors import ArtiflowError
from .evaluation import ObjectSource, SuiteConfig, run_suite, validate_flow
from .flow import gt_flow
from .geom import sample_surface
from .model import ArticulatedObject
from .policy import (
    CameraObservation,
    FullObservation,
    NormalDirection,
    OracleGT,
    RolloutConfig,
    ScrewParameters,
    estimator_label,
    observe,
    rollout,
)
from .procgen import ProcKind, ProcSpec, default_suite, generate
from .scene_io import load_scene

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- option helpers --------------------------------------------------------------

DEFAULTS = {
    "seed": 0,
    "estimator": "oracle",
    "estimators": "oracle,normal",
    "steps": 50,
    "step_size": 0.01,
    "delta": 0.1,
    "contact_radius": 0.05,
    "break_angle_deg": 60.0,
    "screw_dir_deg": 20.0,
    "screw_pos": 0.0,
    "n_points": 20000,
    "stride": 1,
    "count": 100,
    "states": 5,
    "delta_theta": 1e-6,
    "tolerance": 1e-4,
    "jobs": 1,
    "format": "bin",
}


def _merged(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from ``--config`` (JSON), then from built-in defaults."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key, value in vars(args).items():
        if value is None:
            if key in cfg:
                setattr(args, key, cfg[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    return args


def _procgen_object(text: str) -> ArticulatedObject:
    kind, _, seed = text.partition(":")
    try:
        return generate(ProcSpec(ProcKind(kind), seed=int(seed or 0)))
    except ValueError as exc:
        raise UsageError(f"bad --procgen value {text!r} (want KIND[:SEED], KIND in {[k.value for k in ProcKind]})") from exc


def _object(args) -> ArticulatedObject:
    if args.object and args.procgen:
        raise UsageError("--object and --procgen are mutually exclusive")
    if args.procgen:
        return _procgen_object(args.procgen)
    if not args.object:
        raise UsageError("one of --object or --procgen is required")
    try:
        return load_scene(args.object)
    except OSError as exc:
        raise UsageError(f"cannot read object file {args.object}: {exc.strerror or exc}") from exc
    except ArtiflowError as exc:
        raise UsageError(f"cannot load object file {args.object}: {exc}") from exc


def _estimator(name: str, args):
    name = name.strip()
    if name == "oracle":
        return OracleGT()
    if name == "normal":
        return NormalDirection()
    if name == "screw":
        return ScrewParameters(np.deg2rad(float(args.screw_dir_deg)), float(args.screw_pos))
    if name == "screw0":
        return ScrewParameters()
    raise UsageError(f"unknown estimator {name!r} (choose oracle, normal, screw, screw0)")


def _rollout_config(args) -> RolloutConfig:
    try:
        return RolloutConfig(
            max_steps=int(args.steps),
            step_size=float(args.step_size),
            success_threshold=float(args.delta),
            contact_radius=float(args.contact_radius),
            break_angle=float(np.deg2rad(args.break_angle_deg)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _observations(args):
    if args.camera and args.full_obs:
        return (FullObservation(int(args.n_points)), CameraObservation(stride=int(args.stride)))
    if args.camera:
        return (CameraObservation(stride=int(args.stride)),)
    return (FullObservation(int(args.n_points)),)


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


# -- subcommands -----------------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    count = int(args.count)
    if count <= 0:
        raise UsageError("empty dataset request")
    obj = _object(args)
    out = _out_dir(args.out or "dataset")
    rng = np.random.default_rng(int(args.seed))
    lo, hi = object_bounds(obj, obj.closed_state())
    center, diag = 0.5 * (lo + hi), float(np.linalg.norm(hi - lo))
    joints = sorted(obj.joints)
    written = 0
    for i in range(count):
        state = obj.random_state(rng)
        joint = joints[int(rng.integers(len(joints)))]
        sample_seed = int(rng.integers(2**31))
        if args.camera:
            cam = random_viewpoint(sample_seed, distance_range=(diag, 2.0 * diag), lookat=center)
            cloud, _ = observe(obj, state, joint, CameraObservation(cam, int(args.stride)))
            if len(cloud) == 0:
                continue
        else:
            cloud = sample_surface(obj, state, int(args.n_points), sample_seed).with_mask_for(
                obj.joints[joint].child_link
            )
        flow = gt_flow(obj, state, cloud, joint)
        meta = {"object": obj.name, "index": i, "state": dict(state), "target_joint": joint}
        stem = out / f"{obj.name}_{i:04d}"
        try:
            if args.format == "csv":
                Path(f"{stem}.csv").write_text(cloudio.cloud_to_csv(cloud, flow), encoding="utf-8")
            else:
                cloudio.write_cloud(f"{stem}.acld", cloud, flow, meta)
        except OSError as exc:
            raise UsageError(f"cannot write {stem}: {exc.strerror or exc}") from exc
        written += 1
    print(f"wrote {written} pair files to {out}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    obj = _object(args)
    joint = args.joint or sorted(obj.joints)[0]
    if joint not in obj.joints:
        raise UsageError(f"unknown joint {joint!r}; object has {sorted(obj.joints)}")
    est = _estimator(args.estimator, args).for_trial(int(args.seed))
    obs = _observations(args)[-1]
    config = _rollout_config(args)
    dump = _out_dir(args.dump_steps) if args.dump_steps else None

    def on_step(step, cloud, flow, state):
        cloudio.write_cloud(dump / f"step_{step:03d}.acld", cloud, flow, {"step": step, "state": dict(state)})

    result = rollout(obj, None, joint, est, obs, config, seed=int(args.seed), on_step=on_step if dump else None)
    record = dict(result.to_record(), object_id=obj.name, estimator=estimator_label(est), observation=obs.name)
    line = json.dumps(record, sort_keys=True)
    print(line)
    if args.out:
        try:
            Path(args.out).write_text(line + "\n", encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror or exc}") from exc
    return EXIT_OK if result.success else EXIT_FAIL


def cmd_eval(args) -> int:
    if args.object and args.procgen:
        raise UsageError("--object and --procgen are mutually exclusive")
    if args.object:
        objects = [ObjectSource(Path(p).stem, "imported", p) for p in args.object]
    elif args.procgen:
        objects = [_procgen_object(p) for p in args.procgen]
    else:
        objects = default_suite(int(args.seed))
        if args.limit:
            objects = objects[: int(args.limit)]
    estimators = [_estimator(e, args) for e in str(args.estimators).split(",") if e.strip()]
    if not estimators:
        raise UsageError("no estimators given")
    config = SuiteConfig(_observations(args), _rollout_config(args))
    report = run_suite(objects, estimators, config, int(args.seed), jobs=max(1, int(args.jobs)))
    print(report.to_table())
    if args.out:
        try:
            paths = report.write(args.out)
        except OSError as exc:
            raise UsageError(f"cannot write report to {args.out}: {exc.strerror or exc}") from exc
        print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_validate_flow(args) -> int:
    if float(args.delta_theta) == 0:
        raise UsageError("delta_theta must be nonzero")
    res = validate_flow(int(args.count), int(args.states), float(args.delta_theta), int(args.seed))
    tol = float(args.tolerance)
    ok = res.within(tol, tol)
    print(json.dumps(dict(asdict(res), ok=ok), sort_keys=True))
    return EXIT_OK if ok else EXIT_FAIL


# -- parser ----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of option values (flags take precedence)")
    p.add_argument("--seed", type=int)


def _add_object(p: argparse.ArgumentParser, many: bool = False) -> None:
    nargs = "+" if many else None
    p.add_argument("--object", nargs=nargs, help="object file(s): native format or URDF subset")
    p.add_argument("--procgen", nargs=nargs, help="procedural object(s) as KIND[:SEED]")


def _add_rollout(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, help="max steps per rollout (default 50)")
    p.add_argument("--step-size", type=float, help="gripper displacement per step in m (default 0.01)")
    p.add_argument("--delta", type=float, help="success threshold on normalized distance (default 0.1)")
    p.add_argument("--contact-radius", type=float, help="m (default 0.05)")
    p.add_argument("--break-angle-deg", type=float, help="contact break angle (default 60)")
    p.add_argument("--screw-dir-deg", type=float, help="axis tilt for the screw estimator (default 20)")
    p.add_argument("--screw-pos", type=float, help="axis shift in m for the screw estimator (default 0)")


def _add_observation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--camera", action="store_true", default=None, help="rendered depth-camera observation")
    p.add_argument("--full-obs", action="store_true", default=None, help="full surface sampling (default)")
    p.add_argument("--n-points", type=int, help="points for full observation (default 20000)")
    p.add_argument("--stride", type=int, help="pixel stride for camera observation (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artiflow", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="write (cloud, flow) pairs at random joint states", allow_abbrev=False)
    _add_common(p)
    _add_object(p)
    _add_observation(p)
    p.add_argument("--count", type=int, help="number of random states (default 100)")
    p.add_argument("--format", choices=["bin", "csv"])
    p.add_argument("--out", help="output directory (default ./dataset)")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("rollout", help="run one articulation episode", allow_abbrev=False)
    _add_common(p)
    _add_object(p)
    _add_observation(p)
    _add_rollout(p)
    p.add_argument("--joint", help="target joint id (default: first in sorted order)")
    p.add_argument("--estimator", help="oracle | normal | screw | screw0 (default oracle)")
    p.add_argument("--out", help="write the trial record (JSON line) here")
    p.add_argument("--dump-steps", help="directory for one cloud+flow file per step")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="evaluate estimators over an object suite", allow_abbrev=False)
    _add_common(p)
    _add_object(p, many=True)
    _add_observation(p)
    _add_rollout(p)
    p.add_argument("--estimators", help="comma-separated list (default oracle,normal)")
    p.add_argument("--jobs", type=int, help="parallel worker processes (default 1)")
    p.add_argument("--limit", type=int, help="use only the first N objects of the default suite")
    p.add_argument("--out", help="directory for report.json, report.txt and trials.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("validate-flow", help="check closed-form flow against finite differences", allow_abbrev=False)
    _add_common(p)
    p.add_argument("--count", type=int, help="number of random objects (default 100)")
    p.add_argument("--states", type=int, help="random states per object (default 5)")
    p.add_argument("--delta-theta", type=float, help="finite-difference increment (default 1e-6)")
    p.add_argument("--tolerance", type=float, help="angle and relative magnitude tolerance (default 1e-4)")
    p.set_defaults(func=cmd_validate_flow)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(_merged(args))
    except UsageError as exc:
        print(f"artiflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArtiflowError, ValueError) as exc:
        print(f"artiflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

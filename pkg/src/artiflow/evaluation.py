"""Batch evaluation: run every (object, joint, estimator, observation, repetition)
trial and aggregate normalized distance and success per category.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ArtiflowError
from .model import ArticulatedObject
from .policy import (
    CameraObservation,
    FlowEstimator,
    FullObservation,
    Observation,
    RolloutConfig,
    Termination,
    estimator_label,
    rollout,
)
from .scene_io import load_scene


@dataclass(frozen=True)
class TrialRecord:
    object_id: str
    category: str
    joint_id: str
    estimator: str
    observation: str
    repetition: int
    seed: int
    e_goal: float
    success: bool
    steps: int
    termination: str
    detail: str = ""

    def __post_init__(self):
        if not self.e_goal >= 0:
            raise ValueError("e_goal must be non-negative")

    @property
    def sort_key(self):
        return (self.estimator, self.observation, self.category, self.object_id, self.joint_id, self.repetition)


CSV_FIELDS = [f.name for f in fields(TrialRecord)]


@dataclass(frozen=True)
class ObjectSource:
    """Lazily loaded object, so that load failures become failed trials."""

    object_id: str
    category: str
    path: str

    def load(self) -> ArticulatedObject:
        return load_scene(self.path)


@dataclass(frozen=True)
class SuiteConfig:
    observations: tuple[Observation, ...] = (FullObservation(),)
    rollout: RolloutConfig = RolloutConfig()
    repetitions: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.observations:
            raise ValueError("at least one observation mode is required")

    def echo(self) -> dict:
        out = {"repetitions": self.repetitions, "rollout": asdict(self.rollout), "observations": []}
        for obs in self.observations:
            if isinstance(obs, CameraObservation):
                out["observations"].append({"mode": "camera", "stride": obs.stride, "custom_camera": obs.camera is not None})
            else:
                out["observations"].append({"mode": "full", "n_points": obs.n_points})
        return out


def trial_seed(suite_seed: int, object_id: str, joint_id: str, observation: str, repetition: int) -> int:
    """Stable per-trial seed.

    The estimator is deliberately not part of the key, so every estimator
    sees the same observations for a given trial (paired comparison).
    """
    key = f"{suite_seed}|{object_id}|{joint_id}|{observation}|{repetition}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class _Work:
    source: ArticulatedObject | ObjectSource
    joint_id: str | None
    estimator: FlowEstimator
    observation: Observation
    repetition: int
    suite_seed: int
    rollout: RolloutConfig


def _source_id(src) -> tuple[str, str]:
    if isinstance(src, ObjectSource):
        return src.object_id, src.category
    return src.name, src.category


def _run_work(w: _Work) -> TrialRecord:
    object_id, category = _source_id(w.source)
    label = estimator_label(w.estimator)
    seed = trial_seed(w.suite_seed, object_id, w.joint_id or "", w.observation.name, w.repetition)

    def failed(detail: str) -> TrialRecord:
        return TrialRecord(
            object_id, category, w.joint_id or "", label, w.observation.name, w.repetition,
            seed, 1.0, False, 0, Termination.LOAD_FAILED.value, detail,
        )

    if w.joint_id is None:
        return failed(_load(w.source)[1])
    obj, err = _load(w.source)
    if obj is None:
        return failed(err)
    res = rollout(obj, None, w.joint_id, w.estimator.for_trial(seed), w.observation, w.rollout, seed=seed)
    return TrialRecord(
        object_id, category, w.joint_id, label, w.observation.name, w.repetition, seed,
        float(res.e_goal), bool(res.success), res.steps_used, res.termination.value, res.detail,
    )


def _load(src) -> tuple[ArticulatedObject | None, str]:
    if isinstance(src, ArticulatedObject):
        return src, ""
    try:
        return src.load(), ""
    except (OSError, ArtiflowError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


@dataclass
class SuiteReport:
    trials: list[TrialRecord]
    suite_seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.trials = sorted(self.trials, key=lambda t: t.sort_key)

    # Aggregates are always recomputed from the raw records.
    def blocks(self) -> list[tuple[str, str]]:
        return sorted({(t.estimator, t.observation) for t in self.trials})

    def categories(self) -> list[str]:
        return sorted({t.category for t in self.trials})

    def select(self, estimator: str, observation: str, category: str | None = None) -> list[TrialRecord]:
        return [
            t for t in self.trials
            if t.estimator == estimator and t.observation == observation
            and (category is None or t.category == category)
        ]

    def summary(self) -> dict:
        out = {}
        for est, obs in self.blocks():
            per_cat = {}
            for cat in self.categories():
                ts = self.select(est, obs, cat)
                if ts:
                    per_cat[cat] = _aggregate(ts)
            out[f"{est}/{obs}"] = {"per_category": per_cat, "overall": _aggregate(self.select(est, obs))}
        return out

    def to_json(self) -> str:
        doc = {
            "suite_seed": self.suite_seed,
            "config": self.config,
            "summary": self.summary(),
            "trials": [asdict(t) for t in self.trials],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for t in self.trials:
            row = asdict(t)
            row["e_goal"] = repr(t.e_goal)
            row["success"] = int(t.success)
            writer.writerow([row[k] for k in CSV_FIELDS])
        return buf.getvalue()

    def to_table(self) -> str:
        """Two aligned tables: mean normalized distance and success rate."""
        cats = self.categories()
        summary = self.summary()
        lines = []
        for title, key in (("Normalized distance (lower is better)", "mean_e_goal"), ("Success rate", "success_rate")):
            header = ["method"] + cats + ["AVG"]
            rows = []
            for name, block in summary.items():
                cells = [name]
                for c in cats:
                    agg = block["per_category"].get(c)
                    cells.append("-" if agg is None else f"{agg[key]:.3f}")
                cells.append(f"{block['overall'][key]:.3f}")
                rows.append(cells)
            widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
            fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
            lines.append(title)
            lines.append(fmt(header))
            lines.append("  ".join("-" * w for w in widths))
            lines.extend(fmt(r) for r in rows)
            lines.append("")
        return "\n".join(lines)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / "report.json", "csv": out / "trials.csv", "table": out / "report.txt"}
        paths["json"].write_text(self.to_json(), encoding="utf-8")
        paths["csv"].write_text(self.to_csv(), encoding="utf-8")
        paths["table"].write_text(self.to_table(), encoding="utf-8")
        return paths


def _aggregate(trials: Sequence[TrialRecord]) -> dict:
    e = np.array([t.e_goal for t in trials])
    s = np.array([t.success for t in trials], dtype=float)
    return {"n": len(trials), "mean_e_goal": float(e.mean()), "success_rate": float(s.mean())}


def run_suite(
    objects: Sequence[ArticulatedObject | ObjectSource],
    estimators: Sequence[FlowEstimator],
    config: SuiteConfig = SuiteConfig(),
    suite_seed: int = 0,
    jobs: int = 1,
    progress: Callable[[TrialRecord], None] | None = None,
) -> SuiteReport:
    """One trial per (object, joint, estimator, observation mode, repetition).

    Objects given as :class:`ObjectSource` are loaded inside the trial; a load
    failure yields one failed ``LoadFailed`` trial per estimator/mode/repetition.
    The report does not depend on ``jobs``.
    """
    if not objects or not estimators:
        raise ValueError("objects and estimators must be non-empty")
    ids = [_source_id(o)[0] for o in objects]
    if len(set(ids)) != len(ids):
        raise ValueError("object ids must be unique")
    labels = [estimator_label(e) for e in estimators]
    if len(set(labels)) != len(labels):
        raise ValueError("estimator labels must be unique")

    work = []
    for src in objects:
        obj, _ = _load(src) if isinstance(src, ObjectSource) else (src, "")
        joints = sorted(obj.joints) if obj is not None else [None]
        for est in estimators:
            for obs in config.observations:
                for rep in range(config.repetitions):
                    for j in joints:
                        work.append(_Work(src, j, est, obs, rep, suite_seed, config.rollout))

    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_work, work, chunksize=1))
        if progress is not None:
            for r in records:
                progress(r)
    else:
        records = []
        for w in work:
            records.append(_run_work(w))
            if progress is not None:
                progress(records[-1])
    return SuiteReport(records, suite_seed, config.echo())


# -- flow validation -------------------------------------------------------------


@dataclass(frozen=True)
class FlowValidation:
    n_objects: int
    n_cases: int
    max_angle: float
    max_relative_magnitude: float
    prismatic_max_abs: float
    revolute_max_abs: float

    def within(self, angle_tol: float = 1e-4, magnitude_tol: float = 1e-4, prismatic_tol: float = 1e-12) -> bool:
        return (
            self.max_angle < angle_tol
            and self.max_relative_magnitude < magnitude_tol
            and self.prismatic_max_abs <= prismatic_tol
        )


def validate_flow(
    n_objects: int = 100,
    states_per_object: int = 5,
    delta_theta: float = 1e-6,
    seed: int = 0,
    n_points: int = 400,
    random_pose: bool = True,
) -> FlowValidation:
    """Compare the closed-form flow with the finite-difference oracle.

    Objects cycle through the procedural kinds; with ``random_pose`` each is
    also placed at a random rigid pose and uniform scale.
    """
    from .flow import fd_flow_oracle, flow_deviation, gt_flow
    from .geom import sample_surface
    from .model import JointKind, transform_object
    from .procgen import ProcKind, ProcSpec, generate
    from .transforms import Pose, quat_normalize

    if n_objects < 1 or states_per_object < 1:
        raise ValueError("need at least one object and one state")
    if delta_theta == 0:
        raise ValueError("delta_theta must be nonzero")
    rng = np.random.default_rng(seed)
    kinds = list(ProcKind)
    worst = dict(angle=0.0, rel=0.0, pris=0.0, rev=0.0)
    cases = 0
    for i in range(n_objects):
        obj = generate(ProcSpec(kinds[i % len(kinds)], seed=int(rng.integers(2**31))))
        if random_pose:
            pose = Pose(rng.uniform(-1, 1, 3), quat_normalize(rng.normal(size=4)))
            obj = transform_object(obj, pose, float(rng.uniform(0.5, 2.0)))
        for _ in range(states_per_object):
            state = obj.random_state(rng)
            cloud = sample_surface(obj, state, n_points, int(rng.integers(2**31)))
            for jid in sorted(obj.joints):
                if not (cloud.link_labels == obj.joints[jid].child_link).any():
                    continue
                dev = flow_deviation(gt_flow(obj, state, cloud, jid), fd_flow_oracle(obj, state, cloud, jid, delta_theta))
                cases += 1
                worst["angle"] = max(worst["angle"], dev.max_angle)
                worst["rel"] = max(worst["rel"], dev.max_relative_magnitude)
                key = "pris" if obj.joints[jid].kind is JointKind.PRISMATIC else "rev"
                worst[key] = max(worst[key], dev.max_abs)
    return FlowValidation(n_objects, cases, worst["angle"], worst["rel"], worst["pris"], worst["rev"])

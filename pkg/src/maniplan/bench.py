"""Benchmark harness: run seeded trial batches over problem suites and emit
per-trial CSV records plus solution-time CDF tables.

Problem entry format (YAML; also the single-problem file for ``solve``)::

    id: shelf_plane            # suites only; defaults to the list index
    robot: arm7                # packaged model name or a file path
    scene: shelf               # packaged scene name or a file path
    densify: 1                 # union-preserving box subdivision factor
    constraint:                # omit or kind: none for unconstrained
      kind: plane              # plane | line | none
      normal: [0, 0, 1]        # plane
      offset: 0.55
      # point/direction for kind: line
      fixed_orientation: [0, 1, 0, 0]   # optional (w, x, y, z)
      angular_weight: 0.5
      tau_task: 0.01
    pair_seed: 3               # deterministic start/goal generation …
    start: [...]               # … or give both explicitly
    goal:  [...]
    params:                    # optional PlanParams overrides
      step_size: 0.5
      width: 16
      max_iterations: 800
      time_budget_ms: 10000
      projection: {alpha: 0.1, max_iters: 128, lam: 0.001}

A suite file wraps a list of entries::

    name: default
    trials: 3
    seed_offset: 0
    defaults: {robot: arm7, params: {width: 16}}
    problems: [ {id: ..., ...}, ... ]

An entry with ``pairs: N`` expands into N problems (ids suffixed ``#k``)
whose start/goal pairs are generated from ``pair_seed + k``.

Trial t of any problem runs the planner with seed offset
``suite.seed_offset + t * 10_000`` so trials never share a sample stream.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
import yaml

from .constraints import ConstraintSpec, LineConstraint, PlaneConstraint
from .errors import ProblemFormatError
from .geometry import Scene, load_scene, subdivide_scene
from .kinematics import RobotModel, load_robot
from .planner import PlanParams, PlanProblem, PlanResult, plan
from .projection import ProjectionParams, project_configuration
from .sampling import HaltonState, trial_seed_offset
from .validation import validate_configuration

__all__ = [
    "TrialRecord", "BenchProblem", "BenchSuite", "CSV_COLUMNS",
    "load_problem", "load_suite", "generate_pair", "run_suite",
    "write_records", "read_records", "emit_cdf", "write_cdfs", "summarize",
]

# Pair-generation streams sit far above any planner trial stream.
_PAIR_SEED_BASE = 500_000_000
_PAIR_MAX_DRAWS = 4000

CSV_COLUMNS = [
    "problem", "trial", "projection", "cc_flag", "densify", "seed_offset",
    "status", "wall_ms", "iterations", "projection_failures",
    "checks_performed", "checks_possible",
]


@dataclass(frozen=True)
class TrialRecord:
    problem: str
    trial: int
    projection: str
    cc_flag: str
    densify: int
    seed_offset: int
    status: str
    wall_ms: float
    iterations: int
    projection_failures: int
    checks_performed: int
    checks_possible: int

    def row(self) -> list[str]:
        return [self.problem, str(self.trial), self.projection, self.cc_flag,
                str(self.densify), str(self.seed_offset), self.status,
                repr(self.wall_ms), str(self.iterations),
                str(self.projection_failures), str(self.checks_performed),
                str(self.checks_possible)]

    @classmethod
    def from_row(cls, row: list[str]) -> "TrialRecord":
        return cls(problem=row[0], trial=int(row[1]), projection=row[2],
                   cc_flag=row[3], densify=int(row[4]),
                   seed_offset=int(row[5]), status=row[6],
                   wall_ms=float(row[7]), iterations=int(row[8]),
                   projection_failures=int(row[9]),
                   checks_performed=int(row[10]),
                   checks_possible=int(row[11]))


@dataclass(frozen=True)
class BenchProblem:
    id: str
    model: RobotModel
    scene: Scene                      # already densified
    spec: ConstraintSpec | None
    start: np.ndarray
    goal: np.ndarray
    params: PlanParams
    densify: int = 1


@dataclass(frozen=True)
class BenchSuite:
    name: str
    problems: tuple[BenchProblem, ...]
    trials: int = 1
    seed_offset: int = 0
    # Entries that failed to load: (id, message).  Trials for them are
    # recorded as LoadError so the suite shape stays predictable.
    load_failures: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _data_file(kind: str, name: str):
    return resources.files("maniplan").joinpath(f"data/{kind}/{name}.yaml")


def _resolve(kind: str, value, loader, where: str):
    """A mapping is parsed inline; a string is a path or a packaged name."""
    if isinstance(value, dict):
        return loader(yaml.safe_dump(value))
    if not isinstance(value, str):
        raise ProblemFormatError("expected a name, path, or mapping", where)
    if os.path.sep in value or value.endswith((".yaml", ".yml")) \
            or os.path.exists(value):
        return loader(value)
    ref = _data_file(kind, value)
    if not ref.is_file():
        raise ProblemFormatError(
            f"no packaged {kind[:-1]} named {value!r}", where)
    return loader(ref.read_text())


def _parse_constraint(doc, where: str) -> ConstraintSpec | None:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise ProblemFormatError("constraint must be a mapping", where)
    kind = doc.get("kind", "none")
    if kind == "none":
        return None
    common = {}
    if doc.get("fixed_orientation") is not None:
        common["fixed_orientation"] = doc["fixed_orientation"]
    if doc.get("angular_weight") is not None:
        common["angular_weight"] = float(doc["angular_weight"])
    if doc.get("tau_task") is not None:
        common["tau_task"] = float(doc["tau_task"])
    try:
        if kind == "plane":
            pos = PlaneConstraint(normal=doc.get("normal"),
                                  offset=float(doc.get("offset", 0.0)))
        elif kind == "line":
            pos = LineConstraint(point=doc.get("point"),
                                 direction=doc.get("direction"))
        else:
            raise ProblemFormatError(f"unknown constraint kind {kind!r}",
                                     where)
        return ConstraintSpec(pos, **common)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(str(exc), where) from None


def _parse_params(doc, where: str) -> PlanParams:
    if doc is None:
        return PlanParams()
    if not isinstance(doc, dict):
        raise ProblemFormatError("params must be a mapping", where)
    doc = dict(doc)
    proj = doc.pop("projection", None)
    kwargs = {}
    for key in ("step_size", "time_budget_ms", "connect_tolerance"):
        if key in doc:
            kwargs[key] = float(doc.pop(key))
    for key in ("width", "max_iterations", "attempts",
                "max_connect_segments"):
        if key in doc:
            kwargs[key] = int(doc.pop(key))
    if doc:
        raise ProblemFormatError(
            f"unknown params field {sorted(doc)[0]!r}", where)
    if proj is not None:
        pk = {}
        for key in ("alpha", "lam", "tau_task", "tau_sm"):
            if key in proj:
                pk[key] = float(proj.pop(key))
        if "max_iters" in proj:
            pk["max_iters"] = int(proj.pop("max_iters"))
        if proj:
            raise ProblemFormatError(
                f"unknown projection field {sorted(proj)[0]!r}",
                f"{where}.projection")
        kwargs["projection"] = ProjectionParams(**pk)
    try:
        return PlanParams(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(str(exc), where) from None


def generate_pair(model: RobotModel, scene: Scene,
                  spec: ConstraintSpec | None, pair_seed: int,
                  min_separation: float = 0.5):
    """Deterministic valid (start, goal) pair for a problem.

    Draws low-discrepancy samples from a stream reserved for pair
    generation, Newton-projects each onto the constraint when one is
    given, and keeps collision-free results at least ``min_separation``
    apart in joint space.
    """
    sampler = HaltonState(model.n,
                          seed_offset=_PAIR_SEED_BASE
                          + trial_seed_offset(0, pair_seed))
    limits = model.limits
    first = None
    for _ in range(_PAIR_MAX_DRAWS):
        q = sampler.next_sample(limits)
        if spec is not None:
            q, ok = project_configuration(q, spec, model)
            if not ok:
                continue
        if not validate_configuration(q, scene, model):
            continue
        if first is None:
            first = q
            continue
        d = q - first
        if float(np.sqrt((d * d).sum())) >= min_separation:
            return first, q
    raise ProblemFormatError(
        f"could not generate a valid start/goal pair (seed {pair_seed})")


def _parse_problem(doc, defaults: dict, where: str,
                   default_id: str) -> BenchProblem:
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem entry must be a mapping", where)
    merged = dict(defaults)
    merged.update(doc)
    pid = str(merged.get("id", default_id))
    robot_ref = merged.get("robot")
    if robot_ref is None:
        raise ProblemFormatError("missing robot", where)
    model = _resolve("robots", robot_ref, load_robot, f"{where}.robot")
    scene_ref = merged.get("scene")
    scene = (Scene() if scene_ref is None else
             _resolve("scenes", scene_ref, load_scene, f"{where}.scene"))
    densify = int(merged.get("densify", 1))
    if densify > 1:
        scene = subdivide_scene(scene, densify)
    spec = _parse_constraint(merged.get("constraint"), f"{where}.constraint")
    base = _parse_params(merged.get("params"), f"{where}.params")
    if merged.get("start") is not None or merged.get("goal") is not None:
        if merged.get("start") is None or merged.get("goal") is None:
            raise ProblemFormatError("start and goal must come together",
                                     where)
        start = np.asarray(merged["start"], dtype=float)
        goal = np.asarray(merged["goal"], dtype=float)
    else:
        pair_seed = merged.get("pair_seed")
        if pair_seed is None:
            raise ProblemFormatError(
                "give start/goal or a pair_seed", where)
        start, goal = generate_pair(model, scene, spec, int(pair_seed),
                                    min_separation=base.step_size)
    return BenchProblem(id=pid, model=model, scene=scene, spec=spec,
                        start=start, goal=goal, params=base, densify=densify)


def load_problem(source, overrides: dict | None = None) -> BenchProblem:
    """Load a single-problem file (see module docstring)."""
    from .geometry import _read_source
    text, where = _read_source(source, ProblemFormatError)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProblemFormatError(f"not valid YAML: {exc}", where) from None
    doc = _apply_overrides(doc if isinstance(doc, dict) else {},
                           overrides or {})
    return _parse_problem(doc, {}, where, default_id="problem")


def _apply_overrides(doc: dict, overrides: dict) -> dict:
    doc = dict(doc)
    if overrides.get("densify") is not None:
        doc["densify"] = overrides["densify"]
    return doc


def _expand_entries(raw_problems, where):
    """Explode ``pairs: N`` entries into N concrete ones."""
    out = []
    for i, entry in enumerate(raw_problems):
        loc = f"{where}[{i}]"
        if isinstance(entry, dict) and "pairs" in entry:
            entry = dict(entry)
            count = int(entry.pop("pairs"))
            base_seed = int(entry.pop("pair_seed", 0))
            base_id = str(entry.get("id", i))
            for k in range(count):
                sub = dict(entry)
                sub["id"] = f"{base_id}#{k}"
                sub["pair_seed"] = base_seed + k
                out.append((sub, f"{loc}#{k}"))
        else:
            out.append((entry, loc))
    return out


def load_suite(source, overrides: dict | None = None) -> BenchSuite:
    """Load a suite file; per-problem failures are recorded, not raised."""
    from .geometry import _read_source
    overrides = overrides or {}
    text, where = _read_source(source, ProblemFormatError)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProblemFormatError(f"not valid YAML: {exc}", where) from None
    if not isinstance(doc, dict):
        raise ProblemFormatError("suite root must be a mapping", where)
    defaults = doc.get("defaults") or {}
    if not isinstance(defaults, dict):
        raise ProblemFormatError("defaults must be a mapping",
                                 f"{where}.defaults")
    raw = doc.get("problems")
    if not isinstance(raw, list) or not raw:
        raise ProblemFormatError("problems must be a non-empty list",
                                 f"{where}.problems")
    problems = []
    failures = []
    for i, (entry, loc) in enumerate(_expand_entries(raw, f"{where}.problems")):
        entry = _apply_overrides(entry if isinstance(entry, dict) else {},
                                 overrides)
        try:
            problems.append(_parse_problem(entry, defaults, loc,
                                           default_id=str(i)))
        except ProblemFormatError as exc:
            pid = str(entry.get("id", i)) if isinstance(entry, dict) else str(i)
            failures.append((pid, str(exc)))
    trials = int(overrides.get("trials") or doc.get("trials", 1))
    seed_offset = overrides.get("seed_offset")
    if seed_offset is None:
        seed_offset = doc.get("seed_offset", 0)
    return BenchSuite(name=str(doc.get("name", "")),
                      problems=tuple(problems), trials=trials,
                      seed_offset=int(seed_offset),
                      load_failures=tuple(failures))


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def _run_trial(problem: BenchProblem, trial: int, base_offset: int,
               projection: str | None, cc_flag: str | None,
               deterministic: bool) -> TrialRecord:
    offset = trial_seed_offset(base_offset, trial)
    params = replace(
        problem.params,
        seed_offset=offset,
        deterministic=deterministic,
        projection_mode=projection or problem.params.projection_mode,
        flag_mode=cc_flag or problem.params.flag_mode,
    )
    prob = PlanProblem(model=problem.model, scene=problem.scene,
                       spec=problem.spec, start=problem.start,
                       goal=problem.goal, params=params, name=problem.id)
    try:
        result: PlanResult = plan(prob)
    except Exception as exc:  # a broken problem must not sink the suite
        return TrialRecord(problem.id, trial, params.projection_mode,
                           params.flag_mode, problem.densify, offset,
                           f"Error:{type(exc).__name__}", 0.0, 0, 0, 0, 0)
    st = result.stats
    return TrialRecord(problem.id, trial, params.projection_mode,
                       params.flag_mode, problem.densify, offset,
                       result.status, st.wall_ms, st.iterations,
                       st.projection_failures, st.cc_performed,
                       st.cc_possible)


def run_suite(suite: BenchSuite, out_dir: str | None = None,
              projection: str | None = None, cc_flag: str | None = None,
              deterministic: bool = False,
              progress=None) -> list[TrialRecord]:
    """One record per (problem, trial); flushed to records.csv as produced."""
    records = []
    writer = None
    fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, "records.csv"), "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        fh.flush()

    def emit(rec):
        records.append(rec)
        if writer is not None:
            writer.writerow(rec.row())
            fh.flush()
        if progress is not None:
            progress(rec)

    try:
        for pid, message in suite.load_failures:
            for trial in range(suite.trials):
                emit(TrialRecord(pid, trial, projection or "parallel",
                                 cc_flag or "on", 1,
                                 trial_seed_offset(suite.seed_offset, trial),
                                 "LoadError", 0.0, 0, 0, 0, 0))
        for problem in suite.problems:
            for trial in range(suite.trials):
                emit(_run_trial(problem, trial, suite.seed_offset,
                                projection, cc_flag, deterministic))
    finally:
        if fh is not None:
            fh.close()
    return records


def write_records(records, path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())


def read_records(source) -> list[TrialRecord]:
    """Inverse of write_records (CSV round-trip)."""
    if hasattr(source, "read"):
        fh = source
        close = False
    else:
        fh = open(source, "r", newline="")
        close = True
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise ProblemFormatError(f"unexpected CSV header: {header}")
        return [TrialRecord.from_row(row) for row in reader if row]
    finally:
        if close:
            fh.close()


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _group_key(rec: TrialRecord, keys) -> tuple:
    return tuple(getattr(rec, k) for k in keys)


def _group_label(key) -> str:
    return "_".join(str(v) for v in key)


def emit_cdf(records, keys=("projection", "cc_flag", "densify")):
    """Per group: sorted (wall_ms, cumulative fraction solved) rows.

    The fraction is over ALL trials in the group, so a group with
    unsolved trials caps below 1.0.
    """
    groups: dict[tuple, list] = {}
    for rec in records:
        groups.setdefault(_group_key(rec, keys), []).append(rec)
    out = {}
    for key, recs in sorted(groups.items(), key=lambda kv: kv[0]):
        total = len(recs)
        times = sorted(r.wall_ms for r in recs if r.status == "Solved")
        out[_group_label(key)] = [((t, (i + 1) / total))
                                  for i, t in enumerate(times)]
    return out


def write_cdfs(records, out_dir: str, keys=("projection", "cc_flag",
                                            "densify")):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for label, rows in emit_cdf(records, keys).items():
        path = os.path.join(out_dir, f"cdf_{label}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_ms", "fraction_solved"])
            for t, frac in rows:
                writer.writerow([repr(t), repr(frac)])
        paths.append(path)
    return paths


def summarize(records, keys=("projection", "cc_flag", "densify")):
    """Per-group aggregates with explicit trial counts.

    ``checks_saved`` averages 1 − performed/possible over trials where the
    early-termination flag actually skipped work (performed < possible),
    so it is only informative for flag-on groups.
    """
    groups: dict[tuple, list] = {}
    for rec in records:
        groups.setdefault(_group_key(rec, keys), []).append(rec)
    out = {}
    for key, recs in sorted(groups.items(), key=lambda kv: kv[0]):
        solved = [r for r in recs if r.status == "Solved"]
        saved = [1.0 - r.checks_performed / r.checks_possible
                 for r in recs
                 if r.checks_possible and r.checks_performed < r.checks_possible]
        entry = {
            "trials": len(recs),
            "solved": len(solved),
            "success_rate": len(solved) / len(recs) if recs else 0.0,
        }
        if solved:
            times = sorted(r.wall_ms for r in solved)
            entry["mean_wall_ms"] = sum(times) / len(times)
            mid = len(times) // 2
            entry["median_wall_ms"] = (times[mid] if len(times) % 2
                                       else 0.5 * (times[mid - 1] + times[mid]))
        if saved:
            entry["mean_checks_saved"] = sum(saved) / len(saved)
        out[_group_label(key)] = entry
    return out

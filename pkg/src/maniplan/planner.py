"""Constrained bidirectional RRT-Connect.

Both trees grow on the constraint manifold: every extension interpolates a
straight segment from the nearest node toward a steered sample, projects
the whole segment at once, and validates the result against the scene.
The projected endpoint becomes the new node, so edges are stored as
endpoint pairs and the full motion is re-derivable (re-interpolate,
re-project) from them — ``revalidate_path`` below does exactly that.

Edge direction matters to re-derivation: tree edges are certified in their
growth direction (parent → child).  A solved path walks the goal tree from
leaf to root, so ``PlanResult.edge_sources`` records, per consecutive path
pair, whether it came from the start tree, the goal tree (re-derive
reversed), or the junction segment validated when the trees met.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSpec, task_error, unconstrained
from .errors import PlanSetupError
from .geometry import Scene
from .kinematics import RobotModel, forward_kinematics
from .projection import (ProjectionParams, interpolate_segment,
                         parallel_project, sequential_project)
from .sampling import HaltonState
from .validation import validate_configuration, validate_motion

__all__ = [
    "Tree", "PlanParams", "PlanProblem", "PlanResult", "PlanStats",
    "PlanContext", "ExtendOutcome", "ConnectOutcome",
    "nearest", "steer", "extend", "connect", "plan", "extract_path",
    "derive_edge", "revalidate_path",
]


class Tree:
    """Append-only configuration tree; parents point toward the root."""

    def __init__(self, root, root_kind: str):
        root = np.asarray(root, dtype=float)
        self.root_kind = root_kind
        self._buf = np.empty((64, root.shape[0]))
        self._buf[0] = root
        self._len = 1
        self.parents = [0]

    def __len__(self) -> int:
        return self._len

    @property
    def nodes(self) -> np.ndarray:
        """(len, n) view of all nodes; do not mutate."""
        return self._buf[:self._len]

    def node(self, i: int) -> np.ndarray:
        if not 0 <= i < self._len:
            raise IndexError(f"node {i} out of range")
        return self._buf[i].copy()

    def add(self, q, parent: int) -> int:
        if not 0 <= parent < self._len:
            raise IndexError(f"parent {parent} out of range")
        if self._len == self._buf.shape[0]:
            grown = np.empty((2 * self._buf.shape[0], self._buf.shape[1]))
            grown[:self._len] = self._buf[:self._len]
            self._buf = grown
        self._buf[self._len] = np.asarray(q, dtype=float)
        self.parents.append(parent)
        self._len += 1
        return self._len - 1

    def chain(self, i: int) -> list[int]:
        """Indices from the root to node i, inclusive."""
        out = [i]
        while self.parents[i] != i:
            i = self.parents[i]
            out.append(i)
        out.reverse()
        return out


@dataclass(frozen=True)
class PlanParams:
    step_size: float = 0.5
    width: int = 32                       # waypoints per segment
    projection: ProjectionParams = ProjectionParams()
    max_iterations: int = 10_000
    time_budget_ms: float = 10_000.0
    connect_tolerance: float | None = None  # None: step_size / 10
    projection_mode: str = "parallel"     # parallel | literal-gap | naive
    flag_mode: str = "on"
    seed_offset: int = 0
    deterministic: bool = False           # ignore the wall clock
    attempts: int = 1                     # extension attempts per iteration
    max_connect_segments: int = 256

    def __post_init__(self):
        if self.step_size <= 0 or self.width < 2:
            raise ValueError("step_size > 0 and width >= 2 required")
        if self.max_iterations < 1 or self.attempts < 1:
            raise ValueError("max_iterations and attempts must be >= 1")

    @property
    def tolerance(self) -> float:
        return (self.connect_tolerance if self.connect_tolerance is not None
                else self.step_size / 10.0)


@dataclass(frozen=True)
class PlanProblem:
    model: RobotModel
    scene: Scene
    spec: ConstraintSpec | None           # None plans unconstrained
    start: np.ndarray
    goal: np.ndarray
    params: PlanParams = PlanParams()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "start", self.model.check_q(self.start))
        object.__setattr__(self, "goal", self.model.check_q(self.goal))


@dataclass
class PlanStats:
    iterations: int = 0
    extensions_attempted: int = 0
    extensions_added: int = 0
    projection_failures: int = 0
    collision_rejections: int = 0
    cc_performed: int = 0
    cc_possible: int = 0
    wall_ms: float = 0.0
    nodes_start: int = 0
    nodes_goal: int = 0


@dataclass(frozen=True)
class PlanResult:
    status: str                           # Solved | TimedOut | IterLimit
    path: tuple[np.ndarray, ...] | None
    edge_sources: tuple[str, ...] | None  # per path edge: start|junction|goal
    stats: PlanStats

    @property
    def solved(self) -> bool:
        return self.status == "Solved"


@dataclass
class PlanContext:
    """Everything an extension needs, plus the run's accumulators."""

    model: RobotModel
    scene: Scene
    spec: ConstraintSpec
    params: PlanParams
    stats: PlanStats = field(default_factory=PlanStats)

    @classmethod
    def from_problem(cls, problem: PlanProblem) -> "PlanContext":
        spec = problem.spec if problem.spec is not None else unconstrained()
        return cls(problem.model, problem.scene, spec, problem.params)


@dataclass(frozen=True)
class ExtendOutcome:
    status: str                           # Added | Rejected
    node: int | None = None
    reason: str | None = None             # projection | collision | degenerate

    @property
    def added(self) -> bool:
        return self.status == "Added"


@dataclass(frozen=True)
class ConnectOutcome:
    status: str                           # Reached | Advanced | Trapped
    node: int | None = None               # meet node when Reached
    segments: int = 0

    @property
    def reached(self) -> bool:
        return self.status == "Reached"


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def nearest(tree: Tree, q) -> int:
    """Index of the closest node (Euclidean); ties go to the lowest index."""
    d = tree.nodes - np.asarray(q, dtype=float)
    return int(np.argmin((d * d).sum(axis=1)))


def steer(q_near, q_rand, step: float):
    q_near = np.asarray(q_near, dtype=float)
    q_rand = np.asarray(q_rand, dtype=float)
    delta = q_rand - q_near
    dist = float(np.sqrt((delta * delta).sum()))
    if dist <= step:
        return q_rand.copy()
    return q_near + (step / dist) * delta


def _project(seg, ctx: PlanContext, collect_trace=False):
    if ctx.params.projection_mode == "naive":
        return sequential_project(seg, ctx.spec, ctx.model,
                                  ctx.params.projection)
    return parallel_project(seg, ctx.spec, ctx.model, ctx.params.projection,
                            mode=ctx.params.projection_mode,
                            collect_trace=collect_trace)


def derive_edge(a, b, ctx: PlanContext, stats: PlanStats | None = None):
    """Re-derivable motion for the edge a→b, or None.

    Interpolates, projects, and collision-checks; this is the exact
    computation re-run by revalidate_path, so an edge accepted here stays
    verifiable from its endpoints alone.
    """
    seg = interpolate_segment(a, b, ctx.params.width)
    out = _project(seg, ctx)
    if not out.ok:
        if stats is not None:
            stats.projection_failures += 1
        return None
    report = validate_motion(out.segment, ctx.scene, ctx.model,
                             flag_mode=ctx.params.flag_mode)
    if stats is not None:
        stats.cc_performed += report.primitive_checks_performed
        stats.cc_possible += report.primitive_checks_possible
    if not report.valid:
        if stats is not None:
            stats.collision_rejections += 1
        return None
    return out.segment


@dataclass(frozen=True)
class _Attempt:
    """One candidate extension, computed without mutating the tree."""

    i_near: int
    q_end: np.ndarray
    projection_failures: int = 0
    collision_rejections: int = 0
    cc_performed: int = 0
    cc_possible: int = 0
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.reason is None


def _attempt_extend(tree: Tree, snapshot_len: int, q_rand,
                    ctx: PlanContext) -> _Attempt:
    d = tree.nodes[:snapshot_len] - np.asarray(q_rand, dtype=float)
    i_near = int(np.argmin((d * d).sum(axis=1)))
    q_near = tree.node(i_near)
    q_steer = steer(q_near, q_rand, ctx.params.step_size)
    if np.array_equal(q_steer, q_near):
        return _Attempt(i_near, q_near, reason="degenerate")
    seg = interpolate_segment(q_near, q_steer, ctx.params.width)
    out = _project(seg, ctx)
    if not out.ok:
        return _Attempt(i_near, q_steer, projection_failures=1,
                        reason="projection")
    q_end = out.segment.end.copy()
    if np.array_equal(q_end, q_near):
        return _Attempt(i_near, q_end, reason="degenerate")
    # Canonical edge: the motion must be re-derivable from (q_near, q_end).
    # When projection kept the steered endpoint, the canonical segment is
    # the one just computed; otherwise re-derive from the new endpoints.
    if np.array_equal(q_end, q_steer):
        edge = out.segment
        report = validate_motion(edge, ctx.scene, ctx.model,
                                 flag_mode=ctx.params.flag_mode)
        if not report.valid:
            return _Attempt(i_near, q_end, collision_rejections=1,
                            cc_performed=report.primitive_checks_performed,
                            cc_possible=report.primitive_checks_possible,
                            reason="collision")
        return _Attempt(i_near, q_end,
                        cc_performed=report.primitive_checks_performed,
                        cc_possible=report.primitive_checks_possible)
    probe = PlanStats()
    edge = derive_edge(q_near, q_end, ctx, probe)
    if edge is None:
        reason = ("projection" if probe.projection_failures else "collision")
        return _Attempt(i_near, q_end,
                        projection_failures=probe.projection_failures,
                        collision_rejections=probe.collision_rejections,
                        cc_performed=probe.cc_performed,
                        cc_possible=probe.cc_possible, reason=reason)
    return _Attempt(i_near, q_end, cc_performed=probe.cc_performed,
                    cc_possible=probe.cc_possible)


def _merge_attempt(stats: PlanStats, att: _Attempt):
    stats.extensions_attempted += 1
    stats.projection_failures += att.projection_failures
    stats.collision_rejections += att.collision_rejections
    stats.cc_performed += att.cc_performed
    stats.cc_possible += att.cc_possible


def extend(tree: Tree, q_rand, ctx: PlanContext) -> ExtendOutcome:
    """Single projected extension toward a sample."""
    att = _attempt_extend(tree, len(tree), q_rand, ctx)
    _merge_attempt(ctx.stats, att)
    if not att.ok:
        return ExtendOutcome("Rejected", reason=att.reason)
    node = tree.add(att.q_end, att.i_near)
    ctx.stats.extensions_added += 1
    return ExtendOutcome("Added", node=node)


def _extend_batch(tree: Tree, samples, ctx: PlanContext) -> ExtendOutcome:
    """First-success-wins over several attempts against one tree snapshot.

    The winner is chosen by sample order, so threaded evaluation commits
    the same node the sequential order would.
    """
    snapshot = len(tree)
    if ctx.params.deterministic or len(samples) == 1:
        results = []
        for q_rand in samples:
            att = _attempt_extend(tree, snapshot, q_rand, ctx)
            results.append(att)
            if att.ok:
                break
    else:
        with ThreadPoolExecutor(max_workers=len(samples)) as pool:
            results = list(pool.map(
                lambda s: _attempt_extend(tree, snapshot, s, ctx), samples))
    outcome = ExtendOutcome("Rejected", reason="projection")
    winner = None
    for att in results:
        _merge_attempt(ctx.stats, att)
        if winner is None and att.ok:
            winner = att
    if winner is not None:
        node = tree.add(winner.q_end, winner.i_near)
        ctx.stats.extensions_added += 1
        outcome = ExtendOutcome("Added", node=node)
    elif results:
        outcome = ExtendOutcome("Rejected", reason=results[0].reason)
    return outcome


def connect(tree: Tree, q_target, ctx: PlanContext) -> ConnectOutcome:
    """Greedy repeated extension toward a fixed target configuration.

    Each accepted segment must strictly decrease the endpoint distance to
    the target; Reached when within the connect tolerance.
    """
    q_target = np.asarray(q_target, dtype=float)
    i_cur = nearest(tree, q_target)
    q_cur = tree.node(i_cur)
    delta = q_cur - q_target
    dist = float(np.sqrt((delta * delta).sum()))
    tol = ctx.params.tolerance
    segments = 0
    if dist <= tol:
        return ConnectOutcome("Reached", node=i_cur, segments=0)
    while segments < ctx.params.max_connect_segments:
        q_steer = steer(q_cur, q_target, ctx.params.step_size)
        seg = interpolate_segment(q_cur, q_steer, ctx.params.width)
        out = _project(seg, ctx)
        if not out.ok:
            ctx.stats.projection_failures += 1
            break
        q_end = out.segment.end.copy()
        if np.array_equal(q_end, q_steer):
            edge = out.segment
            report = validate_motion(edge, ctx.scene, ctx.model,
                                     flag_mode=ctx.params.flag_mode)
            ctx.stats.cc_performed += report.primitive_checks_performed
            ctx.stats.cc_possible += report.primitive_checks_possible
            if not report.valid:
                ctx.stats.collision_rejections += 1
                break
        else:
            edge = derive_edge(q_cur, q_end, ctx, ctx.stats)
            if edge is None:
                break
        delta = q_end - q_target
        newdist = float(np.sqrt((delta * delta).sum()))
        if not newdist < dist:
            break
        i_cur = tree.add(q_end, i_cur)
        q_cur = q_end
        dist = newdist
        segments += 1
        if dist <= tol:
            return ConnectOutcome("Reached", node=i_cur, segments=segments)
    status = "Advanced" if segments > 0 else "Trapped"
    return ConnectOutcome(status, node=i_cur if segments > 0 else None,
                          segments=segments)


# ---------------------------------------------------------------------------
# the planner
# ---------------------------------------------------------------------------

def _check_endpoint(name, q, ctx: PlanContext):
    packed = ctx.model.packed
    if (q < packed.lo).any() or (q > packed.hi).any():
        raise PlanSetupError(f"{name} violates joint limits")
    e = task_error(ctx.spec, forward_kinematics(ctx.model, q))
    tau = (ctx.params.projection.tau_task
           if ctx.params.projection.tau_task is not None
           else ctx.spec.tau_task)
    if not float(np.sqrt((e * e).sum())) < tau:
        raise PlanSetupError(f"{name} is off the constraint manifold")
    if not validate_configuration(q, ctx.scene, ctx.model):
        raise PlanSetupError(f"{name} is in collision")


def plan(problem: PlanProblem) -> PlanResult:
    ctx = PlanContext.from_problem(problem)
    params = ctx.params
    stats = ctx.stats
    t0 = time.monotonic()
    _check_endpoint("start", problem.start, ctx)
    _check_endpoint("goal", problem.goal, ctx)
    if np.array_equal(problem.start, problem.goal):
        stats.wall_ms = (time.monotonic() - t0) * 1e3
        stats.nodes_start = stats.nodes_goal = 1
        return PlanResult("Solved", (problem.start.copy(),), (), stats)

    tree_s = Tree(problem.start, "start")
    tree_g = Tree(problem.goal, "goal")
    trees = (tree_s, tree_g)
    sampler = HaltonState(ctx.model.n, seed_offset=params.seed_offset)
    limits = ctx.model.limits
    status = "IterLimit"

    for it in range(1, params.max_iterations + 1):
        if (not params.deterministic
                and (time.monotonic() - t0) * 1e3 > params.time_budget_ms):
            status = "TimedOut"
            break
        stats.iterations = it
        a = trees[(it - 1) % 2]
        b = trees[it % 2]
        samples = [sampler.next_sample(limits)
                   for _ in range(params.attempts)]
        ext = _extend_batch(a, samples, ctx)
        if not ext.added:
            continue
        q_new = a.node(ext.node)
        con = connect(b, q_new, ctx)
        if not con.reached:
            continue
        q_meet = b.node(con.node)
        if a.root_kind == "start":
            meet_s, meet_g = ext.node, con.node
            js, jg = q_new, q_meet
        else:
            meet_s, meet_g = con.node, ext.node
            js, jg = q_meet, q_new
        if (np.array_equal(js, jg)
                or derive_edge(js, jg, ctx, stats) is not None):
            path, sources = extract_path(tree_s, tree_g, meet_s, meet_g)
            stats.wall_ms = (time.monotonic() - t0) * 1e3
            stats.nodes_start = len(tree_s)
            stats.nodes_goal = len(tree_g)
            return PlanResult("Solved", path, sources, stats)
        # The junction segment itself failed; keep growing.

    stats.wall_ms = (time.monotonic() - t0) * 1e3
    stats.nodes_start = len(tree_s)
    stats.nodes_goal = len(tree_g)
    return PlanResult(status, None, None, stats)


def extract_path(tree_s: Tree, tree_g: Tree, meet_s: int, meet_g: int):
    """Root→meet of the start tree + reversed root→meet of the goal tree.

    Returns (path, edge_sources); a duplicated meeting configuration is
    emitted once and the junction edge is then omitted.
    """
    pa = [tree_s.node(i) for i in tree_s.chain(meet_s)]
    pb = [tree_g.node(i) for i in reversed(tree_g.chain(meet_g))]
    sources = ["start"] * (len(pa) - 1)
    if np.array_equal(pa[-1], pb[0]):
        pb = pb[1:]
        if pb:
            sources.append("goal")
            sources.extend(["goal"] * (len(pb) - 1))
    elif pb:
        sources.append("junction")
        sources.extend(["goal"] * (len(pb) - 1))
    return tuple(pa + pb), tuple(sources)


def revalidate_path(result: PlanResult, problem: PlanProblem) -> bool:
    """Independently re-derive and re-check every edge of a solved path.

    Goal-tree edges were certified in tree-growth direction, so they are
    re-derived with their endpoints swapped (see module docstring).
    """
    if not result.solved:
        return False
    ctx = PlanContext.from_problem(problem)
    path = result.path
    for k, src in enumerate(result.edge_sources):
        x, y = path[k], path[k + 1]
        a, b = (y, x) if src == "goal" else (x, y)
        if derive_edge(a, b, ctx) is None:
            return False
    return True

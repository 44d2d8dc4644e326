"""Projection of motion segments onto the constraint manifold.

Two projectors share one outcome contract:

* ``parallel_project`` — one logical worker per waypoint; every iteration
  runs a gradient stage over all waypoints past the frozen prefix, then a
  single-coordinator stage that advances the prefix and commits the
  updated buffer.  Waypoints the prefix has passed are never touched
  again.  The default execution is a deterministic single-threaded
  simulation; ``execution="threaded"`` runs real worker threads with
  barriers and produces byte-identical buffers.
* ``sequential_project`` — the classical baseline: project waypoint t to
  tolerance before moving to t+1, rejecting a step that lands too far
  from its predecessor.

Joint limits are enforced by a final clamp-and-revalidate step rather than
inside the iteration, so an in-tolerance segment is a fixed point of both
projectors.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from ._kernels import active as _K
from ._kernels import pure as _pure
from .constraints import ConstraintSpec
from .kinematics import RobotModel

__all__ = [
    "MotionSegment", "ProjectionParams", "ProjectionOutcome",
    "IterationSnapshot", "interpolate_segment", "parallel_project",
    "sequential_project", "project_configuration", "segment_gaps",
    "MODE_NAMES",
]

MODE_NAMES = {"parallel": 0, "literal-gap": 1, "naive": 2}

_TAU_SM_SCALE = 1.5      # auto tau_sm = 1.5x the initial interpolation gap
_TAU_SM_FLOOR = 1e-6     # keeps a zero-length segment projectable


@dataclass(frozen=True)
class MotionSegment:
    """Fixed-width waypoint matrix; row 0 is the fixed start."""

    waypoints: np.ndarray    # (W, n) float64

    def __post_init__(self):
        wp = np.ascontiguousarray(np.asarray(self.waypoints, dtype=float))
        if wp.ndim != 2 or wp.shape[0] < 2:
            raise ValueError("waypoints must be (W, n) with W >= 2")
        object.__setattr__(self, "waypoints", wp)

    @property
    def width(self) -> int:
        return self.waypoints.shape[0]

    @property
    def dim(self) -> int:
        return self.waypoints.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]


@dataclass(frozen=True)
class ProjectionParams:
    alpha: float = 0.1
    max_iters: int = 128
    lam: float = 1e-3
    # None: tau_task comes from the ConstraintSpec, tau_sm from the segment
    # (1.5x its largest initial consecutive gap).
    tau_task: float | None = None
    tau_sm: float | None = None

    def __post_init__(self):
        if self.alpha <= 0 or self.lam < 0 or self.max_iters < 1:
            raise ValueError("alpha > 0, lam >= 0, max_iters >= 1 required")
        for tau in (self.tau_task, self.tau_sm):
            if tau is not None and not tau > 0:
                raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class IterationSnapshot:
    iteration: int           # 1-based
    prog: int                # frozen-prefix index after stage 2
    waypoints: np.ndarray    # buffer as visible after this iteration


@dataclass(frozen=True)
class ProjectionOutcome:
    status: str              # "Projected" | "Failed"
    segment: MotionSegment
    iterations_used: int
    final_prog: int
    trace: tuple[IterationSnapshot, ...] | None = field(default=None,
                                                        compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "Projected"


def interpolate_segment(a, b, width: int) -> MotionSegment:
    """Straight-line segment with ``width`` waypoints; endpoints bit-exact."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("endpoints must be 1-D and the same length")
    if width < 2:
        raise ValueError("width must be >= 2")
    wp = np.empty((width, a.shape[0]))
    delta = b - a
    for k in range(width):
        wp[k] = a + (k / (width - 1)) * delta
    wp[0] = a
    wp[width - 1] = b
    return MotionSegment(wp)


def segment_gaps(seg: MotionSegment) -> np.ndarray:
    """Euclidean distance between each consecutive waypoint pair; (W-1,)."""
    d = np.diff(seg.waypoints, axis=0)
    return np.sqrt((d * d).sum(axis=1))


def _resolve_taus(seg, spec, params):
    tau_task = params.tau_task if params.tau_task is not None else spec.tau_task
    if params.tau_sm is not None:
        tau_sm = params.tau_sm
    else:
        gap = float(segment_gaps(seg).max())
        tau_sm = _TAU_SM_SCALE * gap if gap > 0 else _TAU_SM_FLOOR
    return float(tau_task), float(tau_sm)


def _recheck(xi, model, spec, tau_task, tau_sm) -> bool:
    """Bit-exact success-contract check on a waypoint matrix."""
    packed_r = model.packed
    packed_s = spec.packed
    for t in range(xi.shape[0]):
        e = _K.task_error_at(packed_s, _K.ee_pose(packed_r, xi[t]))
        if not float(np.sqrt((e * e).sum())) < tau_task:
            return False
        if t > 0:
            d = xi[t] - xi[t - 1]
            if not float(np.sqrt((d * d).sum())) < tau_sm:
                return False
    return True


def _finish(ok, xi, iters, prog, raw_trace, model, spec, tau_task, tau_sm,
            max_iters):
    trace = None
    if raw_trace is not None:
        trace = tuple(IterationSnapshot(it, p, w) for it, p, w in raw_trace)
    if ok:
        lo = model.packed.lo
        hi = model.packed.hi
        clamped = np.clip(xi, lo, hi)
        if not np.array_equal(clamped, xi):
            if _recheck(clamped, model, spec, tau_task, tau_sm):
                xi = clamped
            else:
                return ProjectionOutcome("Failed", MotionSegment(xi),
                                         max_iters, prog, trace)
        return ProjectionOutcome("Projected", MotionSegment(xi), iters, prog,
                                 trace)
    return ProjectionOutcome("Failed", MotionSegment(xi), max_iters, prog,
                             trace)


def parallel_project(seg: MotionSegment, spec: ConstraintSpec,
                     model: RobotModel, params: ProjectionParams,
                     mode: str = "parallel", collect_trace: bool = False,
                     execution: str = "deterministic") -> ProjectionOutcome:
    """Project all waypoints at once; row 0 is never modified.

    ``mode`` selects prefix advancement: "parallel" freezes the contiguous
    valid prefix, "literal-gap" jumps to the largest valid index even
    across invalid gaps (kept for comparison).  "naive" is accepted as an
    alias for sequential_project so callers can switch by flag.
    """
    if mode == "naive":
        return sequential_project(seg, spec, model, params)
    if mode not in MODE_NAMES:
        raise ValueError(f"unknown projection mode {mode!r}")
    if seg.dim != model.n:
        raise ValueError("segment dimension does not match the model")
    tau_task, tau_sm = _resolve_taus(seg, spec, params)
    if execution == "threaded":
        ok, xi, iters, prog, raw = _project_threaded(
            seg.waypoints, model, spec, tau_task, tau_sm, params,
            collect_trace)
    elif execution == "deterministic":
        ok, xi, iters, prog, raw = _K.project_segment(
            seg.waypoints, model.packed, spec.packed, tau_task, tau_sm,
            params.alpha, params.lam, params.max_iters, MODE_NAMES[mode],
            collect_trace)
    else:
        raise ValueError(f"unknown execution {execution!r}")
    return _finish(ok, xi, iters, prog, raw, model, spec, tau_task, tau_sm,
                   params.max_iters)


def sequential_project(seg: MotionSegment, spec: ConstraintSpec,
                       model: RobotModel,
                       params: ProjectionParams) -> ProjectionOutcome:
    """Baseline: converge each waypoint in order, reject oversized steps."""
    if seg.dim != model.n:
        raise ValueError("segment dimension does not match the model")
    tau_task, tau_sm = _resolve_taus(seg, spec, params)
    ok, xi, iters, prog, _ = _K.project_segment(
        seg.waypoints, model.packed, spec.packed, tau_task, tau_sm,
        params.alpha, params.lam, params.max_iters, _pure.MODE_SEQUENTIAL,
        False)
    return _finish(ok, xi, iters, prog, None, model, spec, tau_task, tau_sm,
                   params.max_iters)


def project_configuration(q, spec: ConstraintSpec, model: RobotModel,
                          tau_task: float | None = None, lam: float = 1e-3,
                          max_iters: int = 128):
    """Newton-project a single configuration onto the manifold.

    Returns (q_projected, ok).  Used for problem setup (roots, goals);
    segment projection never goes through here.
    """
    q = model.check_q(q).copy()
    tau = float(tau_task if tau_task is not None else spec.tau_task)
    packed_r = model.packed
    packed_s = spec.packed
    for _ in range(max_iters):
        if not np.isfinite(q).all():
            return q, False
        e, jac = _K.task_err_jac(packed_s, packed_r, q)
        if float(np.sqrt((e * e).sum())) < tau:
            clamped = np.clip(q, packed_r.lo, packed_r.hi)
            if np.array_equal(clamped, q):
                return q, True
            e2 = _K.task_error_at(packed_s, _K.ee_pose(packed_r, clamped))
            return clamped, bool(float(np.sqrt((e2 * e2).sum())) < tau)
        q = q - _K.damped_step(jac, e, lam)
    return q, False


# ---------------------------------------------------------------------------
# threaded worker-team execution
# ---------------------------------------------------------------------------

def _project_threaded(wps, model, spec, tau_task, tau_sm, params,
                      collect_trace):
    """Real threads + barriers; must equal the deterministic simulation.

    W-1 workers (one per movable waypoint) share the xi/xi_new/valid
    buffers.  Stage 1 writes disjoint slots; barrier; worker 1 acts as the
    coordinator for stage 2; barrier; everyone re-reads the shared state.
    Worker t reads xi[t-1] during stage 1, which is safe because commits
    only happen in stage 2.
    """
    robot = model.packed.lists
    cspec = spec.packed.lists
    w = wps.shape[0]
    xi = [[float(v) for v in row] for row in wps]
    xi_new = [row[:] for row in xi]
    valid = [False] * w
    state = {"prog": 0, "iter": 0, "done": False, "ok": False}
    trace = [] if collect_trace else None
    barrier = threading.Barrier(w - 1)
    failures = []

    def worker(t):
        try:
            while True:
                prog = state["prog"]
                if t > prog:
                    xi_new[t], valid[t] = _pure.stage1_waypoint(
                        xi[t], xi[t - 1], robot, cspec, tau_task, tau_sm,
                        params.alpha, params.lam)
                barrier.wait()
                if t == 1:
                    _coordinate()
                barrier.wait()
                if state["done"]:
                    return
        except threading.BrokenBarrierError:
            return
        except BaseException as exc:  # propagate to the caller, free the team
            failures.append(exc)
            barrier.abort()

    def _coordinate():
        prog = state["prog"]
        j = prog + 1
        while j < w and valid[j]:
            prog = j
            j += 1
        state["prog"] = prog
        state["iter"] += 1
        if prog == w - 1:
            state["done"] = True
            state["ok"] = True
        else:
            for t in range(prog + 1, w):
                xi[t] = xi_new[t]
            if state["iter"] == params.max_iters:
                state["done"] = True
        if trace is not None:
            trace.append((state["iter"], prog, np.array(xi)))

    threads = [threading.Thread(target=worker, args=(t,), daemon=True)
               for t in range(1, w)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if failures:
        raise failures[0]
    return state["ok"], np.array(xi), state["iter"], state["prog"], trace

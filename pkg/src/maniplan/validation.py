"""Motion validation: per-waypoint FK + collision checks with a shared
early-termination flag.

One logical worker per waypoint.  Each worker walks the same check
sequence — every robot sphere against every scene primitive (boxes then
obstacle spheres, scene order), then the model's self-collision pairs —
and consults a shared cancellation flag before each primitive check.  Once
any worker reports a collision the rest stop issuing checks; the verdict
is unaffected (flag off runs the checks exhaustively and must agree).

The deterministic reference interleaves workers in lockstep (one check per
worker per round) inside the kernel backend; ``execution="threaded"`` runs
real threads whose verdict must be identical, though its counters depend
on scheduling.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ._kernels import active as _K
from ._kernels import pure as _pure
from .geometry import Scene
from .kinematics import RobotModel
from .projection import MotionSegment

__all__ = ["ValidationReport", "validate_motion", "validate_configuration"]


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    primitive_checks_performed: int
    primitive_checks_possible: int
    first_colliding_waypoint: int | None

    @property
    def checks_saved(self) -> int:
        return self.primitive_checks_possible - self.primitive_checks_performed


def _as_waypoints(seg) -> np.ndarray:
    if isinstance(seg, MotionSegment):
        return seg.waypoints
    wp = np.asarray(seg, dtype=float)
    if wp.ndim != 2:
        raise ValueError("expected a MotionSegment or (W, n) array")
    return wp


def validate_motion(seg, scene: Scene, model: RobotModel,
                    flag_mode: str = "on",
                    execution: str = "deterministic") -> ValidationReport:
    """Check every waypoint of a motion against the scene and self-pairs."""
    wp = _as_waypoints(seg)
    if wp.shape[1] != model.n:
        raise ValueError("waypoint dimension does not match the model")
    if flag_mode not in ("on", "off"):
        raise ValueError(f"flag_mode must be 'on' or 'off', got {flag_mode!r}")
    if execution == "threaded":
        return _validate_threaded(wp, scene, model, flag_mode == "on")
    if execution != "deterministic":
        raise ValueError(f"unknown execution {execution!r}")
    valid, performed, possible, first_bad = _K.validate_waypoints(
        wp, model.packed, scene.packed(), flag_mode == "on")
    return ValidationReport(valid, performed, possible,
                            None if first_bad < 0 else first_bad)


def validate_configuration(q, scene: Scene, model: RobotModel) -> bool:
    """True iff one configuration is collision-free (environment + self)."""
    q = model.check_q(q)
    valid, _, _, _ = _K.validate_waypoints(
        q.reshape(1, -1), model.packed, scene.packed(), False)
    return valid


# ---------------------------------------------------------------------------
# threaded execution (verdict-identical; counters scheduling-dependent)
# ---------------------------------------------------------------------------

def _validate_threaded(wp, scene, model, flag_on):
    robot = model.packed.lists
    box_min, box_max, sph_c, sph_r = scene.packed().lists
    pairs = robot[9]
    n_spheres = len(robot[6])
    nb = len(box_min)
    ne = len(sph_c)
    env = nb + ne
    per_worker = n_spheres * env + len(pairs)
    w = wp.shape[0]
    flag = threading.Event()
    lock = threading.Lock()
    state = {"first_bad": -1, "performed": 0}

    def worker(t):
        performed = 0
        q = [float(v) for v in wp[t]]
        fr, _, _ = _pure._fk_chain(robot, q)
        sp = _pure._world_spheres_from_frames(robot, fr)
        for check in range(per_worker):
            if flag_on and flag.is_set():
                break
            if check < n_spheres * env:
                si = check // env
                pi = check - si * env
                x, y, z, r = sp[si]
                if pi < nb:
                    lo = box_min[pi]
                    hi = box_max[pi]
                    c = _pure.sphere_aabb_clearance(
                        x, y, z, r, lo[0], lo[1], lo[2], hi[0], hi[1], hi[2])
                else:
                    oc = sph_c[pi - nb]
                    c = _pure.sphere_sphere_clearance(
                        x, y, z, r, oc[0], oc[1], oc[2], sph_r[pi - nb])
            else:
                i, j = pairs[check - n_spheres * env]
                xa, ya, za, ra = sp[i]
                xb, yb, zb, rb = sp[j]
                c = _pure.sphere_sphere_clearance(xa, ya, za, ra,
                                                  xb, yb, zb, rb)
            performed += 1
            if c < 0.0:
                with lock:
                    if state["first_bad"] < 0:
                        state["first_bad"] = t
                flag.set()
                if flag_on:
                    break
        with lock:
            state["performed"] += performed

    threads = [threading.Thread(target=worker, args=(t,)) for t in range(w)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    first_bad = state["first_bad"]
    return ValidationReport(first_bad < 0, state["performed"],
                            w * per_worker,
                            None if first_bad < 0 else first_bad)

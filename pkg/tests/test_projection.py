"""Segment projection: fixed start, frozen prefix, success contract, and
agreement between the deterministic coordinator and real worker threads.
"""

import math

import numpy as np
import pytest

from maniplan._kernels import pure as _pure
from maniplan.constraints import (
    ConstraintSpec,
    PlaneConstraint,
    task_error,
    unconstrained,
)
from maniplan.kinematics import forward_kinematics
from maniplan.projection import (
    MotionSegment,
    ProjectionParams,
    interpolate_segment,
    parallel_project,
    project_configuration,
    segment_gaps,
    sequential_project,
)

from conftest import halton_configs

PLANE = ConstraintSpec(PlaneConstraint(normal=(0.0, 0.0, 1.0), offset=0.55))
PARAMS = ProjectionParams()


def _on_manifold_pair(model, spec, seed_offset=0):
    """Two distinct configurations projected onto the manifold."""
    picked = []
    for q in halton_configs(model, 40, seed_offset=seed_offset):
        qp, ok = project_configuration(q, spec, model)
        if ok:
            picked.append(qp)
        if len(picked) == 2:
            return picked
    raise AssertionError("could not find two projectable samples")


def _assert_satisfied(seg, spec, model, tau_task, tau_sm):
    for t in range(seg.width):
        e = task_error(spec, forward_kinematics(model, seg.waypoints[t]))
        assert float(np.linalg.norm(e)) < tau_task
    assert float(segment_gaps(seg).max()) < tau_sm


def _auto_tau_sm(seg):
    gap = float(segment_gaps(seg).max())
    return 1.5 * gap if gap > 0 else 1e-6


# ---------------------------------------------------------------------------
# segment plumbing
# ---------------------------------------------------------------------------

def test_interpolate_segment_values():
    seg = interpolate_segment([0.0, 0.0], [2.0, 2.0], 3)
    assert np.array_equal(seg.waypoints, [[0, 0], [1, 1], [2, 2]])
    assert seg.width == 3 and seg.dim == 2
    # Endpoints are stored bit-exactly even when the ratio is inexact.
    a = np.array([0.1, 0.2, 0.3])
    b = np.array([-0.7, 0.4, 1.1])
    seg = interpolate_segment(a, b, 7)
    assert np.array_equal(seg.start, a)
    assert np.array_equal(seg.end, b)
    gaps = segment_gaps(seg)
    assert np.allclose(gaps, gaps[0], atol=1e-12)


def test_interpolate_segment_validation():
    with pytest.raises(ValueError, match="width"):
        interpolate_segment([0.0], [1.0], 1)
    with pytest.raises(ValueError, match="same length"):
        interpolate_segment([0.0], [1.0, 2.0], 4)


def test_motion_segment_validation():
    with pytest.raises(ValueError, match="W >= 2"):
        MotionSegment(np.zeros((1, 3)))
    with pytest.raises(ValueError, match="W >= 2"):
        MotionSegment(np.zeros(3))
    seg = MotionSegment([[0, 0], [1, 1]])
    assert seg.waypoints.dtype == np.float64


def test_projection_params_validation():
    with pytest.raises(ValueError):
        ProjectionParams(alpha=0.0)
    with pytest.raises(ValueError):
        ProjectionParams(max_iters=0)
    with pytest.raises(ValueError):
        ProjectionParams(lam=-1.0)
    with pytest.raises(ValueError, match="positive"):
        ProjectionParams(tau_sm=0.0)


# ---------------------------------------------------------------------------
# fixed points
# ---------------------------------------------------------------------------

def test_unconstrained_projection_returns_segment_unchanged(arm7):
    qs = halton_configs(arm7, 2, seed_offset=31)
    seg = interpolate_segment(qs[0], qs[1], 16)
    out = parallel_project(seg, unconstrained(), arm7, PARAMS)
    assert out.ok
    assert out.iterations_used == 1
    assert out.final_prog == seg.width - 1
    assert np.array_equal(out.segment.waypoints, seg.waypoints)


def test_on_manifold_segment_is_a_one_iteration_fixed_point(planar2):
    # The planar arm's end effector lies in z = 0 identically, so a z = 0
    # plane constraint is satisfied exactly everywhere: the projector must
    # accept the interpolated segment unmodified under a finite tolerance.
    spec = ConstraintSpec(PlaneConstraint(normal=(0, 0, 1), offset=0.0),
                          tau_task=1e-3)
    seg = interpolate_segment([-1.2, 0.4], [0.9, -2.0], 12)
    out = parallel_project(seg, spec, planar2, PARAMS)
    assert out.ok and out.iterations_used == 1
    assert np.array_equal(out.segment.waypoints, seg.waypoints)


def test_projection_is_idempotent(arm7):
    a, b = _on_manifold_pair(arm7, PLANE)
    seg = interpolate_segment(a, b, 16)
    first = parallel_project(seg, PLANE, arm7, PARAMS)
    assert first.ok
    again = parallel_project(first.segment, PLANE, arm7, PARAMS)
    assert again.ok and again.iterations_used == 1
    assert np.array_equal(again.segment.waypoints, first.segment.waypoints)


# ---------------------------------------------------------------------------
# success and failure contracts
# ---------------------------------------------------------------------------

def test_successful_projection_satisfies_both_tolerances(arm7):
    a, b = _on_manifold_pair(arm7, PLANE, seed_offset=17)
    seg = interpolate_segment(a, b, 16)
    out = parallel_project(seg, PLANE, arm7, PARAMS)
    assert out.ok
    assert np.array_equal(out.segment.start, seg.start)
    _assert_satisfied(out.segment, PLANE, arm7, PLANE.tau_task,
                      _auto_tau_sm(seg))
    # Joint limits hold on every returned waypoint.
    lims = arm7.limits
    assert np.all(out.segment.waypoints >= lims[:, 0])
    assert np.all(out.segment.waypoints <= lims[:, 1])


def test_unreachable_constraint_fails_with_spent_budget(arm7):
    far = ConstraintSpec(PlaneConstraint(normal=(0, 0, 1), offset=5.0))
    qs = halton_configs(arm7, 2)
    seg = interpolate_segment(qs[0], qs[1], 8)
    params = ProjectionParams(max_iters=8)
    out = parallel_project(seg, far, arm7, params)
    assert not out.ok
    assert out.status == "Failed"
    assert out.iterations_used == params.max_iters
    assert out.final_prog == 0
    assert np.array_equal(out.segment.start, seg.start)


def test_unattainable_smoothness_tolerance_fails(arm7):
    qs = halton_configs(arm7, 2, seed_offset=5)
    seg = interpolate_segment(qs[0], qs[1], 8)
    params = ProjectionParams(max_iters=5, tau_sm=1e-9)
    out = parallel_project(seg, unconstrained(), arm7, params)
    assert not out.ok
    assert out.final_prog == 0


def test_success_clamps_out_of_limit_waypoints(planar2):
    spec = ConstraintSpec(PlaneConstraint(normal=(0, 0, 1), offset=0.0),
                          tau_task=1e-3)
    # One interior waypoint pokes past the +3.1 joint limit; the constraint
    # itself is satisfied everywhere, so success must come from the final
    # clamp-and-revalidate, not from the iteration.
    wp = np.array([[3.0, 0.0], [3.2, 0.0], [3.05, 0.0]])
    out = parallel_project(MotionSegment(wp), spec, planar2,
                           ProjectionParams(tau_sm=1.0))
    assert out.ok
    assert np.all(out.segment.waypoints[:, 0] <= 3.1)
    assert out.segment.waypoints[1, 0] == 3.1


# ---------------------------------------------------------------------------
# structural invariants via traces
# ---------------------------------------------------------------------------

def _traced(arm7, spec, width=16, seed_offset=17, mode="parallel"):
    a, b = _on_manifold_pair(arm7, spec, seed_offset=seed_offset)
    seg = interpolate_segment(a, b, width)
    return seg, parallel_project(seg, spec, arm7, PARAMS, mode=mode,
                                 collect_trace=True)


def test_trace_disabled_by_default(arm7):
    qs = halton_configs(arm7, 2)
    seg = interpolate_segment(qs[0], qs[1], 4)
    out = parallel_project(seg, unconstrained(), arm7, PARAMS)
    assert out.trace is None


def test_start_row_never_moves(arm7):
    seg, out = _traced(arm7, PLANE)
    for snap in out.trace:
        assert np.array_equal(snap.waypoints[0], seg.start)


def test_frozen_prefix_is_monotone_and_bit_stable(arm7):
    seg, out = _traced(arm7, PLANE)
    assert out.ok
    trace = out.trace
    assert [s.iteration for s in trace] == list(range(1, len(trace) + 1))
    for prev, cur in zip(trace, trace[1:]):
        assert cur.prog >= prev.prog
        # Waypoints at or below the already-frozen prefix never change again.
        upto = prev.prog + 1
        assert np.array_equal(cur.waypoints[:upto], prev.waypoints[:upto])
    assert trace[-1].prog == out.final_prog == seg.width - 1


def test_success_returns_the_buffer_that_validated(arm7):
    # The accepting iteration judges validity before applying its updates,
    # so the outcome must equal the last snapshot, not a further step.
    seg, out = _traced(arm7, PLANE)
    assert out.ok
    assert np.array_equal(out.segment.waypoints, out.trace[-1].waypoints)
    assert out.iterations_used == out.trace[-1].iteration


def test_projection_is_deterministic(arm7):
    seg, first = _traced(arm7, PLANE)
    second = parallel_project(seg, PLANE, arm7, PARAMS, collect_trace=True)
    assert first.status == second.status
    assert first.iterations_used == second.iterations_used
    assert np.array_equal(first.segment.waypoints, second.segment.waypoints)
    for a, b in zip(first.trace, second.trace):
        assert (a.iteration, a.prog) == (b.iteration, b.prog)
        assert np.array_equal(a.waypoints, b.waypoints)


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def test_naive_mode_aliases_sequential(arm7):
    a, b = _on_manifold_pair(arm7, PLANE, seed_offset=23)
    seg = interpolate_segment(a, b, 12)
    alias = parallel_project(seg, PLANE, arm7, PARAMS, mode="naive")
    direct = sequential_project(seg, PLANE, arm7, PARAMS)
    assert alias.status == direct.status
    assert alias.iterations_used == direct.iterations_used
    assert np.array_equal(alias.segment.waypoints, direct.segment.waypoints)


def test_sequential_success_satisfies_the_same_contract(arm7):
    a, b = _on_manifold_pair(arm7, PLANE, seed_offset=17)
    seg = interpolate_segment(a, b, 12)
    out = sequential_project(seg, PLANE, arm7, PARAMS)
    assert out.ok
    assert out.iterations_used > 0
    assert np.array_equal(out.segment.start, seg.start)
    _assert_satisfied(out.segment, PLANE, arm7, PLANE.tau_task,
                      _auto_tau_sm(seg))


def test_modes_agree_on_failure_verdicts_deterministically(arm7):
    # A segment neither projector can satisfy: both report Failed with the
    # budget spent, run after run.
    a, b = _on_manifold_pair(arm7, PLANE, seed_offset=23)
    seg = interpolate_segment(a, b, 12)
    for _ in range(2):
        assert not parallel_project(seg, PLANE, arm7, PARAMS).ok
        assert not sequential_project(seg, PLANE, arm7, PARAMS).ok


def test_literal_gap_mode_only_vouches_for_the_last_waypoint(arm7):
    # Jumping the prefix to the largest valid index can terminate while
    # interior waypoints are still out of tolerance; the contiguous rule
    # exists precisely to close that hole.
    seg, out = _traced(arm7, PLANE, mode="literal-gap")
    assert out.ok
    errs = [float(np.linalg.norm(task_error(
        PLANE, forward_kinematics(arm7, wp)))) for wp in out.segment.waypoints]
    assert errs[-1] < PLANE.tau_task
    assert max(errs) > PLANE.tau_task
    for prev, cur in zip(out.trace, out.trace[1:]):
        assert cur.prog >= prev.prog
    # The contiguous-prefix mode on the same segment leaves nothing behind.
    par = parallel_project(seg, PLANE, arm7, PARAMS)
    assert par.ok
    _assert_satisfied(par.segment, PLANE, arm7, PLANE.tau_task,
                      _auto_tau_sm(seg))


def test_unknown_mode_and_execution_rejected(arm7):
    qs = halton_configs(arm7, 2)
    seg = interpolate_segment(qs[0], qs[1], 4)
    with pytest.raises(ValueError, match="mode"):
        parallel_project(seg, PLANE, arm7, PARAMS, mode="bogus")
    with pytest.raises(ValueError, match="execution"):
        parallel_project(seg, PLANE, arm7, PARAMS, execution="bogus")
    with pytest.raises(ValueError, match="dimension"):
        parallel_project(interpolate_segment([0.0, 0.0], [1.0, 1.0], 4),
                         PLANE, arm7, PARAMS)


# ---------------------------------------------------------------------------
# threaded execution must reproduce the simulation bit for bit
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("case", ["success", "failure"])
def test_threads_match_deterministic_coordinator(arm7, case):
    if case == "success":
        a, b = _on_manifold_pair(arm7, PLANE, seed_offset=17)
        seg = interpolate_segment(a, b, 16)
        params = PARAMS
        spec = PLANE
    else:
        qs = halton_configs(arm7, 2)
        seg = interpolate_segment(qs[0], qs[1], 8)
        params = ProjectionParams(max_iters=6)
        spec = ConstraintSpec(PlaneConstraint(normal=(0, 0, 1), offset=5.0))
    det = parallel_project(seg, spec, arm7, params, collect_trace=True)
    thr = parallel_project(seg, spec, arm7, params, collect_trace=True,
                           execution="threaded")
    assert det.status == thr.status
    assert det.iterations_used == thr.iterations_used
    assert det.final_prog == thr.final_prog
    assert np.array_equal(det.segment.waypoints, thr.segment.waypoints)
    assert len(det.trace) == len(thr.trace)
    for a_, b_ in zip(det.trace, thr.trace):
        assert (a_.iteration, a_.prog) == (b_.iteration, b_.prog)
        assert np.array_equal(a_.waypoints, b_.waypoints)


def test_threaded_two_waypoint_segment(arm7):
    # Smallest team: a single movable waypoint.
    a, b = _on_manifold_pair(arm7, PLANE, seed_offset=29)
    seg = MotionSegment(np.vstack([a, a + 0.01 * (b - a)]))
    det = parallel_project(seg, PLANE, arm7, PARAMS)
    thr = parallel_project(seg, PLANE, arm7, PARAMS, execution="threaded")
    assert det.status == thr.status
    assert np.array_equal(det.segment.waypoints, thr.segment.waypoints)


# ---------------------------------------------------------------------------
# single-configuration projection and the divergence guard
# ---------------------------------------------------------------------------

def test_project_configuration_reaches_the_manifold(arm7):
    hits = 0
    for q in halton_configs(arm7, 20, seed_offset=3):
        qp, ok = project_configuration(q, PLANE, arm7)
        if ok:
            hits += 1
            e = task_error(PLANE, forward_kinematics(arm7, qp))
            assert float(np.linalg.norm(e)) < PLANE.tau_task
            lims = arm7.limits
            assert np.all(qp >= lims[:, 0]) and np.all(qp <= lims[:, 1])
    assert hits >= 15


def test_project_configuration_unreachable(arm7):
    far = ConstraintSpec(PlaneConstraint(normal=(0, 0, 1), offset=5.0))
    q = halton_configs(arm7, 1)[0]
    _, ok = project_configuration(q, far, arm7, max_iters=16)
    assert not ok


def test_stage1_freezes_non_finite_waypoints(arm7):
    xi = [math.inf] + [0.0] * (arm7.n - 1)
    prev = [0.0] * arm7.n
    new, valid = _pure.stage1_waypoint(xi, prev, arm7.packed.lists,
                                       PLANE.packed.lists, 1e-3, 0.5,
                                       0.1, 1e-3)
    assert not valid
    assert new == xi

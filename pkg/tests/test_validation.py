"""Motion validation: flag-on/off verdict equivalence, exact work
accounting, and the deterministic round-robin detection order."""

import numpy as np
import pytest

from maniplan.geometry import Aabb, Scene, Sphere
from maniplan.projection import MotionSegment, interpolate_segment
from maniplan.validation import (
    ValidationReport,
    validate_configuration,
    validate_motion,
)

from conftest import halton_configs


def _per_waypoint_checks(model, scene):
    env = len(scene.boxes) + len(scene.spheres)
    return len(model.link_spheres) * env + len(model.self_collision_pairs)


# A reach over the planar arm's workspace with no obstacles anywhere near.
_FREE = Scene(boxes=[Aabb([5.0, 5.0, -1.0], [6.0, 6.0, 1.0])],
              spheres=[Sphere([-5.0, -5.0, 0.0], 0.5)])


def _segments(model, scene, count, width=8, seed_offset=0):
    qs = halton_configs(model, 2 * count, seed_offset=seed_offset)
    return [interpolate_segment(qs[2 * i], qs[2 * i + 1], width)
            for i in range(count)]


# ---------------------------------------------------------------------------
# verdicts and work accounting
# ---------------------------------------------------------------------------

def test_flag_modes_agree_on_every_verdict(arm7, shelf_scene):
    seen = {True: 0, False: 0}
    for seg in _segments(arm7, shelf_scene, 30):
        on = validate_motion(seg, shelf_scene, arm7, flag_mode="on")
        off = validate_motion(seg, shelf_scene, arm7, flag_mode="off")
        assert on.valid == off.valid
        assert on.first_colliding_waypoint == off.first_colliding_waypoint
        seen[on.valid] += 1
    # The corpus must exercise both outcomes for the equivalence to mean much.
    assert seen[True] >= 3 and seen[False] >= 3


def test_flag_off_performs_every_possible_check(arm7, shelf_scene):
    per = _per_waypoint_checks(arm7, shelf_scene)
    for seg in _segments(arm7, shelf_scene, 10, width=6):
        rep = validate_motion(seg, shelf_scene, arm7, flag_mode="off")
        assert rep.primitive_checks_possible == 6 * per
        assert rep.primitive_checks_performed == rep.primitive_checks_possible
        assert rep.checks_saved == 0


def test_flag_on_saves_work_only_on_collisions(arm7, shelf_scene):
    saved_on_colliding = []
    for seg in _segments(arm7, shelf_scene, 30):
        rep = validate_motion(seg, shelf_scene, arm7, flag_mode="on")
        assert rep.primitive_checks_performed <= rep.primitive_checks_possible
        if rep.valid:
            # A free motion can never stop early.
            assert rep.checks_saved == 0
        else:
            saved_on_colliding.append(rep.checks_saved)
    assert saved_on_colliding and all(s > 0 for s in saved_on_colliding)


def test_reports_are_deterministic(arm7, shelf_scene):
    for seg in _segments(arm7, shelf_scene, 5, seed_offset=7):
        a = validate_motion(seg, shelf_scene, arm7)
        b = validate_motion(seg, shelf_scene, arm7)
        assert a == b


def test_validation_does_not_modify_waypoints(arm7, shelf_scene):
    seg = _segments(arm7, shelf_scene, 1)[0]
    before = seg.waypoints.copy()
    validate_motion(seg, shelf_scene, arm7)
    assert np.array_equal(seg.waypoints, before)


# ---------------------------------------------------------------------------
# detection order
# ---------------------------------------------------------------------------
# The planar arm keeps both its spheres in the z = 0 plane:
#   s0 = [0.25 cos q0, 0.25 sin q0, 0]        (link 0)
#   s1 = [0.5 cos q0 + 0.25 cos(q0+q1), ...]  (link 1)
# which makes it easy to park exactly one sphere inside a box.

def _planar_case():
    wps = np.array([
        [0.0, 0.0],            # both spheres along +x, far from the boxes
        [0.0, np.pi / 2],      # s1 at [0.5, 0.25, 0] -> inside box A
        [-np.pi / 2, 0.0],     # spheres along -y, free
        [np.pi, 0.0],          # s0 at [-0.25, 0, 0] -> inside box B
    ])
    box_a = Aabb([0.45, 0.20, -0.05], [0.55, 0.30, 0.05])
    box_b = Aabb([-0.30, -0.05, -0.05], [-0.20, 0.05, 0.05])
    return wps, box_a, box_b


def test_single_collision_is_attributed_to_its_waypoint(planar2):
    wps, box_a, _ = _planar_case()
    scene = Scene(boxes=[box_a], spheres=[])
    for mode in ("on", "off"):
        rep = validate_motion(wps[:3], scene, planar2, flag_mode=mode)
        assert not rep.valid
        assert rep.first_colliding_waypoint == 1


def test_round_robin_order_decides_first_detection(planar2):
    # Waypoint 3 collides through link sphere 0 and waypoint 1 through link
    # sphere 1.  The round-robin schedule checks sphere 0 against every box
    # first, so waypoint 3 is detected first even though waypoint 1 has the
    # smaller index.
    wps, box_a, box_b = _planar_case()
    scene = Scene(boxes=[box_a, box_b], spheres=[])
    for mode in ("on", "off"):
        rep = validate_motion(wps, scene, planar2, flag_mode=mode)
        assert not rep.valid
        assert rep.first_colliding_waypoint == 3


def test_waypoint_order_breaks_ties_within_a_round(planar2):
    # Two waypoints inside the same box collide in the same round; the
    # lower waypoint index must win.
    wps = np.array([[0.0, 0.0], [np.pi, 0.0], [np.pi, 0.1]])
    box_b = _planar_case()[2]
    scene = Scene(boxes=[box_b], spheres=[])
    rep = validate_motion(wps, scene, planar2, flag_mode="off")
    assert rep.first_colliding_waypoint == 1


def test_first_waypoint_is_none_for_free_motion(planar2):
    rep = validate_motion(np.zeros((3, 2)), _FREE, planar2)
    assert rep.valid
    assert rep.first_colliding_waypoint is None


# ---------------------------------------------------------------------------
# threaded execution
# ---------------------------------------------------------------------------

def test_threaded_verdicts_match_deterministic(arm7, shelf_scene):
    for seg in _segments(arm7, shelf_scene, 12):
        det = validate_motion(seg, shelf_scene, arm7)
        thr = validate_motion(seg, shelf_scene, arm7, execution="threaded")
        assert det.valid == thr.valid
        assert thr.primitive_checks_performed <= thr.primitive_checks_possible
        assert thr.primitive_checks_possible == det.primitive_checks_possible


def test_threaded_flag_off_counts_are_exact(planar2):
    wps, box_a, _ = _planar_case()
    scene = Scene(boxes=[box_a], spheres=[])
    rep = validate_motion(wps[:3], scene, planar2, flag_mode="off",
                          execution="threaded")
    assert not rep.valid
    assert rep.first_colliding_waypoint == 1
    assert rep.primitive_checks_performed == rep.primitive_checks_possible


# ---------------------------------------------------------------------------
# single configurations, inputs, and edge cases
# ---------------------------------------------------------------------------

def test_validate_configuration(planar2):
    wps, box_a, _ = _planar_case()
    scene = Scene(boxes=[box_a], spheres=[])
    assert validate_configuration(wps[0], scene, planar2)
    assert not validate_configuration(wps[1], scene, planar2)


def test_empty_scene_with_no_self_pairs_needs_no_checks(planar2):
    rep = validate_motion(np.zeros((4, 2)), Scene(boxes=[], spheres=[]),
                          planar2)
    assert rep.valid
    assert rep.primitive_checks_possible == 0
    assert rep.primitive_checks_performed == 0


def test_self_collision_pairs_are_checked(arm7):
    # arm7 declares folded-back pairs; crank the elbow to fold the arm and
    # validate in an empty scene so only self pairs can trip.
    empty = Scene(boxes=[], spheres=[])
    lims = arm7.limits
    folded = np.clip(np.array([0.0, 2.2, 0.0, -2.9, 0.0, 2.2, 0.0]),
                     lims[:, 0], lims[:, 1])
    rep = validate_motion(folded.reshape(1, -1), empty, arm7, flag_mode="off")
    assert rep.primitive_checks_possible == len(arm7.self_collision_pairs)
    straight = np.zeros((1, 7))
    assert validate_motion(straight, empty, arm7).valid


def test_input_validation(arm7, planar2):
    seg = MotionSegment(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="dimension"):
        validate_motion(seg, _FREE, arm7)
    with pytest.raises(ValueError, match="flag_mode"):
        validate_motion(np.zeros((2, 2)), _FREE, planar2, flag_mode="maybe")
    with pytest.raises(ValueError, match="execution"):
        validate_motion(np.zeros((2, 2)), _FREE, planar2, execution="gpu")
    with pytest.raises(ValueError, match="MotionSegment"):
        validate_motion(np.zeros(2), _FREE, planar2)


def test_report_equality_and_saved_property():
    rep = ValidationReport(False, 10, 40, 2)
    assert rep.checks_saved == 30
    assert rep == ValidationReport(False, 10, 40, 2)

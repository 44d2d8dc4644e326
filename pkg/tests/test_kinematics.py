"""Kinematics: FK against hand-derived formulas, Jacobian against finite
differences, model file round-trips."""

import io
import math

import numpy as np
import pytest

from maniplan.errors import RobotFormatError
from maniplan.kinematics import (clamp_to_limits, collision_spheres_world,
                                 dump_robot, forward_kinematics,
                                 geometric_jacobian, load_robot)

from conftest import halton_configs

LIFT_YAML = """
name: lift
joints:
  - {type: prismatic, axis: [0, 0, 1], origin: {xyz: [0, 0, 0.1], rpy: [0, 0, 0]},
     limits: [0.0, 0.4]}
  - {type: revolute, axis: [0, 0, 1],
     origin: {xyz: [0.3, 0, 0.2], rpy: [0, 0, 0]}, limits: [-3.0, 3.0]}
link_spheres:
  - {link: 1, center: [0.1, 0, 0], radius: 0.05}
"""


def test_planar2_frames_match_hand_formulas(planar2):
    for q0, q1 in [(0.0, 0.0), (0.3, -0.7), (1.2, 0.4), (-2.0, 1.9),
                   (math.pi / 2, math.pi / 2)]:
        fr = forward_kinematics(planar2, [q0, q1])
        c0, s0 = math.cos(q0), math.sin(q0)
        c01, s01 = math.cos(q0 + q1), math.sin(q0 + q1)
        # link 0 turns in place; link 1 sits at the end of the first link
        assert np.allclose(fr.translation(0), [0, 0, 0], atol=1e-15)
        assert np.allclose(fr.translation(1), [0.5 * c0, 0.5 * s0, 0],
                           atol=1e-14)
        want_r1 = np.array([[c01, -s01, 0], [s01, c01, 0], [0, 0, 1]])
        assert np.allclose(fr.rotation(1), want_r1, atol=1e-14)
        assert np.allclose(fr.ee_position, [0.5 * c0, 0.5 * s0, 0],
                           atol=1e-14)
        spheres = collision_spheres_world(planar2, fr)
        assert np.allclose(spheres[0].center, [0.25 * c0, 0.25 * s0, 0],
                           atol=1e-14)
        assert np.allclose(spheres[1].center,
                           [0.5 * c0 + 0.25 * c01, 0.5 * s0 + 0.25 * s01, 0],
                           atol=1e-14)


def test_prismatic_joint_slides_along_axis():
    model = load_robot(io.StringIO(LIFT_YAML))
    for d, q1 in [(0.0, 0.0), (0.25, 1.1), (0.4, -2.0)]:
        fr = forward_kinematics(model, [d, q1])
        assert np.allclose(fr.translation(0), [0, 0, 0.1 + d], atol=1e-15)
        assert np.allclose(fr.translation(1), [0.3, 0, 0.3 + d], atol=1e-14)
        c, s = math.cos(q1), math.sin(q1)
        sphere = collision_spheres_world(model, fr)[0]
        assert np.allclose(sphere.center, [0.3 + 0.1 * c, 0.1 * s, 0.3 + d],
                           atol=1e-14)


def test_fk_is_bit_deterministic(arm7):
    for q in halton_configs(arm7, 20):
        a = forward_kinematics(arm7, q)
        b = forward_kinematics(arm7, q)
        assert np.array_equal(a.transforms, b.transforms)
        assert np.array_equal(a.ee_position, b.ee_position)
        assert np.array_equal(a.ee_quaternion, b.ee_quaternion)


@pytest.mark.parametrize("robot", ["arm7", "arm8"])
def test_rotations_orthonormal_quaternion_unit(robot, request):
    model = request.getfixturevalue(robot)
    for q in halton_configs(model, 50):
        fr = forward_kinematics(model, q)
        for link in range(model.n):
            r = fr.rotation(link)
            assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9
        quat = fr.ee_quaternion
        assert quat[0] >= 0.0
        assert abs(float(quat @ quat) - 1.0) < 1e-9


def test_world_sphere_count_conserved(arm7, arm8):
    for model in (arm7, arm8):
        for q in halton_configs(model, 10):
            fr = forward_kinematics(model, q)
            assert len(collision_spheres_world(model, fr)) == \
                len(model.link_spheres)


def _fd_jacobian(model, q, h=1e-6):
    """Central differences of the end-effector pose; rows f then angular."""
    fr0 = forward_kinematics(model, q)
    r0, t0 = fr0.rotation(model.ee_link), fr0.translation(model.ee_link)
    jac = np.zeros((6, model.n))
    for k in range(model.n):
        qp, qm = np.array(q), np.array(q)
        qp[k] += h
        qm[k] -= h
        fp = forward_kinematics(model, qp)
        fm = forward_kinematics(model, qm)
        jac[:3, k] = (fp.translation(model.ee_link)
                      - fm.translation(model.ee_link)) / (2 * h)
        dr = (fp.rotation(model.ee_link) - fm.rotation(model.ee_link)) / (2 * h)
        w = dr @ r0.T
        jac[3:, k] = [w[2, 1], w[0, 2], w[1, 0]]
    return jac, t0


@pytest.mark.parametrize("robot", ["planar2", "arm7", "arm8"])
def test_geometric_jacobian_matches_finite_differences(robot, request):
    model = request.getfixturevalue(robot)
    for q in halton_configs(model, 25, seed_offset=31):
        jac_fd, ee = _fd_jacobian(model, q)
        jac = geometric_jacobian(model, q, ee)
        assert np.abs(jac - jac_fd).max() <= 1e-5


def test_packaged_zero_pose_anchors(arm7, arm8):
    # zero_pose_ee in the shipped files must match FK exactly: the values
    # were frozen from the same chain definitions.
    for model in (arm7, arm8):
        zero = np.zeros(model.n)
        zero = clamp_to_limits(model, zero)  # arm7 has a joint with hi < 0
        if np.array_equal(zero, np.zeros(model.n)):
            fr = forward_kinematics(model, zero)
            pose = np.concatenate([fr.ee_position, fr.ee_quaternion])
            assert np.array_equal(pose, model.zero_pose_ee)


def test_limits_and_clamp(arm7):
    limits = arm7.limits
    assert limits.shape == (7, 2)
    assert bool(np.all(limits[:, 0] < limits[:, 1]))
    wild = limits[:, 1] + 1.0
    clamped = clamp_to_limits(arm7, wild)
    assert np.array_equal(clamped, limits[:, 1])


def test_check_q_shape(arm7):
    with pytest.raises(ValueError):
        arm7.check_q([0.0, 0.0])


def test_robot_round_trip(arm8):
    again = load_robot(io.StringIO(dump_robot(arm8)))
    assert again.n == arm8.n
    assert again.ee_link == arm8.ee_link
    assert len(again.link_spheres) == len(arm8.link_spheres)
    assert again.self_collision_pairs == arm8.self_collision_pairs
    for a, b in zip(again.joints, arm8.joints):
        assert a.jtype == b.jtype
        assert np.array_equal(a.axis, b.axis)
        assert np.array_equal(a.origin_xyz, b.origin_xyz)
        assert np.array_equal(a.origin_rpy, b.origin_rpy)
        assert (a.lo, a.hi) == (b.lo, b.hi)
    q = halton_configs(arm8, 1, seed_offset=5)[0]
    assert np.array_equal(forward_kinematics(again, q).transforms,
                          forward_kinematics(arm8, q).transforms)


def test_ee_link_default_resolves_to_last():
    doc = LIFT_YAML.replace("link_spheres:", "ee_link: -1\nlink_spheres:")
    assert load_robot(io.StringIO(doc)).ee_link == 1


@pytest.mark.parametrize("mutation, message", [
    ("joints: []", "non-empty"),
    ("axis: [0, 0, 2]", "unit-norm"),
    ("limits: [3.0, -3.0]", "lo < hi"),
    ("{link: 9, center: [0, 0, 0], radius: 0.05}", "out of range"),
    ("type: helix", "type"),
])
def test_robot_format_errors(mutation, message):
    if mutation.startswith("joints"):
        doc = "name: broken\njoints: []\n"
    elif mutation.startswith("{link"):
        doc = LIFT_YAML.replace("{link: 1, center: [0.1, 0, 0], radius: 0.05}",
                                mutation)
    elif "helix" in mutation:
        doc = LIFT_YAML.replace("type: revolute", "type: helix")
    elif "axis" in mutation:
        doc = LIFT_YAML.replace("axis: [0, 0, 1]", mutation, 1)
    else:
        doc = LIFT_YAML.replace("limits: [-3.0, 3.0]", mutation)
    with pytest.raises((RobotFormatError, ValueError)) as err:
        load_robot(io.StringIO(doc))
    assert message in str(err.value)

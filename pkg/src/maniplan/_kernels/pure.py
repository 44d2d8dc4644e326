"""Pure-Python kernel backend.

This module is the numerical reference for the compiled backend: every
formula here is transcribed statement-for-statement into the Cython kernel
(compiled with FP contraction disabled), so the two backends produce
bit-identical float64 results.  That is why the hot math is written as
explicit scalar arithmetic on tuples/lists instead of numpy expressions:
the evaluation order must be pinned down.

Conventions
-----------
* Rotations are row-major 9-tuples, translations 3-tuples, quaternions
  (w, x, y, z) with w >= 0 canonical sign.
* A packed robot / scene / constraint is the ``.lists`` payload built by the
  owning module (see kinematics.PackedRobot etc.).
* Projection modes: 0 = parallel with contiguous frozen prefix (default),
  1 = parallel with the literal largest-valid-index prefix, 2 = sequential
  per-waypoint baseline.
"""

from __future__ import annotations

from math import atan2, cos, isfinite, sin, sqrt

import numpy as np

from ..errors import SingularSystemError

name = "pure"

MODE_PARALLEL = 0
MODE_LITERAL_GAP = 1
MODE_SEQUENTIAL = 2


# ---------------------------------------------------------------------------
# primitive clearance queries
# ---------------------------------------------------------------------------

def sphere_aabb_clearance(cx, cy, cz, r, lx, ly, lz, hx, hy, hz):
    d2 = 0.0
    if cx < lx:
        t = lx - cx
        d2 += t * t
    elif cx > hx:
        t = cx - hx
        d2 += t * t
    if cy < ly:
        t = ly - cy
        d2 += t * t
    elif cy > hy:
        t = cy - hy
        d2 += t * t
    if cz < lz:
        t = lz - cz
        d2 += t * t
    elif cz > hz:
        t = cz - hz
        d2 += t * t
    return sqrt(d2) - r


def sphere_sphere_clearance(ax, ay, az, ar, bx, by, bz, br):
    dx = ax - bx
    dy = ay - by
    dz = az - bz
    # - (ar + br), not - ar - br: keeps the result exactly symmetric in
    # the two spheres.
    return sqrt((dx * dx + dy * dy) + dz * dz) - (ar + br)


# ---------------------------------------------------------------------------
# small fixed-size linear algebra
# ---------------------------------------------------------------------------

def _mat3_mul(a, b):
    a00, a01, a02, a10, a11, a12, a20, a21, a22 = a
    b00, b01, b02, b10, b11, b12, b20, b21, b22 = b
    return (
        (a00 * b00 + a01 * b10) + a02 * b20,
        (a00 * b01 + a01 * b11) + a02 * b21,
        (a00 * b02 + a01 * b12) + a02 * b22,
        (a10 * b00 + a11 * b10) + a12 * b20,
        (a10 * b01 + a11 * b11) + a12 * b21,
        (a10 * b02 + a11 * b12) + a12 * b22,
        (a20 * b00 + a21 * b10) + a22 * b20,
        (a20 * b01 + a21 * b11) + a22 * b21,
        (a20 * b02 + a21 * b12) + a22 * b22,
    )


def _mat3_vec(a, x, y, z):
    a00, a01, a02, a10, a11, a12, a20, a21, a22 = a
    return (
        (a00 * x + a01 * y) + a02 * z,
        (a10 * x + a11 * y) + a12 * z,
        (a20 * x + a21 * y) + a22 * z,
    )


def _rot_axis_angle(x, y, z, angle):
    c = cos(angle)
    s = sin(angle)
    t = 1.0 - c
    tx = t * x
    ty = t * y
    tz = t * z
    sx = s * x
    sy = s * y
    sz = s * z
    txy = tx * y
    txz = tx * z
    tyz = ty * z
    return (
        tx * x + c, txy - sz, txz + sy,
        txy + sz, ty * y + c, tyz - sx,
        txz - sy, tyz + sx, tz * z + c,
    )


def _quat_mul(aw, ax, ay, az, bw, bx, by, bz):
    return (
        ((aw * bw - ax * bx) - ay * by) - az * bz,
        ((aw * bx + ax * bw) + ay * bz) - az * by,
        ((aw * by - ax * bz) + ay * bw) + az * bx,
        ((aw * bz + ax * by) - ay * bx) + az * bw,
    )


def _quat_from_rot(r):
    r00, r01, r02, r10, r11, r12, r20, r21, r22 = r
    tr = (r00 + r11) + r22
    if tr > 0.0:
        s = sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (r21 - r12) / s
        y = (r02 - r20) / s
        z = (r10 - r01) / s
    elif r00 > r11 and r00 > r22:
        s = sqrt(((1.0 + r00) - r11) - r22) * 2.0
        w = (r21 - r12) / s
        x = 0.25 * s
        y = (r01 + r10) / s
        z = (r02 + r20) / s
    elif r11 > r22:
        s = sqrt(((1.0 + r11) - r00) - r22) * 2.0
        w = (r02 - r20) / s
        x = (r01 + r10) / s
        y = 0.25 * s
        z = (r12 + r21) / s
    else:
        s = sqrt(((1.0 + r22) - r00) - r11) * 2.0
        w = (r10 - r01) / s
        x = (r02 + r20) / s
        y = (r12 + r21) / s
        z = 0.25 * s
    if w < 0.0:
        return (-w, -x, -y, -z)
    return (w, x, y, z)


def rot_from_quat(w, x, y, z):
    """Row-major rotation matrix for a unit quaternion (packing helper)."""
    xx = x * x
    yy = y * y
    zz = z * z
    xy = x * y
    xz = x * z
    yz = y * z
    wx = w * x
    wy = w * y
    wz = w * z
    return (
        1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
        2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
        2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy),
    )


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------
# Packed robot lists layout (see kinematics._pack_robot):
#   (jtypes, axes, origin_R, origin_p, lo, hi,
#    sphere_link, sphere_local, sphere_radius, pairs, ee_link)
# jtypes: 0 revolute, 1 prismatic.

def _fk_chain(robot, q):
    """World frame per link, plus each joint's world axis and origin.

    The returned axis is the joint axis *before* the joint's own motion
    (identical direction for revolute joints, and the travel direction for
    prismatic ones); the origin is the joint frame position.
    """
    jtypes, axes, origin_R, origin_p, _lo, _hi = robot[0], robot[1], robot[2], robot[3], robot[4], robot[5]
    n = len(jtypes)
    frames = []
    axes_w = []
    origins_w = []
    pr = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    px = 0.0
    py = 0.0
    pz = 0.0
    for i in range(n):
        r1 = _mat3_mul(pr, origin_R[i])
        ox, oy, oz = origin_p[i]
        tx, ty, tz = _mat3_vec(pr, ox, oy, oz)
        p1x = tx + px
        p1y = ty + py
        p1z = tz + pz
        aix, aiy, aiz = axes[i]
        awx, awy, awz = _mat3_vec(r1, aix, aiy, aiz)
        axes_w.append((awx, awy, awz))
        origins_w.append((p1x, p1y, p1z))
        if jtypes[i] == 0:
            r2 = _mat3_mul(r1, _rot_axis_angle(aix, aiy, aiz, q[i]))
            p2x = p1x
            p2y = p1y
            p2z = p1z
        else:
            r2 = r1
            p2x = p1x + awx * q[i]
            p2y = p1y + awy * q[i]
            p2z = p1z + awz * q[i]
        frames.append((r2, (p2x, p2y, p2z)))
        pr = r2
        px = p2x
        py = p2y
        pz = p2z
    return frames, axes_w, origins_w


def _ee_pose_from_frames(robot, frames):
    ee = robot[10]
    r, p = frames[ee]
    qw, qx, qy, qz = _quat_from_rot(r)
    return (p[0], p[1], p[2], qw, qx, qy, qz)


def _world_spheres_from_frames(robot, frames):
    sphere_link, sphere_local, sphere_radius = robot[6], robot[7], robot[8]
    out = []
    for k in range(len(sphere_link)):
        r, p = frames[sphere_link[k]]
        lx, ly, lz = sphere_local[k]
        wx, wy, wz = _mat3_vec(r, lx, ly, lz)
        out.append((wx + p[0], wy + p[1], wz + p[2], sphere_radius[k]))
    return out


def frames(packed_robot, q):
    """(L, 12) array: rows are [r00..r22, px, py, pz] per link."""
    fr, _, _ = _fk_chain(packed_robot.lists, [float(v) for v in q])
    out = np.empty((len(fr), 12))
    for i, (r, p) in enumerate(fr):
        out[i, :9] = r
        out[i, 9:] = p
    return out


def ee_pose(packed_robot, q):
    """[px, py, pz, qw, qx, qy, qz] end-effector pose."""
    fr, _, _ = _fk_chain(packed_robot.lists, [float(v) for v in q])
    return np.array(_ee_pose_from_frames(packed_robot.lists, fr))


def world_spheres(packed_robot, q):
    """(S, 4) array of world collision spheres [x, y, z, r], link-major."""
    fr, _, _ = _fk_chain(packed_robot.lists, [float(v) for v in q])
    out = _world_spheres_from_frames(packed_robot.lists, fr)
    return np.array(out).reshape(len(out), 4)


def geometric_jacobian(packed_robot, q, point):
    """(6, n) spatial Jacobian of a world point: linear rows then angular."""
    robot = packed_robot.lists
    _, axes_w, origins_w = _fk_chain(robot, [float(v) for v in q])
    px = float(point[0])
    py = float(point[1])
    pz = float(point[2])
    jtypes = robot[0]
    n = len(jtypes)
    out = np.zeros((6, n))
    for j in range(n):
        awx, awy, awz = axes_w[j]
        if jtypes[j] == 0:
            ox, oy, oz = origins_w[j]
            rx = px - ox
            ry = py - oy
            rz = pz - oz
            out[0, j] = awy * rz - awz * ry
            out[1, j] = awz * rx - awx * rz
            out[2, j] = awx * ry - awy * rx
            out[3, j] = awx
            out[4, j] = awy
            out[5, j] = awz
        else:
            out[0, j] = awx
            out[1, j] = awy
            out[2, j] = awz
    return out


# ---------------------------------------------------------------------------
# task-constraint error / Jacobian
# ---------------------------------------------------------------------------
# Packed constraint lists layout (see constraints.PackedConstraint):
#   (kind, anchor, offset, b1, b2, has_orient, q_fixed, r_fixed_t, weight)
# kind: 0 plane (anchor = normal), 1 line (anchor = point, b1/b2 = the
# orthonormal basis of the direction's normal plane).

def _task_error_pose(spec, px, py, pz, qw, qx, qy, qz):
    kind = spec[0]
    anchor = spec[1]
    e = []
    if kind == 0:
        n0, n1, n2 = anchor
        e.append(((n0 * px + n1 * py) + n2 * pz) - spec[2])
    else:
        p0, p1, p2 = anchor
        dx = px - p0
        dy = py - p1
        dz = pz - p2
        b10, b11, b12 = spec[3]
        b20, b21, b22 = spec[4]
        e.append((b10 * dx + b11 * dy) + b12 * dz)
        e.append((b20 * dx + b21 * dy) + b22 * dz)
    if spec[5]:
        fw, fx, fy, fz = spec[6]
        rw, rx, ry, rz = _quat_mul(fw, -fx, -fy, -fz, qw, qx, qy, qz)
        if rw < 0.0:
            rw = -rw
            rx = -rx
            ry = -ry
            rz = -rz
        vn = sqrt((rx * rx + ry * ry) + rz * rz)
        if vn < 1e-12:
            k = 2.0
        else:
            k = 2.0 * atan2(vn, rw) / vn
        wgt = spec[8]
        e.append(wgt * (k * rx))
        e.append(wgt * (k * ry))
        e.append(wgt * (k * rz))
    return e


def _rotvec_rate_matrix(p0, p1, p2):
    """Inverse left Jacobian of SO(3) at rotation vector (p0, p1, p2)."""
    t2 = (p0 * p0 + p1 * p1) + p2 * p2
    if t2 < 1e-8:
        c2 = 1.0 / 12.0 + t2 / 720.0
    else:
        th = sqrt(t2)
        c2 = 1.0 / t2 - (1.0 + cos(th)) / ((2.0 * th) * sin(th))
    h0 = 0.5 * p0
    h1 = 0.5 * p1
    h2 = 0.5 * p2
    c01 = c2 * (p0 * p1)
    c02 = c2 * (p0 * p2)
    c12 = c2 * (p1 * p2)
    return (
        1.0 - c2 * (p1 * p1 + p2 * p2), h2 + c01, c02 - h1,
        c01 - h2, 1.0 - c2 * (p0 * p0 + p2 * p2), h0 + c12,
        h1 + c02, c12 - h0, 1.0 - c2 * (p0 * p0 + p1 * p1),
    )


def _task_err_jac(spec, robot, q):
    """(e, J) for the constraint at configuration q; one FK pass."""
    fr, axes_w, origins_w = _fk_chain(robot, q)
    px, py, pz, qw, qx, qy, qz = _ee_pose_from_frames(robot, fr)
    e = _task_error_pose(spec, px, py, pz, qw, qx, qy, qz)
    n = len(q)
    jtypes = robot[0]
    lin = []
    ang = []
    for j in range(n):
        awx, awy, awz = axes_w[j]
        if jtypes[j] == 0:
            ox, oy, oz = origins_w[j]
            rx = px - ox
            ry = py - oy
            rz = pz - oz
            lin.append((awy * rz - awz * ry,
                        awz * rx - awx * rz,
                        awx * ry - awy * rx))
            ang.append((awx, awy, awz))
        else:
            lin.append((awx, awy, awz))
            ang.append((0.0, 0.0, 0.0))
    rows = []
    kind = spec[0]
    if kind == 0:
        n0, n1, n2 = spec[1]
        rows.append([(n0 * lin[j][0] + n1 * lin[j][1]) + n2 * lin[j][2]
                     for j in range(n)])
    else:
        b10, b11, b12 = spec[3]
        b20, b21, b22 = spec[4]
        rows.append([(b10 * lin[j][0] + b11 * lin[j][1]) + b12 * lin[j][2]
                     for j in range(n)])
        rows.append([(b20 * lin[j][0] + b21 * lin[j][1]) + b22 * lin[j][2]
                     for j in range(n)])
    if spec[5]:
        fw, fx, fy, fz = spec[6]
        rw, rx, ry, rz = _quat_mul(fw, -fx, -fy, -fz, qw, qx, qy, qz)
        if rw < 0.0:
            rw = -rw
            rx = -rx
            ry = -ry
            rz = -rz
        vn = sqrt((rx * rx + ry * ry) + rz * rz)
        if vn < 1e-12:
            k = 2.0
        else:
            k = 2.0 * atan2(vn, rw) / vn
        a = _rotvec_rate_matrix(k * rx, k * ry, k * rz)
        m = _mat3_mul(a, spec[7])
        wgt = spec[8]
        for r in range(3):
            m0 = wgt * m[3 * r]
            m1 = wgt * m[3 * r + 1]
            m2 = wgt * m[3 * r + 2]
            rows.append([(m0 * ang[j][0] + m1 * ang[j][1]) + m2 * ang[j][2]
                         for j in range(n)])
    return e, rows


def _err_norm(e):
    s = 0.0
    for v in e:
        s += v * v
    return sqrt(s)


def _damped_step(rows, e, lam, n):
    """J^T (J J^T + lam^2 I)^-1 e via Cholesky; None if not positive definite."""
    m = len(e)
    a = [[0.0] * m for _ in range(m)]
    for i in range(m):
        ri = rows[i]
        for j in range(i + 1):
            rj = rows[j]
            s = 0.0
            for k in range(n):
                s += ri[k] * rj[k]
            a[i][j] = s
        a[i][i] += lam * lam
    low = [[0.0] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1):
            s = a[i][j]
            for k in range(j):
                s -= low[i][k] * low[j][k]
            if i == j:
                if s <= 0.0:
                    return None
                low[i][i] = sqrt(s)
            else:
                low[i][j] = s / low[j][j]
    y = [0.0] * m
    for i in range(m):
        s = e[i]
        for k in range(i):
            s -= low[i][k] * y[k]
        y[i] = s / low[i][i]
    z = [0.0] * m
    for i in range(m - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, m):
            s -= low[k][i] * z[k]
        z[i] = s / low[i][i]
    step = [0.0] * n
    for i in range(m):
        zi = z[i]
        ri = rows[i]
        for k in range(n):
            step[k] += ri[k] * zi
    return step


# numpy-facing wrappers -----------------------------------------------------

def task_error_at(packed_spec, pose7):
    p = [float(v) for v in pose7]
    return np.array(_task_error_pose(packed_spec.lists, *p))


def task_err_jac(packed_spec, packed_robot, q):
    e, rows = _task_err_jac(packed_spec.lists, packed_robot.lists,
                            [float(v) for v in q])
    return np.array(e), np.array(rows)


def damped_step(jac, e, lam):
    jac = np.asarray(jac, dtype=float)
    e = np.asarray(e, dtype=float)
    rows = [list(map(float, row)) for row in jac]
    step = _damped_step(rows, [float(v) for v in e], float(lam), jac.shape[1])
    if step is None:
        raise SingularSystemError(
            "J J^T is singular; use lam > 0 for a damped solve")
    return np.array(step)


# ---------------------------------------------------------------------------
# segment projection (Alg.: two stages per iteration, frozen prefix)
# ---------------------------------------------------------------------------

def stage1_waypoint(xi_t, xi_prev, robot, spec, tau_task, tau_sm, alpha, lam):
    """One worker's first-stage computation for its waypoint.

    Returns (xi_new_t, valid) where validity is judged at the *pre-update*
    waypoint: task error under tau_task and distance to the previous
    waypoint under tau_sm.  The smoothing gradient only engages once that
    distance exceeds tau_sm, so a satisfied segment is a fixed point.

    A waypoint that has diverged to a non-finite value is frozen as
    invalid instead of being evaluated, so a hopeless projection runs out
    of budget and reports Failed rather than overflowing.
    """
    n = len(xi_t)
    for k in range(n):
        if not isfinite(xi_t[k]):
            return list(xi_t), False
    e, rows = _task_err_jac(spec, robot, xi_t)
    enorm = _err_norm(e)
    g_task = _damped_step(rows, e, lam, n)
    if g_task is None:
        g_task = [0.0] * n
    diff = [0.0] * n
    s = 0.0
    for k in range(n):
        d = xi_t[k] - xi_prev[k]
        diff[k] = d
        s += d * d
    gap = sqrt(s)
    exc = gap - tau_sm
    if exc < 0.0:
        exc = 0.0
    xi_new = [0.0] * n
    for k in range(n):
        xi_new[k] = xi_t[k] - alpha * (g_task[k] + diff[k] * exc)
    ok = gap < tau_sm and enorm < tau_task
    return xi_new, ok


def _project_parallel(wps, robot, spec, tau_task, tau_sm, alpha, lam,
                      max_iters, literal_gap, trace):
    w = len(wps)
    xi = [list(map(float, row)) for row in wps]
    xi_new = [row[:] for row in xi]
    valid = [False] * w
    prog = 0
    for it in range(1, max_iters + 1):
        for t in range(prog + 1, w):
            xi_new[t], valid[t] = stage1_waypoint(
                xi[t], xi[t - 1], robot, spec, tau_task, tau_sm, alpha, lam)
        if literal_gap:
            for j in range(prog + 1, w):
                if valid[j]:
                    prog = j
        else:
            j = prog + 1
            while j < w and valid[j]:
                prog = j
                j += 1
        if prog == w - 1:
            if trace is not None:
                trace.append((it, prog, np.array(xi)))
            return True, np.array(xi), it, prog
        for t in range(prog + 1, w):
            xi[t] = xi_new[t]
        if trace is not None:
            trace.append((it, prog, np.array(xi)))
    return False, np.array(xi), max_iters, prog


def _project_sequential(wps, robot, spec, tau_task, tau_sm, alpha, lam,
                        max_iters):
    w = len(wps)
    n = len(wps[0])
    xi = [list(map(float, row)) for row in wps]
    total = 0
    for t in range(1, w):
        q = xi[t][:]
        iters = 0
        while True:
            finite = True
            for k in range(n):
                if not isfinite(q[k]):
                    finite = False
            if not finite:
                return False, np.array(xi), max_iters, t - 1
            e, rows = _task_err_jac(spec, robot, q)
            if _err_norm(e) < tau_task:
                break
            if iters == max_iters:
                return False, np.array(xi), max_iters, t - 1
            step = _damped_step(rows, e, lam, n)
            if step is None:
                return False, np.array(xi), max_iters, t - 1
            for k in range(n):
                q[k] = q[k] - alpha * step[k]
            iters += 1
        total += iters
        s = 0.0
        for k in range(n):
            d = q[k] - xi[t - 1][k]
            s += d * d
        if sqrt(s) >= tau_sm:
            return False, np.array(xi), max_iters, t - 1
        xi[t] = q
    return True, np.array(xi), total, w - 1


def project_segment(wps, packed_robot, packed_spec, tau_task, tau_sm,
                    alpha, lam, max_iters, mode, collect_trace=False):
    """Project a whole motion segment; see module docstring for modes.

    Returns (ok, waypoints (W, n) float64, iterations, prog, trace|None).
    """
    robot = packed_robot.lists
    spec = packed_spec.lists
    wps = np.asarray(wps, dtype=float)
    trace = [] if (collect_trace and mode != MODE_SEQUENTIAL) else None
    if mode == MODE_SEQUENTIAL:
        ok, xi, iters, prog = _project_sequential(
            wps, robot, spec, tau_task, tau_sm, alpha, lam, max_iters)
    else:
        ok, xi, iters, prog = _project_parallel(
            wps, robot, spec, tau_task, tau_sm, alpha, lam, max_iters,
            mode == MODE_LITERAL_GAP, trace)
    return ok, xi, iters, prog, trace


# ---------------------------------------------------------------------------
# motion validation with shared-flag early termination
# ---------------------------------------------------------------------------
# The deterministic simulation interleaves the worker team in lockstep:
# one primitive check per worker per round, workers in waypoint order
# inside a round.  Each worker runs its FK lazily at its first active
# round, and consults the shared flag before every primitive check.

def validate_waypoints(wps, packed_robot, packed_scene, flag_on):
    """Returns (valid, checks_performed, checks_possible, first_bad|-1)."""
    robot = packed_robot.lists
    box_min, box_max, sph_c, sph_r = packed_scene.lists
    wps = np.asarray(wps, dtype=float)
    w = wps.shape[0]
    work = [[float(v) for v in row] for row in wps]
    pairs = robot[9]
    n_spheres = len(robot[6])
    nb = len(box_min)
    ne = len(sph_c)
    env = nb + ne
    per_worker = n_spheres * env + len(pairs)
    possible = w * per_worker
    performed = 0
    flag = False
    first_bad = -1
    spheres = [None] * w
    for rnd in range(per_worker):
        if flag_on and flag:
            break
        for t in range(w):
            if flag_on and flag:
                break
            if spheres[t] is None:
                fr, _, _ = _fk_chain(robot, work[t])
                spheres[t] = _world_spheres_from_frames(robot, fr)
            sp = spheres[t]
            if rnd < n_spheres * env:
                si = rnd // env
                pi = rnd - si * env
                x, y, z, r = sp[si]
                if pi < nb:
                    lo = box_min[pi]
                    hi = box_max[pi]
                    c = sphere_aabb_clearance(x, y, z, r,
                                              lo[0], lo[1], lo[2],
                                              hi[0], hi[1], hi[2])
                else:
                    oc = sph_c[pi - nb]
                    c = sphere_sphere_clearance(x, y, z, r,
                                                oc[0], oc[1], oc[2],
                                                sph_r[pi - nb])
            else:
                i, j = pairs[rnd - n_spheres * env]
                xa, ya, za, ra = sp[i]
                xb, yb, zb, rb = sp[j]
                c = sphere_sphere_clearance(xa, ya, za, ra, xb, yb, zb, rb)
            performed += 1
            if c < 0.0:
                if first_bad < 0:
                    first_bad = t
                flag = True
    return first_bad < 0, performed, possible, first_bad

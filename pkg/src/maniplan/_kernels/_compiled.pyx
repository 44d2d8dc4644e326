# cython: language_level=3
"""Cython kernel backend.

Statement-for-statement transcription of ``pure``: every arithmetic
expression keeps the grouping of the reference module, the build disables
FP contraction, and both backends call the same libm, so results are
bit-identical float64.  Read ``pure`` first -- it is the documented copy;
comments here only mark the few places where the mechanics differ
(buffers instead of lists, fixed scratch instead of allocation).
"""

from libc.math cimport atan2, cos, isfinite, sin, sqrt

import numpy as np

from ..errors import SingularSystemError

name = "compiled"

MODE_PARALLEL = 0
MODE_LITERAL_GAP = 1
MODE_SEQUENTIAL = 2

# error vectors never exceed 2 position rows + 3 orientation rows
cdef enum:
    MAX_ERR = 5
    MAX_ERR_SQ = 25


# ---------------------------------------------------------------------------
# primitive clearance queries
# ---------------------------------------------------------------------------

cdef double _sphere_aabb_c(double cx, double cy, double cz, double r,
                           double lx, double ly, double lz,
                           double hx, double hy, double hz) noexcept:
    cdef double d2 = 0.0
    cdef double t
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


cdef double _sphere_sphere_c(double ax, double ay, double az, double ar,
                             double bx, double by, double bz, double br) noexcept:
    cdef double dx = ax - bx
    cdef double dy = ay - by
    cdef double dz = az - bz
    # - (ar + br), not - ar - br: keeps the result exactly symmetric in
    # the two spheres.
    return sqrt((dx * dx + dy * dy) + dz * dz) - (ar + br)


def sphere_aabb_clearance(double cx, double cy, double cz, double r,
                          double lx, double ly, double lz,
                          double hx, double hy, double hz):
    return _sphere_aabb_c(cx, cy, cz, r, lx, ly, lz, hx, hy, hz)


def sphere_sphere_clearance(double ax, double ay, double az, double ar,
                            double bx, double by, double bz, double br):
    return _sphere_sphere_c(ax, ay, az, ar, bx, by, bz, br)


# ---------------------------------------------------------------------------
# small fixed-size linear algebra
# ---------------------------------------------------------------------------

cdef void _mat3_mul(const double* a, const double* b, double* o) noexcept:
    o[0] = (a[0] * b[0] + a[1] * b[3]) + a[2] * b[6]
    o[1] = (a[0] * b[1] + a[1] * b[4]) + a[2] * b[7]
    o[2] = (a[0] * b[2] + a[1] * b[5]) + a[2] * b[8]
    o[3] = (a[3] * b[0] + a[4] * b[3]) + a[5] * b[6]
    o[4] = (a[3] * b[1] + a[4] * b[4]) + a[5] * b[7]
    o[5] = (a[3] * b[2] + a[4] * b[5]) + a[5] * b[8]
    o[6] = (a[6] * b[0] + a[7] * b[3]) + a[8] * b[6]
    o[7] = (a[6] * b[1] + a[7] * b[4]) + a[8] * b[7]
    o[8] = (a[6] * b[2] + a[7] * b[5]) + a[8] * b[8]


cdef void _mat3_vec(const double* a, double x, double y, double z,
                    double* o) noexcept:
    o[0] = (a[0] * x + a[1] * y) + a[2] * z
    o[1] = (a[3] * x + a[4] * y) + a[5] * z
    o[2] = (a[6] * x + a[7] * y) + a[8] * z


cdef void _rot_axis_angle(double x, double y, double z, double angle,
                          double* o) noexcept:
    cdef double c = cos(angle)
    cdef double s = sin(angle)
    cdef double t = 1.0 - c
    cdef double tx = t * x
    cdef double ty = t * y
    cdef double tz = t * z
    cdef double sx = s * x
    cdef double sy = s * y
    cdef double sz = s * z
    cdef double txy = tx * y
    cdef double txz = tx * z
    cdef double tyz = ty * z
    o[0] = tx * x + c
    o[1] = txy - sz
    o[2] = txz + sy
    o[3] = txy + sz
    o[4] = ty * y + c
    o[5] = tyz - sx
    o[6] = txz - sy
    o[7] = tyz + sx
    o[8] = tz * z + c


cdef void _quat_mul(double aw, double ax, double ay, double az,
                    double bw, double bx, double by, double bz,
                    double* o) noexcept:
    o[0] = ((aw * bw - ax * bx) - ay * by) - az * bz
    o[1] = ((aw * bx + ax * bw) + ay * bz) - az * by
    o[2] = ((aw * by - ax * bz) + ay * bw) + az * bx
    o[3] = ((aw * bz + ax * by) - ay * bx) + az * bw


cdef void _quat_from_rot(const double* r, double* o) noexcept:
    cdef double tr = (r[0] + r[4]) + r[8]
    cdef double s, w, x, y, z
    if tr > 0.0:
        s = sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (r[7] - r[5]) / s
        y = (r[2] - r[6]) / s
        z = (r[3] - r[1]) / s
    elif r[0] > r[4] and r[0] > r[8]:
        s = sqrt(((1.0 + r[0]) - r[4]) - r[8]) * 2.0
        w = (r[7] - r[5]) / s
        x = 0.25 * s
        y = (r[1] + r[3]) / s
        z = (r[2] + r[6]) / s
    elif r[4] > r[8]:
        s = sqrt(((1.0 + r[4]) - r[0]) - r[8]) * 2.0
        w = (r[2] - r[6]) / s
        x = (r[1] + r[3]) / s
        y = 0.25 * s
        z = (r[5] + r[7]) / s
    else:
        s = sqrt(((1.0 + r[8]) - r[0]) - r[4]) * 2.0
        w = (r[3] - r[1]) / s
        x = (r[2] + r[6]) / s
        y = (r[5] + r[7]) / s
        z = 0.25 * s
    if w < 0.0:
        o[0] = -w
        o[1] = -x
        o[2] = -y
        o[3] = -z
    else:
        o[0] = w
        o[1] = x
        o[2] = y
        o[3] = z


def rot_from_quat(double w, double x, double y, double z):
    cdef double xx = x * x
    cdef double yy = y * y
    cdef double zz = z * z
    cdef double xy = x * y
    cdef double xz = x * z
    cdef double yz = y * z
    cdef double wx = w * x
    cdef double wy = w * y
    cdef double wz = w * z
    return (
        1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
        2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
        2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy),
    )


# ---------------------------------------------------------------------------
# typed views over the packed dataclasses
# ---------------------------------------------------------------------------

cdef class _Robot:
    cdef int[::1] jtypes
    cdef double[:, ::1] axes
    cdef double[:, ::1] origin_r
    cdef double[:, ::1] origin_p
    cdef int[::1] sphere_link
    cdef double[:, ::1] sphere_local
    cdef double[::1] sphere_radius
    cdef int[:, ::1] pairs
    cdef Py_ssize_t n, ns, npairs
    cdef Py_ssize_t ee

    def __init__(self, packed):
        self.jtypes = packed.jtypes
        self.axes = packed.axes
        self.origin_r = packed.origin_r
        self.origin_p = packed.origin_p
        self.sphere_link = packed.sphere_link
        self.sphere_local = packed.sphere_local
        self.sphere_radius = packed.sphere_radius
        self.pairs = packed.pairs
        self.n = self.jtypes.shape[0]
        self.ns = self.sphere_link.shape[0]
        self.npairs = self.pairs.shape[0]
        self.ee = packed.ee_link


cdef class _Spec:
    cdef int kind
    cdef double[::1] anchor
    cdef double offset
    cdef double[:, ::1] basis
    cdef int has_orient
    cdef double[::1] q_fixed
    cdef double[::1] r_fixed_t
    cdef double weight

    def __init__(self, packed):
        self.kind = packed.kind
        self.anchor = packed.anchor
        self.offset = packed.offset
        self.basis = packed.basis
        self.has_orient = packed.has_orient
        self.q_fixed = packed.q_fixed
        self.r_fixed_t = packed.r_fixed_t
        self.weight = packed.weight


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------

cdef void _fk_chain_c(_Robot rb, const double* q, double* fr_r, double* fr_p,
                      double* ax_w, double* or_w):
    cdef double pr[9]
    cdef double r1[9]
    cdef double rot[9]
    cdef double t[3]
    cdef double aw[3]
    cdef double p1x, p1y, p1z, p2x, p2y, p2z, px, py, pz
    cdef double aix, aiy, aiz
    cdef Py_ssize_t i, k
    pr[0] = 1.0; pr[1] = 0.0; pr[2] = 0.0
    pr[3] = 0.0; pr[4] = 1.0; pr[5] = 0.0
    pr[6] = 0.0; pr[7] = 0.0; pr[8] = 1.0
    px = 0.0
    py = 0.0
    pz = 0.0
    for i in range(rb.n):
        _mat3_mul(pr, &rb.origin_r[i, 0], r1)
        _mat3_vec(pr, rb.origin_p[i, 0], rb.origin_p[i, 1],
                  rb.origin_p[i, 2], t)
        p1x = t[0] + px
        p1y = t[1] + py
        p1z = t[2] + pz
        aix = rb.axes[i, 0]
        aiy = rb.axes[i, 1]
        aiz = rb.axes[i, 2]
        _mat3_vec(r1, aix, aiy, aiz, aw)
        ax_w[3 * i] = aw[0]
        ax_w[3 * i + 1] = aw[1]
        ax_w[3 * i + 2] = aw[2]
        or_w[3 * i] = p1x
        or_w[3 * i + 1] = p1y
        or_w[3 * i + 2] = p1z
        if rb.jtypes[i] == 0:
            _rot_axis_angle(aix, aiy, aiz, q[i], rot)
            _mat3_mul(r1, rot, pr)
            p2x = p1x
            p2y = p1y
            p2z = p1z
        else:
            for k in range(9):
                pr[k] = r1[k]
            p2x = p1x + aw[0] * q[i]
            p2y = p1y + aw[1] * q[i]
            p2z = p1z + aw[2] * q[i]
        for k in range(9):
            fr_r[9 * i + k] = pr[k]
        fr_p[3 * i] = p2x
        fr_p[3 * i + 1] = p2y
        fr_p[3 * i + 2] = p2z
        px = p2x
        py = p2y
        pz = p2z


cdef void _ee_pose_c(_Robot rb, const double* fr_r, const double* fr_p,
                     double* pose) noexcept:
    cdef double quat[4]
    _quat_from_rot(fr_r + 9 * rb.ee, quat)
    pose[0] = fr_p[3 * rb.ee]
    pose[1] = fr_p[3 * rb.ee + 1]
    pose[2] = fr_p[3 * rb.ee + 2]
    pose[3] = quat[0]
    pose[4] = quat[1]
    pose[5] = quat[2]
    pose[6] = quat[3]


cdef void _world_spheres_c(_Robot rb, const double* fr_r, const double* fr_p,
                           double* out):
    cdef double w[3]
    cdef Py_ssize_t k, link
    for k in range(rb.ns):
        link = rb.sphere_link[k]
        _mat3_vec(fr_r + 9 * link, rb.sphere_local[k, 0],
                  rb.sphere_local[k, 1], rb.sphere_local[k, 2], w)
        out[4 * k] = w[0] + fr_p[3 * link]
        out[4 * k + 1] = w[1] + fr_p[3 * link + 1]
        out[4 * k + 2] = w[2] + fr_p[3 * link + 2]
        out[4 * k + 3] = rb.sphere_radius[k]


# ---------------------------------------------------------------------------
# task-constraint error / Jacobian
# ---------------------------------------------------------------------------

cdef int _task_error_pose_c(_Spec sp, const double* pose, double* e):
    cdef double px = pose[0]
    cdef double py = pose[1]
    cdef double pz = pose[2]
    cdef double dx, dy, dz, rw, rx, ry, rz, vn, k, wgt
    cdef double quat[4]
    cdef int m = 0
    if sp.kind == 0:
        e[0] = ((sp.anchor[0] * px + sp.anchor[1] * py)
                + sp.anchor[2] * pz) - sp.offset
        m = 1
    else:
        dx = px - sp.anchor[0]
        dy = py - sp.anchor[1]
        dz = pz - sp.anchor[2]
        e[0] = (sp.basis[0, 0] * dx + sp.basis[0, 1] * dy) + sp.basis[0, 2] * dz
        e[1] = (sp.basis[1, 0] * dx + sp.basis[1, 1] * dy) + sp.basis[1, 2] * dz
        m = 2
    if sp.has_orient:
        _quat_mul(sp.q_fixed[0], -sp.q_fixed[1], -sp.q_fixed[2], -sp.q_fixed[3],
                  pose[3], pose[4], pose[5], pose[6], quat)
        rw = quat[0]
        rx = quat[1]
        ry = quat[2]
        rz = quat[3]
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
        wgt = sp.weight
        e[m] = wgt * (k * rx)
        e[m + 1] = wgt * (k * ry)
        e[m + 2] = wgt * (k * rz)
        m += 3
    return m


cdef void _rotvec_rate_c(double p0, double p1, double p2, double* o):
    cdef double t2 = (p0 * p0 + p1 * p1) + p2 * p2
    cdef double c2, th
    if t2 < 1e-8:
        c2 = 1.0 / 12.0 + t2 / 720.0
    else:
        th = sqrt(t2)
        c2 = 1.0 / t2 - (1.0 + cos(th)) / ((2.0 * th) * sin(th))
    cdef double h0 = 0.5 * p0
    cdef double h1 = 0.5 * p1
    cdef double h2 = 0.5 * p2
    cdef double c01 = c2 * (p0 * p1)
    cdef double c02 = c2 * (p0 * p2)
    cdef double c12 = c2 * (p1 * p2)
    o[0] = 1.0 - c2 * (p1 * p1 + p2 * p2)
    o[1] = h2 + c01
    o[2] = c02 - h1
    o[3] = c01 - h2
    o[4] = 1.0 - c2 * (p0 * p0 + p2 * p2)
    o[5] = h0 + c12
    o[6] = h1 + c02
    o[7] = c12 - h0
    o[8] = 1.0 - c2 * (p0 * p0 + p1 * p1)


cdef int _task_err_jac_c(_Spec sp, _Robot rb, const double* q,
                         double* e, double* rows,
                         double* fr_r, double* fr_p, double* ax_w,
                         double* or_w, double* lin, double* ang):
    """Rows are written row-major with stride rb.n; returns the row count."""
    cdef double pose[7]
    cdef double quat[4]
    cdef double a[9]
    cdef double mrot[9]
    cdef double px, py, pz, awx, awy, awz, ox, oy, oz, rx, ry, rz
    cdef double rw, vn, k, wgt, m0, m1, m2
    cdef Py_ssize_t n = rb.n
    cdef Py_ssize_t j
    cdef int m, r
    _fk_chain_c(rb, q, fr_r, fr_p, ax_w, or_w)
    _ee_pose_c(rb, fr_r, fr_p, pose)
    m = _task_error_pose_c(sp, pose, e)
    px = pose[0]
    py = pose[1]
    pz = pose[2]
    for j in range(n):
        awx = ax_w[3 * j]
        awy = ax_w[3 * j + 1]
        awz = ax_w[3 * j + 2]
        if rb.jtypes[j] == 0:
            ox = or_w[3 * j]
            oy = or_w[3 * j + 1]
            oz = or_w[3 * j + 2]
            rx = px - ox
            ry = py - oy
            rz = pz - oz
            lin[3 * j] = awy * rz - awz * ry
            lin[3 * j + 1] = awz * rx - awx * rz
            lin[3 * j + 2] = awx * ry - awy * rx
            ang[3 * j] = awx
            ang[3 * j + 1] = awy
            ang[3 * j + 2] = awz
        else:
            lin[3 * j] = awx
            lin[3 * j + 1] = awy
            lin[3 * j + 2] = awz
            ang[3 * j] = 0.0
            ang[3 * j + 1] = 0.0
            ang[3 * j + 2] = 0.0
    cdef int nrow = 0
    if sp.kind == 0:
        for j in range(n):
            rows[j] = ((sp.anchor[0] * lin[3 * j]
                        + sp.anchor[1] * lin[3 * j + 1])
                       + sp.anchor[2] * lin[3 * j + 2])
        nrow = 1
    else:
        for j in range(n):
            rows[j] = ((sp.basis[0, 0] * lin[3 * j]
                        + sp.basis[0, 1] * lin[3 * j + 1])
                       + sp.basis[0, 2] * lin[3 * j + 2])
        for j in range(n):
            rows[n + j] = ((sp.basis[1, 0] * lin[3 * j]
                            + sp.basis[1, 1] * lin[3 * j + 1])
                           + sp.basis[1, 2] * lin[3 * j + 2])
        nrow = 2
    if sp.has_orient:
        _quat_mul(sp.q_fixed[0], -sp.q_fixed[1], -sp.q_fixed[2], -sp.q_fixed[3],
                  pose[3], pose[4], pose[5], pose[6], quat)
        rw = quat[0]
        rx = quat[1]
        ry = quat[2]
        rz = quat[3]
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
        _rotvec_rate_c(k * rx, k * ry, k * rz, a)
        _mat3_mul(a, &sp.r_fixed_t[0], mrot)
        wgt = sp.weight
        for r in range(3):
            m0 = wgt * mrot[3 * r]
            m1 = wgt * mrot[3 * r + 1]
            m2 = wgt * mrot[3 * r + 2]
            for j in range(n):
                rows[nrow * n + j] = ((m0 * ang[3 * j] + m1 * ang[3 * j + 1])
                                      + m2 * ang[3 * j + 2])
            nrow += 1
    return m


cdef double _err_norm_c(const double* e, int m) noexcept:
    cdef double s = 0.0
    cdef int i
    for i in range(m):
        s += e[i] * e[i]
    return sqrt(s)


cdef bint _damped_step_c(const double* rows, const double* e, double lam,
                         Py_ssize_t n, int m, Py_ssize_t stride,
                         double* a, double* low, double* step):
    """a/low are m*m scratch with row stride ``stride``; False = singular."""
    cdef double y[MAX_ERR]
    cdef double z[MAX_ERR]
    cdef double s, zi
    cdef const double* ri
    cdef const double* rj
    cdef Py_ssize_t k
    cdef int i, j
    for i in range(m):
        ri = rows + i * n
        for j in range(i + 1):
            rj = rows + j * n
            s = 0.0
            for k in range(n):
                s += ri[k] * rj[k]
            a[i * stride + j] = s
        a[i * stride + i] += lam * lam
    for i in range(m):
        for j in range(i + 1):
            s = a[i * stride + j]
            for k in range(j):
                s -= low[i * stride + k] * low[j * stride + k]
            if i == j:
                if s <= 0.0:
                    return False
                low[i * stride + i] = sqrt(s)
            else:
                low[i * stride + j] = s / low[j * stride + j]
    for i in range(m):
        s = e[i]
        for k in range(i):
            s -= low[i * stride + k] * y[k]
        y[i] = s / low[i * stride + i]
    for i in range(m - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, m):
            s -= low[k * stride + i] * z[k]
        z[i] = s / low[i * stride + i]
    for k in range(n):
        step[k] = 0.0
    for i in range(m):
        zi = z[i]
        ri = rows + i * n
        for k in range(n):
            step[k] += ri[k] * zi
    return True


# numpy-facing wrappers -----------------------------------------------------

cdef double[::1] _as_vec(q, Py_ssize_t n):
    cdef double[::1] v = np.ascontiguousarray(q, dtype=np.float64).reshape(n)
    return v


def frames(packed_robot, q):
    cdef _Robot rb = _Robot(packed_robot)
    cdef double[::1] qv = _as_vec(q, rb.n)
    out = np.empty((rb.n, 12))
    cdef double[:, ::1] ov = out
    scratch = np.empty(4 * 3 * rb.n + 9 * rb.n)
    cdef double[::1] sc = scratch
    cdef double* fr_r = &sc[0]
    cdef double* fr_p = fr_r + 9 * rb.n
    cdef double* ax_w = fr_p + 3 * rb.n
    cdef double* or_w = ax_w + 3 * rb.n
    _fk_chain_c(rb, &qv[0], fr_r, fr_p, ax_w, or_w)
    cdef Py_ssize_t i, k
    for i in range(rb.n):
        for k in range(9):
            ov[i, k] = fr_r[9 * i + k]
        for k in range(3):
            ov[i, 9 + k] = fr_p[3 * i + k]
    return out


def ee_pose(packed_robot, q):
    cdef _Robot rb = _Robot(packed_robot)
    cdef double[::1] qv = _as_vec(q, rb.n)
    scratch = np.empty(4 * 3 * rb.n + 9 * rb.n)
    cdef double[::1] sc = scratch
    cdef double* fr_r = &sc[0]
    cdef double* fr_p = fr_r + 9 * rb.n
    cdef double* ax_w = fr_p + 3 * rb.n
    cdef double* or_w = ax_w + 3 * rb.n
    _fk_chain_c(rb, &qv[0], fr_r, fr_p, ax_w, or_w)
    out = np.empty(7)
    cdef double[::1] ov = out
    _ee_pose_c(rb, fr_r, fr_p, &ov[0])
    return out


def world_spheres(packed_robot, q):
    cdef _Robot rb = _Robot(packed_robot)
    cdef double[::1] qv = _as_vec(q, rb.n)
    scratch = np.empty(4 * 3 * rb.n + 9 * rb.n)
    cdef double[::1] sc = scratch
    cdef double* fr_r = &sc[0]
    cdef double* fr_p = fr_r + 9 * rb.n
    cdef double* ax_w = fr_p + 3 * rb.n
    cdef double* or_w = ax_w + 3 * rb.n
    _fk_chain_c(rb, &qv[0], fr_r, fr_p, ax_w, or_w)
    out = np.empty((rb.ns, 4))
    cdef double[:, ::1] ov = out
    if rb.ns > 0:
        _world_spheres_c(rb, fr_r, fr_p, &ov[0, 0])
    return out


def task_error_at(packed_spec, pose7):
    cdef _Spec sp = _Spec(packed_spec)
    cdef double[::1] pv = _as_vec(pose7, 7)
    cdef double e[MAX_ERR]
    cdef int m = _task_error_pose_c(sp, &pv[0], e)
    out = np.empty(m)
    cdef double[::1] ov = out
    cdef int i
    for i in range(m):
        ov[i] = e[i]
    return out


def task_err_jac(packed_spec, packed_robot, q):
    cdef _Spec sp = _Spec(packed_spec)
    cdef _Robot rb = _Robot(packed_robot)
    cdef double[::1] qv = _as_vec(q, rb.n)
    cdef double e[MAX_ERR]
    scratch = np.empty((4 * 3 + 9 + 3 * 2 + MAX_ERR) * rb.n)
    cdef double[::1] sc = scratch
    cdef double* fr_r = &sc[0]
    cdef double* fr_p = fr_r + 9 * rb.n
    cdef double* ax_w = fr_p + 3 * rb.n
    cdef double* or_w = ax_w + 3 * rb.n
    cdef double* lin = or_w + 3 * rb.n
    cdef double* ang = lin + 3 * rb.n
    cdef double* rows = ang + 3 * rb.n
    cdef int m = _task_err_jac_c(sp, rb, &qv[0], e, rows,
                                 fr_r, fr_p, ax_w, or_w, lin, ang)
    e_out = np.empty(m)
    j_out = np.empty((m, rb.n))
    cdef double[::1] ev = e_out
    cdef double[:, ::1] jv = j_out
    cdef Py_ssize_t k
    cdef int i
    for i in range(m):
        ev[i] = e[i]
        for k in range(rb.n):
            jv[i, k] = rows[i * rb.n + k]
    return e_out, j_out


def damped_step(jac, e, double lam):
    jm = np.ascontiguousarray(jac, dtype=np.float64)
    if jm.ndim != 2:
        jm = jm.reshape(1, -1)
    cdef double[:, ::1] jv = jm
    cdef Py_ssize_t n = jv.shape[1]
    cdef int m = <int> jv.shape[0]
    cdef double[::1] ev = _as_vec(e, m)
    scratch = np.zeros(2 * m * m)
    cdef double[::1] sc = scratch
    out = np.empty(n)
    cdef double[::1] ov = out
    # the general entry point has no row-count cap, so the solve scratch is
    # sized from the input instead of the MAX_ERR stack buffers
    if m <= MAX_ERR:
        if not _damped_step_c(&jv[0, 0], &ev[0], lam, n, m, m,
                              &sc[0], &sc[m * m], &ov[0]):
            raise SingularSystemError(
                "J J^T is singular; use lam > 0 for a damped solve")
        return out
    if not _damped_step_big(&jv[0, 0], &ev[0], lam, n, m,
                            &sc[0], &sc[m * m], &ov[0]):
        raise SingularSystemError(
            "J J^T is singular; use lam > 0 for a damped solve")
    return out


cdef bint _damped_step_big(const double* rows, const double* e, double lam,
                           Py_ssize_t n, int m, double* a, double* low,
                           double* step):
    yz = np.zeros(2 * m)
    cdef double[::1] yzv = yz
    cdef double* y = &yzv[0]
    cdef double* z = y + m
    cdef double s, zi
    cdef const double* ri
    cdef const double* rj
    cdef Py_ssize_t k
    cdef int i, j
    for i in range(m):
        ri = rows + i * n
        for j in range(i + 1):
            rj = rows + j * n
            s = 0.0
            for k in range(n):
                s += ri[k] * rj[k]
            a[i * m + j] = s
        a[i * m + i] += lam * lam
    for i in range(m):
        for j in range(i + 1):
            s = a[i * m + j]
            for k in range(j):
                s -= low[i * m + k] * low[j * m + k]
            if i == j:
                if s <= 0.0:
                    return False
                low[i * m + i] = sqrt(s)
            else:
                low[i * m + j] = s / low[j * m + j]
    for i in range(m):
        s = e[i]
        for k in range(i):
            s -= low[i * m + k] * y[k]
        y[i] = s / low[i * m + i]
    for i in range(m - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, m):
            s -= low[k * m + i] * z[k]
        z[i] = s / low[i * m + i]
    for k in range(n):
        step[k] = 0.0
    for i in range(m):
        zi = z[i]
        ri = rows + i * n
        for k in range(n):
            step[k] += ri[k] * zi
    return True


# ---------------------------------------------------------------------------
# segment projection
# ---------------------------------------------------------------------------

cdef bint _stage1_c(_Robot rb, _Spec sp, const double* xi_t,
                    const double* xi_prev, double tau_task, double tau_sm,
                    double alpha, double lam, double* xi_new,
                    double* e, double* rows, double* gstep, double* diff,
                    double* fk_scratch, double* a, double* low):
    cdef Py_ssize_t n = rb.n
    cdef Py_ssize_t k
    cdef double* fr_r = fk_scratch
    cdef double* fr_p = fr_r + 9 * n
    cdef double* ax_w = fr_p + 3 * n
    cdef double* or_w = ax_w + 3 * n
    cdef double* lin = or_w + 3 * n
    cdef double* ang = lin + 3 * n
    cdef double enorm, s, d, gap, exc
    cdef int m
    cdef bint ok
    for k in range(n):
        if not isfinite(xi_t[k]):
            for k in range(n):
                xi_new[k] = xi_t[k]
            return False
    m = _task_err_jac_c(sp, rb, xi_t, e, rows, fr_r, fr_p, ax_w, or_w,
                        lin, ang)
    enorm = _err_norm_c(e, m)
    if not _damped_step_c(rows, e, lam, n, m, MAX_ERR, a, low, gstep):
        for k in range(n):
            gstep[k] = 0.0
    s = 0.0
    for k in range(n):
        d = xi_t[k] - xi_prev[k]
        diff[k] = d
        s += d * d
    gap = sqrt(s)
    exc = gap - tau_sm
    if exc < 0.0:
        exc = 0.0
    for k in range(n):
        xi_new[k] = xi_t[k] - alpha * (gstep[k] + diff[k] * exc)
    ok = gap < tau_sm and enorm < tau_task
    return ok


def project_segment(wps, packed_robot, packed_spec, double tau_task,
                    double tau_sm, double alpha, double lam, int max_iters,
                    int mode, collect_trace=False):
    cdef _Robot rb = _Robot(packed_robot)
    cdef _Spec sp = _Spec(packed_spec)
    arr = np.ascontiguousarray(wps, dtype=np.float64)
    cdef double[:, ::1] src = arr
    cdef Py_ssize_t w = src.shape[0]
    cdef Py_ssize_t n = src.shape[1]
    xi_nd = np.array(arr)
    xi_new_nd = np.array(arr)
    cdef double[:, ::1] xi = xi_nd
    cdef double[:, ::1] xi_new = xi_new_nd
    valid_nd = np.zeros(w, dtype=np.uint8)
    cdef unsigned char[::1] valid = valid_nd
    scratch = np.empty((4 * 3 + 9 + 3 * 2) * n + MAX_ERR * n + 3 * n + MAX_ERR)
    cdef double[::1] sc = scratch
    cdef double* fk_scratch = &sc[0]
    cdef double* rows = fk_scratch + (4 * 3 + 9 + 3 * 2) * n
    cdef double* gstep = rows + MAX_ERR * n
    cdef double* diff = gstep + n
    cdef double* qbuf = diff + n
    cdef double* e = qbuf + n
    cdef double a[MAX_ERR_SQ]
    cdef double low[MAX_ERR_SQ]
    cdef Py_ssize_t t, k, prog, j
    cdef int it, iters, total, m
    cdef bint literal_gap, fin
    cdef double s, d, enorm

    trace = [] if (collect_trace and mode != MODE_SEQUENTIAL) else None

    if mode == MODE_SEQUENTIAL:
        total = 0
        for t in range(1, w):
            for k in range(n):
                qbuf[k] = xi[t, k]
            iters = 0
            while True:
                fin = True
                for k in range(n):
                    if not isfinite(qbuf[k]):
                        fin = False
                if not fin:
                    return False, xi_nd, max_iters, t - 1, trace
                m = _task_err_jac_c(sp, rb, qbuf, e, rows,
                                    fk_scratch, fk_scratch + 9 * n,
                                    fk_scratch + 12 * n, fk_scratch + 15 * n,
                                    fk_scratch + 18 * n, fk_scratch + 21 * n)
                if _err_norm_c(e, m) < tau_task:
                    break
                if iters == max_iters:
                    return False, xi_nd, max_iters, t - 1, trace
                if not _damped_step_c(rows, e, lam, n, m, MAX_ERR,
                                      a, low, gstep):
                    return False, xi_nd, max_iters, t - 1, trace
                for k in range(n):
                    qbuf[k] = qbuf[k] - alpha * gstep[k]
                iters += 1
            total += iters
            s = 0.0
            for k in range(n):
                d = qbuf[k] - xi[t - 1, k]
                s += d * d
            if sqrt(s) >= tau_sm:
                return False, xi_nd, max_iters, t - 1, trace
            for k in range(n):
                xi[t, k] = qbuf[k]
        return True, xi_nd, total, w - 1, trace

    literal_gap = (mode == MODE_LITERAL_GAP)
    prog = 0
    for it in range(1, max_iters + 1):
        for t in range(prog + 1, w):
            valid[t] = _stage1_c(rb, sp, &xi[t, 0], &xi[t - 1, 0],
                                 tau_task, tau_sm, alpha, lam,
                                 &xi_new[t, 0], e, rows, gstep, diff,
                                 fk_scratch, a, low)
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
                trace.append((it, prog, np.array(xi_nd)))
            return True, xi_nd, it, prog, trace
        for t in range(prog + 1, w):
            for k in range(n):
                xi[t, k] = xi_new[t, k]
        if trace is not None:
            trace.append((it, prog, np.array(xi_nd)))
    return False, xi_nd, max_iters, prog, trace


# ---------------------------------------------------------------------------
# motion validation with shared-flag early termination
# ---------------------------------------------------------------------------

def validate_waypoints(wps, packed_robot, packed_scene, flag_on):
    cdef _Robot rb = _Robot(packed_robot)
    cdef double[:, ::1] box_min = packed_scene.box_min
    cdef double[:, ::1] box_max = packed_scene.box_max
    cdef double[:, ::1] sph_c = packed_scene.sph_center
    cdef double[::1] sph_r = packed_scene.sph_radius
    arr = np.ascontiguousarray(wps, dtype=np.float64)
    cdef double[:, ::1] work = arr
    cdef Py_ssize_t w = work.shape[0]
    cdef Py_ssize_t n = work.shape[1]
    cdef Py_ssize_t nb = box_min.shape[0]
    cdef Py_ssize_t ne = sph_c.shape[0]
    cdef Py_ssize_t env = nb + ne
    cdef Py_ssize_t per_worker = rb.ns * env + rb.npairs
    cdef Py_ssize_t possible = w * per_worker
    cdef Py_ssize_t performed = 0
    cdef bint flag = False
    cdef bint flag_on_c = bool(flag_on)
    cdef Py_ssize_t first_bad = -1
    sph_nd = np.empty((w, rb.ns, 4)) if rb.ns else np.empty((w, 1, 4))
    cdef double[:, :, ::1] spheres = sph_nd
    done_nd = np.zeros(w, dtype=np.uint8)
    cdef unsigned char[::1] done = done_nd
    fk_nd = np.empty((4 * 3 + 9) * n)
    cdef double[::1] fk = fk_nd
    cdef double* fr_r = &fk[0]
    cdef double* fr_p = fr_r + 9 * n
    cdef double* ax_w = fr_p + 3 * n
    cdef double* or_w = ax_w + 3 * n
    cdef Py_ssize_t rnd, t, si, pi, i, j
    cdef double c, x, y, z, r
    for rnd in range(per_worker):
        if flag_on_c and flag:
            break
        for t in range(w):
            if flag_on_c and flag:
                break
            if not done[t]:
                _fk_chain_c(rb, &work[t, 0], fr_r, fr_p, ax_w, or_w)
                _world_spheres_c(rb, fr_r, fr_p, &spheres[t, 0, 0])
                done[t] = 1
            if rnd < rb.ns * env:
                si = rnd // env
                pi = rnd - si * env
                x = spheres[t, si, 0]
                y = spheres[t, si, 1]
                z = spheres[t, si, 2]
                r = spheres[t, si, 3]
                if pi < nb:
                    c = _sphere_aabb_c(x, y, z, r,
                                       box_min[pi, 0], box_min[pi, 1],
                                       box_min[pi, 2], box_max[pi, 0],
                                       box_max[pi, 1], box_max[pi, 2])
                else:
                    c = _sphere_sphere_c(x, y, z, r,
                                         sph_c[pi - nb, 0], sph_c[pi - nb, 1],
                                         sph_c[pi - nb, 2], sph_r[pi - nb])
            else:
                i = rb.pairs[rnd - rb.ns * env, 0]
                j = rb.pairs[rnd - rb.ns * env, 1]
                c = _sphere_sphere_c(spheres[t, i, 0], spheres[t, i, 1],
                                     spheres[t, i, 2], spheres[t, i, 3],
                                     spheres[t, j, 0], spheres[t, j, 1],
                                     spheres[t, j, 2], spheres[t, j, 3])
            performed += 1
            if c < 0.0:
                if first_bad < 0:
                    first_bad = t
                flag = True
    return first_bad < 0, int(performed), int(possible), int(first_bad)

"""Serial-chain robot model: FK to all link frames, world collision spheres,
and the geometric Jacobian.

Robot file format (YAML), angles in radians, lengths in meters::

    name: arm7
    # End-effector pose [px, py, pz, qw, qx, qy, qz] at the zero
    # configuration, frozen when the model was authored.  Kept as a
    # regression anchor; see tests.
    zero_pose_ee: [0.088, 0.0, 1.033, 0.0, 1.0, 0.0, 0.0]
    joints:
      - name: shoulder_pan           # optional
        type: revolute               # or prismatic
        axis: [0, 0, 1]              # unit vector in the joint frame
        origin: {xyz: [0, 0, 0.333], rpy: [0, 0, 0]}
        limits: [-2.8973, 2.8973]
    ee_link: 6                       # index into joints
    link_spheres:
      - {link: 0, center: [0, 0, -0.1], radius: 0.06}
    self_collision_pairs: [[0, 5], [0, 6]]

Each joint owns one link frame (joint i moves link i); ``origin`` is the
fixed transform from the parent link to the joint frame, ``rpy`` the usual
fixed-axis roll/pitch/yaw.  ``link_spheres`` attach collision spheres to a
link in its local frame; ``self_collision_pairs`` index into that list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import cos, sin

import numpy as np
import yaml

from ._kernels import active as _K
from ._kernels import pure as _pure
from .errors import RobotFormatError
from .geometry import Sphere, _read_source

__all__ = [
    "Joint", "LinkSphere", "RobotModel", "FrameSet", "PackedRobot",
    "forward_kinematics", "collision_spheres_world", "geometric_jacobian",
    "load_robot", "dump_robot", "clamp_to_limits",
]

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Joint:
    jtype: str                # "revolute" | "prismatic"
    axis: np.ndarray          # (3,) unit, joint frame
    origin_xyz: np.ndarray    # (3,)
    origin_rpy: np.ndarray    # (3,) fixed-axis roll/pitch/yaw
    lo: float
    hi: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "origin_xyz",
                           np.asarray(self.origin_xyz, dtype=float))
        object.__setattr__(self, "origin_rpy",
                           np.asarray(self.origin_rpy, dtype=float))
        if self.jtype not in ("revolute", "prismatic"):
            raise ValueError(f"unknown joint type {self.jtype!r}")
        if abs(float(np.linalg.norm(self.axis)) - 1.0) > _UNIT_TOL:
            raise ValueError("joint axis must be unit-norm")
        if not self.lo < self.hi:
            raise ValueError("joint limits must satisfy lo < hi")


@dataclass(frozen=True)
class LinkSphere:
    link: int
    center: np.ndarray        # (3,) link frame
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class RobotModel:
    joints: tuple[Joint, ...]
    link_spheres: tuple[LinkSphere, ...] = ()
    ee_link: int = -1         # default: last link
    self_collision_pairs: tuple[tuple[int, int], ...] = ()
    name: str = ""
    zero_pose_ee: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.joints)
        if n == 0:
            raise ValueError("a robot needs at least one joint")
        ee = self.ee_link if self.ee_link >= 0 else n - 1
        if not 0 <= ee < n:
            raise ValueError(f"ee_link {self.ee_link} out of range for "
                             f"{n} joints")
        object.__setattr__(self, "ee_link", ee)
        for k, s in enumerate(self.link_spheres):
            if not 0 <= s.link < n:
                raise ValueError(f"link_spheres[{k}].link out of range")
        ns = len(self.link_spheres)
        for k, (i, j) in enumerate(self.self_collision_pairs):
            if not (0 <= i < ns and 0 <= j < ns) or i == j:
                raise ValueError(f"self_collision_pairs[{k}] invalid")
        if self.zero_pose_ee is not None:
            object.__setattr__(self, "zero_pose_ee",
                               np.asarray(self.zero_pose_ee, dtype=float))

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def limits(self) -> np.ndarray:
        """(n, 2) array of [lo, hi] rows."""
        return np.array([[j.lo, j.hi] for j in self.joints])

    @cached_property
    def packed(self) -> "PackedRobot":
        return _pack_robot(self)

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise ValueError(
                f"configuration has shape {q.shape}, expected ({self.n},)")
        return q


@dataclass(frozen=True)
class FrameSet:
    """World transform per link plus the end-effector pose.

    ``transforms`` rows are [r00..r22, px, py, pz] (row-major rotation then
    translation).  ``q`` is the configuration the frames were computed at.
    """

    transforms: np.ndarray    # (L, 12)
    ee_position: np.ndarray   # (3,)
    ee_quaternion: np.ndarray  # (4,) (w, x, y, z), w >= 0
    q: np.ndarray             # (n,)

    def rotation(self, link: int) -> np.ndarray:
        return self.transforms[link, :9].reshape(3, 3)

    def translation(self, link: int) -> np.ndarray:
        return self.transforms[link, 9:]


@dataclass(frozen=True)
class PackedRobot:
    """Flat array/scalar-list views of a RobotModel for the kernel backends."""

    jtypes: np.ndarray        # (n,) int32: 0 revolute, 1 prismatic
    axes: np.ndarray          # (n, 3)
    origin_r: np.ndarray      # (n, 9) row-major rotation of each origin
    origin_p: np.ndarray      # (n, 3)
    lo: np.ndarray            # (n,)
    hi: np.ndarray            # (n,)
    sphere_link: np.ndarray   # (S,) int32
    sphere_local: np.ndarray  # (S, 3)
    sphere_radius: np.ndarray  # (S,)
    pairs: np.ndarray         # (P, 2) int32
    ee_link: int
    lists: tuple = field(repr=False, default=())


def _rpy_matrix(r: float, p: float, y: float) -> tuple:
    """Fixed-axis roll/pitch/yaw to a row-major 9-tuple (R = Rz·Ry·Rx)."""
    cr, sr = cos(r), sin(r)
    cp, sp = cos(p), sin(p)
    cy, sy = cos(y), sin(y)
    return (
        cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
        sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
        -sp, cp * sr, cp * cr,
    )


def _pack_robot(model: RobotModel) -> PackedRobot:
    n = model.n
    jtypes = np.array([0 if j.jtype == "revolute" else 1
                       for j in model.joints], dtype=np.int32)
    axes = np.array([j.axis for j in model.joints])
    origin_r = np.array([_rpy_matrix(*j.origin_rpy) for j in model.joints])
    origin_p = np.array([j.origin_xyz for j in model.joints])
    lo = np.array([j.lo for j in model.joints])
    hi = np.array([j.hi for j in model.joints])
    ns = len(model.link_spheres)
    sphere_link = np.array([s.link for s in model.link_spheres],
                           dtype=np.int32).reshape(ns)
    sphere_local = np.array([s.center for s in model.link_spheres],
                            dtype=float).reshape(ns, 3)
    sphere_radius = np.array([s.radius for s in model.link_spheres],
                             dtype=float).reshape(ns)
    pairs = np.array(model.self_collision_pairs,
                     dtype=np.int32).reshape(len(model.self_collision_pairs), 2)
    lists = (
        tuple(int(v) for v in jtypes),
        [tuple(row) for row in axes.tolist()],
        [tuple(row) for row in origin_r.tolist()],
        [tuple(row) for row in origin_p.tolist()],
        lo.tolist(),
        hi.tolist(),
        [int(v) for v in sphere_link],
        [tuple(row) for row in sphere_local.tolist()],
        sphere_radius.tolist(),
        [tuple(int(v) for v in row) for row in pairs.tolist()],
        model.ee_link,
    )
    contig = np.ascontiguousarray
    return PackedRobot(
        contig(jtypes), contig(axes), contig(origin_r), contig(origin_p),
        contig(lo), contig(hi), contig(sphere_link), contig(sphere_local),
        contig(sphere_radius), contig(pairs), model.ee_link, lists,
    )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def forward_kinematics(model: RobotModel, q) -> FrameSet:
    q = model.check_q(q)
    packed = model.packed
    transforms = _K.frames(packed, q)
    pose = _K.ee_pose(packed, q)
    return FrameSet(transforms=transforms, ee_position=pose[:3],
                    ee_quaternion=pose[3:], q=q)


def collision_spheres_world(model: RobotModel, frames: FrameSet) -> list[Sphere]:
    """Link-local spheres mapped to the world; order is link-major (file order)."""
    raw = _K.world_spheres(model.packed, frames.q)
    return [Sphere(row[:3], row[3]) for row in raw]


def geometric_jacobian(model: RobotModel, q, point) -> np.ndarray:
    """6×n Jacobian of a world-frame point: linear velocity rows then angular.

    Revolute column: (axis × (point − joint_origin), axis); prismatic:
    (axis, 0).  Axes and origins are taken at the joint frame before its own
    motion.
    """
    q = model.check_q(q)
    point = np.asarray(point, dtype=float)
    if point.shape != (3,):
        raise ValueError("point must be a 3-vector")
    return _pure.geometric_jacobian(model.packed, q, point)


def clamp_to_limits(model: RobotModel, q) -> np.ndarray:
    q = model.check_q(q)
    return np.clip(q, model.packed.lo, model.packed.hi)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def _vec(value, length, where):
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise RobotFormatError(f"expected a {length}-element list", where)
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise RobotFormatError("expected numeric entries", where) from None


def _parse_robot_dict(doc, where="robot") -> RobotModel:
    if not isinstance(doc, dict):
        raise RobotFormatError("document root must be a mapping", where)
    known = {"name", "joints", "ee_link", "link_spheres",
             "self_collision_pairs", "zero_pose_ee"}
    for key in doc:
        if key not in known:
            raise RobotFormatError(f"unknown field {key!r}", where)
    joints = []
    raw_joints = doc.get("joints")
    if not isinstance(raw_joints, list) or not raw_joints:
        raise RobotFormatError("joints must be a non-empty list",
                               f"{where}.joints")
    for i, entry in enumerate(raw_joints):
        loc = f"{where}.joints[{i}]"
        if not isinstance(entry, dict):
            raise RobotFormatError("expected a mapping", loc)
        jtype = entry.get("type", "revolute")
        axis = _vec(entry.get("axis"), 3, f"{loc}.axis")
        origin = entry.get("origin") or {}
        if not isinstance(origin, dict):
            raise RobotFormatError("origin must be a mapping", f"{loc}.origin")
        xyz = _vec(origin.get("xyz", [0, 0, 0]), 3, f"{loc}.origin.xyz")
        rpy = _vec(origin.get("rpy", [0, 0, 0]), 3, f"{loc}.origin.rpy")
        limits = _vec(entry.get("limits"), 2, f"{loc}.limits")
        try:
            joints.append(Joint(jtype=jtype, axis=axis, origin_xyz=xyz,
                                origin_rpy=rpy, lo=limits[0], hi=limits[1],
                                name=str(entry.get("name", f"j{i}"))))
        except ValueError as exc:
            raise RobotFormatError(str(exc), loc) from None
    spheres = []
    for i, entry in enumerate(doc.get("link_spheres") or []):
        loc = f"{where}.link_spheres[{i}]"
        if not isinstance(entry, dict):
            raise RobotFormatError("expected a mapping", loc)
        try:
            spheres.append(LinkSphere(
                link=int(entry.get("link")),
                center=_vec(entry.get("center"), 3, f"{loc}.center"),
                radius=float(entry.get("radius"))))
        except (TypeError, ValueError) as exc:
            raise RobotFormatError(str(exc), loc) from None
    pairs = []
    for i, entry in enumerate(doc.get("self_collision_pairs") or []):
        loc = f"{where}.self_collision_pairs[{i}]"
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise RobotFormatError("expected an index pair", loc)
        pairs.append((int(entry[0]), int(entry[1])))
    zero_pose = doc.get("zero_pose_ee")
    if zero_pose is not None:
        zero_pose = _vec(zero_pose, 7, f"{where}.zero_pose_ee")
    ee_link = doc.get("ee_link", -1)
    try:
        return RobotModel(joints=tuple(joints), link_spheres=tuple(spheres),
                          ee_link=int(ee_link),
                          self_collision_pairs=tuple(pairs),
                          name=str(doc.get("name", "")),
                          zero_pose_ee=zero_pose)
    except ValueError as exc:
        raise RobotFormatError(str(exc), where) from None


def load_robot(source) -> RobotModel:
    """Read a RobotModel from a path, text, or readable stream.

    Raises RobotFormatError with a field path on malformed input.
    """
    text, where = _read_source(source, RobotFormatError)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{where}:line {mark.line + 1}" if mark else where
        raise RobotFormatError(f"not valid YAML: {exc}", loc) from None
    return _parse_robot_dict(doc, where)


def dump_robot(model: RobotModel) -> str:
    doc = {
        "name": model.name,
        "joints": [{
            "name": j.name,
            "type": j.jtype,
            "axis": j.axis.tolist(),
            "origin": {"xyz": j.origin_xyz.tolist(),
                       "rpy": j.origin_rpy.tolist()},
            "limits": [j.lo, j.hi],
        } for j in model.joints],
        "ee_link": model.ee_link,
        "link_spheres": [{
            "link": s.link, "center": s.center.tolist(), "radius": s.radius,
        } for s in model.link_spheres],
        "self_collision_pairs": [list(p) for p in model.self_collision_pairs],
    }
    if model.zero_pose_ee is not None:
        doc["zero_pose_ee"] = model.zero_pose_ee.tolist()
    return yaml.safe_dump(doc, sort_keys=False)

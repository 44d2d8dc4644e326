"""Task constraints on the end effector: plane, line, optional fixed
orientation; their error vectors, Jacobians, and the damped least-squares
step used by projection.

Error layout: plane contributes one signed-distance row, line two rows (the
offset from the line expressed in a fixed orthonormal basis of the
direction's normal plane), and a locked orientation appends three rows —
the rotation vector of q_fixed⁻¹ ∘ q_ee scaled by ``angular_weight`` to mix
meters and radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._kernels import active as _K
from ._kernels import pure as _pure
from .kinematics import FrameSet, RobotModel

__all__ = [
    "PlaneConstraint", "LineConstraint", "ConstraintSpec", "PackedConstraint",
    "line_basis", "task_error", "task_jacobian", "task_error_and_jacobian",
    "damped_pinv_apply", "unconstrained",
]

_UNIT_TOL = 1e-9


def _unit3(value, what: str) -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{what} must be a 3-vector")
    if abs(float(np.linalg.norm(v)) - 1.0) > _UNIT_TOL:
        raise ValueError(f"{what} must be unit-norm")
    return v


def line_basis(direction) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal basis of the plane normal to ``direction``.

    Gram–Schmidt seeded with the world axis of smallest |component| along
    the direction (lowest index on ties), so the basis is reproducible.
    """
    d = _unit3(direction, "direction")
    k = int(np.argmin(np.abs(d)))
    e = np.zeros(3)
    e[k] = 1.0
    b1 = e - float(e @ d) * d
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(d, b1)
    return b1, b2


@dataclass(frozen=True)
class PlaneConstraint:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit3(self.normal, "plane normal"))
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class LineConstraint:
    point: np.ndarray
    direction: np.ndarray
    # Optional explicit basis of the normal plane; defaults to line_basis().
    basis: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "point",
                           np.asarray(self.point, dtype=float))
        object.__setattr__(self, "direction",
                           _unit3(self.direction, "line direction"))
        if self.basis is not None:
            b1 = _unit3(self.basis[0], "basis[0]")
            b2 = _unit3(self.basis[1], "basis[1]")
            for b in (b1, b2):
                if abs(float(b @ self.direction)) > 1e-9:
                    raise ValueError("basis must be orthogonal to direction")
            if abs(float(b1 @ b2)) > 1e-9:
                raise ValueError("basis vectors must be orthogonal")
            object.__setattr__(self, "basis", (b1, b2))


@dataclass(frozen=True)
class ConstraintSpec:
    """A position constraint, optionally with a locked orientation."""

    position: PlaneConstraint | LineConstraint
    fixed_orientation: np.ndarray | None = None  # (w, x, y, z) unit
    angular_weight: float = 0.5
    tau_task: float = 1e-3

    def __post_init__(self):
        if self.fixed_orientation is not None:
            qf = np.asarray(self.fixed_orientation, dtype=float)
            if qf.shape != (4,):
                raise ValueError("fixed_orientation must be (w, x, y, z)")
            if abs(float(np.linalg.norm(qf)) - 1.0) > _UNIT_TOL:
                raise ValueError("fixed_orientation must be unit-norm")
            object.__setattr__(self, "fixed_orientation", qf)
        if not self.tau_task > 0:
            raise ValueError("tau_task must be positive")

    @property
    def error_dim(self) -> int:
        dim = 1 if isinstance(self.position, PlaneConstraint) else 2
        if self.fixed_orientation is not None:
            dim += 3
        return dim

    @cached_property
    def packed(self) -> "PackedConstraint":
        return _pack_spec(self)


@dataclass(frozen=True)
class PackedConstraint:
    kind: int                 # 0 plane, 1 line
    anchor: np.ndarray        # (3,) normal (plane) or point (line)
    offset: float
    basis: np.ndarray         # (2, 3); zeros for plane
    has_orient: int
    q_fixed: np.ndarray       # (4,)
    r_fixed_t: np.ndarray     # (9,) row-major transpose of R(q_fixed)
    weight: float
    tau_task: float
    lists: tuple = field(repr=False, default=())


def _pack_spec(spec: ConstraintSpec) -> PackedConstraint:
    pos = spec.position
    if isinstance(pos, PlaneConstraint):
        kind = 0
        anchor = pos.normal
        offset = pos.offset
        basis = np.zeros((2, 3))
    else:
        kind = 1
        anchor = pos.point
        offset = 0.0
        b1, b2 = pos.basis if pos.basis is not None else line_basis(pos.direction)
        basis = np.vstack([b1, b2])
    if spec.fixed_orientation is not None:
        has_orient = 1
        qf = spec.fixed_orientation
        r = _pure.rot_from_quat(qf[0], qf[1], qf[2], qf[3])
        rft = np.array([r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]])
    else:
        has_orient = 0
        qf = np.array([1.0, 0.0, 0.0, 0.0])
        rft = np.array([1.0, 0, 0, 0, 1.0, 0, 0, 0, 1.0])
    lists = (
        kind,
        tuple(anchor.tolist()),
        float(offset),
        tuple(basis[0].tolist()),
        tuple(basis[1].tolist()),
        has_orient,
        tuple(qf.tolist()),
        tuple(rft.tolist()),
        float(spec.angular_weight),
    )
    contig = np.ascontiguousarray
    return PackedConstraint(
        kind=kind, anchor=contig(anchor), offset=float(offset),
        basis=contig(basis), has_orient=has_orient, q_fixed=contig(qf),
        r_fixed_t=contig(rft), weight=float(spec.angular_weight),
        tau_task=float(spec.tau_task), lists=lists,
    )


def unconstrained() -> ConstraintSpec:
    """Sentinel spec whose tolerance can never be exceeded.

    Projection accepts every configuration in one iteration, which reduces
    the planner to plain RRT-Connect.
    """
    return ConstraintSpec(PlaneConstraint(normal=(0.0, 0.0, 1.0), offset=0.0),
                          tau_task=math.inf)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _pose7(ee_pose) -> np.ndarray:
    if isinstance(ee_pose, FrameSet):
        return np.concatenate([ee_pose.ee_position, ee_pose.ee_quaternion])
    pose = np.asarray(ee_pose, dtype=float)
    if pose.shape != (7,):
        raise ValueError(
            "ee_pose must be a FrameSet or [px, py, pz, qw, qx, qy, qz]")
    return pose


def task_error(spec: ConstraintSpec, ee_pose) -> np.ndarray:
    """Constraint violation at a pose; see module docstring for the layout."""
    return _K.task_error_at(spec.packed, _pose7(ee_pose))


def task_error_and_jacobian(spec: ConstraintSpec, model: RobotModel, q):
    """(e, J) with J = d(task_error)/dq, one FK evaluation."""
    q = model.check_q(q)
    return _K.task_err_jac(spec.packed, model.packed, q)


def task_jacobian(spec: ConstraintSpec, model: RobotModel, q) -> np.ndarray:
    return task_error_and_jacobian(spec, model, q)[1]


def damped_pinv_apply(jac, e, lam: float = 1e-3) -> np.ndarray:
    """Jᵀ(JJᵀ + λ²I)⁻¹ e — the damped least-squares step.

    With lam=0 this is the Moore–Penrose solution for full-row-rank J;
    a rank-deficient J then raises SingularSystemError.
    """
    jac = np.atleast_2d(np.asarray(jac, dtype=float))
    e = np.asarray(e, dtype=float).reshape(jac.shape[0])
    if lam < 0:
        raise ValueError("lam must be non-negative")
    return _K.damped_step(jac, e, float(lam))

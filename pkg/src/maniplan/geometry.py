"""Geometric primitives, signed-clearance queries, and scene handling.

Scenes are flat collections of axis-aligned boxes and spheres in the world
frame (meters).  There is deliberately no broad-phase structure: validation
scans primitives linearly, which is exactly the work the shared-flag early
termination is meant to cut short.

``subdivide_scene`` implements the benchmark densification step: every box is
replaced by ``factor`` smaller boxes whose union is exactly the original box,
so free space is untouched while the primitive count scales.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import SceneFormatError

__all__ = [
    "Aabb", "Sphere", "Scene",
    "sphere_aabb_clearance", "sphere_sphere_clearance",
    "subdivide_scene", "load_scene", "dump_scene", "scene_contains",
]


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by componentwise min/max corners (m)."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min", np.asarray(self.min, dtype=float))
        object.__setattr__(self, "max", np.asarray(self.max, dtype=float))
        if self.min.shape != (3,) or self.max.shape != (3,):
            raise ValueError("Aabb corners must be 3-vectors")
        if not (np.isfinite(self.min).all() and np.isfinite(self.max).all()):
            raise ValueError("Aabb corners must be finite")
        for axis in range(3):
            if self.min[axis] > self.max[axis]:
                raise ValueError(f"Aabb min > max on axis {axis}")

    @property
    def extents(self) -> np.ndarray:
        return self.max - self.min

    @property
    def volume(self) -> float:
        e = self.extents
        return float(e[0] * e[1] * e[2])

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.min) and np.all(p <= self.max))


@dataclass(frozen=True)
class Sphere:
    """Sphere with world-frame center (m) and positive radius (m)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "radius", float(self.radius))
        if self.center.shape != (3,):
            raise ValueError("Sphere center must be a 3-vector")
        if not (np.isfinite(self.center).all() and math.isfinite(self.radius)):
            raise ValueError("Sphere must be finite")
        if self.radius <= 0.0:
            raise ValueError("Sphere radius must be > 0")


@dataclass(frozen=True)
class Scene:
    """Immutable obstacle set; an empty scene is free space."""

    boxes: tuple[Aabb, ...] = ()
    spheres: tuple[Sphere, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "spheres", tuple(self.spheres))

    @property
    def primitive_count(self) -> int:
        return len(self.boxes) + len(self.spheres)

    def packed(self) -> "PackedScene":
        return _pack_scene(self)


@dataclass(frozen=True)
class PackedScene:
    """Array/scalar-list views of a Scene for the kernel backends."""

    box_min: np.ndarray      # (B, 3) float64, C-contiguous
    box_max: np.ndarray      # (B, 3)
    sph_center: np.ndarray   # (E, 3)
    sph_radius: np.ndarray   # (E,)
    lists: tuple = field(repr=False, default=())


def _pack_scene(scene: Scene) -> PackedScene:
    nb = len(scene.boxes)
    ne = len(scene.spheres)
    box_min = np.zeros((nb, 3))
    box_max = np.zeros((nb, 3))
    for i, b in enumerate(scene.boxes):
        box_min[i] = b.min
        box_max[i] = b.max
    sph_center = np.zeros((ne, 3))
    sph_radius = np.zeros(ne)
    for i, s in enumerate(scene.spheres):
        sph_center[i] = s.center
        sph_radius[i] = s.radius
    lists = (
        [tuple(row) for row in box_min.tolist()],
        [tuple(row) for row in box_max.tolist()],
        [tuple(row) for row in sph_center.tolist()],
        sph_radius.tolist(),
    )
    return PackedScene(
        np.ascontiguousarray(box_min), np.ascontiguousarray(box_max),
        np.ascontiguousarray(sph_center), np.ascontiguousarray(sph_radius),
        lists,
    )


def sphere_aabb_clearance(s: Sphere, b: Aabb) -> float:
    """Distance from the sphere center to the closed box, minus the radius.

    Negative exactly when sphere and box overlap.  For a center inside the
    box the closest box point is the center itself, so the result is -radius.
    """
    from ._kernels import pure
    return pure.sphere_aabb_clearance(
        float(s.center[0]), float(s.center[1]), float(s.center[2]),
        s.radius,
        float(b.min[0]), float(b.min[1]), float(b.min[2]),
        float(b.max[0]), float(b.max[1]), float(b.max[2]),
    )


def sphere_sphere_clearance(a: Sphere, b: Sphere) -> float:
    """Center distance minus both radii; negative iff the spheres overlap."""
    from ._kernels import pure
    return pure.sphere_sphere_clearance(
        float(a.center[0]), float(a.center[1]), float(a.center[2]), a.radius,
        float(b.center[0]), float(b.center[1]), float(b.center[2]), b.radius,
    )


def scene_contains(scene: Scene, point) -> bool:
    """True iff ``point`` lies inside any primitive (boxes closed, spheres closed)."""
    p = np.asarray(point, dtype=float)
    for b in scene.boxes:
        if b.contains(p):
            return True
    for s in scene.spheres:
        d = p - s.center
        if float(d @ d) <= s.radius * s.radius:
            return True
    return False


def _split_box(box: Aabb) -> tuple[Aabb, Aabb]:
    """Halve a box at the midpoint of its longest axis (lowest axis on ties)."""
    e = box.extents
    axis = 0
    for k in (1, 2):
        if e[k] > e[axis]:
            axis = k
    mid = 0.5 * (box.min[axis] + box.max[axis])
    lo_max = box.max.copy()
    lo_max[axis] = mid
    hi_min = box.min.copy()
    hi_min[axis] = mid
    return Aabb(box.min.copy(), lo_max), Aabb(hi_min, box.max.copy())


def subdivide_box(box: Aabb, factor: int) -> list[Aabb]:
    """Replace one box by ``factor`` boxes tiling it exactly.

    Greedy rule: repeatedly split the piece with the largest volume (first
    such piece on ties) until the target count is reached.  Works for any
    factor >= 1, not just powers of two.
    """
    if factor < 1:
        raise ValueError("subdivision factor must be >= 1")
    pieces = [box]
    while len(pieces) < factor:
        best = 0
        best_vol = pieces[0].volume
        for i in range(1, len(pieces)):
            v = pieces[i].volume
            if v > best_vol:
                best = i
                best_vol = v
        lo, hi = _split_box(pieces[best])
        pieces[best:best + 1] = [lo, hi]
    return pieces


def subdivide_scene(scene: Scene, factor: int) -> Scene:
    """Densify: every box becomes ``factor`` boxes with identical union.

    Spheres pass through unchanged.  factor 1 returns the scene as-is.
    """
    if factor < 1:
        raise ValueError("subdivision factor must be >= 1")
    if factor == 1:
        return scene
    boxes: list[Aabb] = []
    for b in scene.boxes:
        boxes.extend(subdivide_box(b, factor))
    return Scene(boxes=tuple(boxes), spheres=scene.spheres,
                 name=f"{scene.name}@{factor}x" if scene.name else "")


# ---------------------------------------------------------------------------
# Scene file format (YAML, UTF-8, meters):
#
#   name: shelf
#   boxes:
#     - {min: [x, y, z], max: [x, y, z]}
#   spheres:
#     - {center: [x, y, z], radius: r}
#
# Both lists are optional; a missing list means none of that primitive.
# ---------------------------------------------------------------------------

def _as_vec3(value, where: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise SceneFormatError("expected a 3-element list", where)
    try:
        return np.array([float(v) for v in value])
    except (TypeError, ValueError):
        raise SceneFormatError("expected numeric entries", where) from None


def _parse_scene_dict(doc, where="scene") -> Scene:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SceneFormatError("document root must be a mapping", where)
    known = {"name", "boxes", "spheres"}
    for key in doc:
        if key not in known:
            raise SceneFormatError(f"unknown field {key!r}", where)
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise SceneFormatError("name must be a string", f"{where}.name")
    boxes = []
    for i, entry in enumerate(doc.get("boxes") or []):
        loc = f"{where}.boxes[{i}]"
        if not isinstance(entry, dict):
            raise SceneFormatError("expected a mapping with min/max", loc)
        lo = _as_vec3(entry.get("min"), f"{loc}.min")
        hi = _as_vec3(entry.get("max"), f"{loc}.max")
        for axis in range(3):
            if lo[axis] > hi[axis]:
                raise SceneFormatError(f"max < min on axis {axis}", loc)
        try:
            boxes.append(Aabb(lo, hi))
        except ValueError as exc:
            raise SceneFormatError(str(exc), loc) from None
    spheres = []
    for i, entry in enumerate(doc.get("spheres") or []):
        loc = f"{where}.spheres[{i}]"
        if not isinstance(entry, dict):
            raise SceneFormatError("expected a mapping with center/radius", loc)
        center = _as_vec3(entry.get("center"), f"{loc}.center")
        try:
            radius = float(entry.get("radius"))
        except (TypeError, ValueError):
            raise SceneFormatError("radius must be a number", loc) from None
        try:
            spheres.append(Sphere(center, radius))
        except ValueError as exc:
            raise SceneFormatError(str(exc), loc) from None
    return Scene(boxes=tuple(boxes), spheres=tuple(spheres), name=name)


def load_scene(source) -> Scene:
    """Read a Scene from a path, text, or readable stream.

    Raises SceneFormatError with a field path (and the YAML line for syntax
    errors) on malformed input.
    """
    text, where = _read_source(source)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{where}:line {mark.line + 1}" if mark else where
        raise SceneFormatError(f"not valid YAML: {exc}", loc) from None
    return _parse_scene_dict(doc, where)


def dump_scene(scene: Scene) -> str:
    """Serialize a Scene back to its file format."""
    doc = {
        "name": scene.name,
        "boxes": [{"min": b.min.tolist(), "max": b.max.tolist()}
                  for b in scene.boxes],
        "spheres": [{"center": s.center.tolist(), "radius": s.radius}
                    for s in scene.spheres],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _read_source(source, err=SceneFormatError) -> tuple[str, str]:
    """Accept a filesystem path, bytes/str document, or file object."""
    import os

    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        return data, getattr(source, "name", "<stream>")
    if isinstance(source, bytes):
        return source.decode("utf-8"), "<bytes>"
    if isinstance(source, str):
        if "\n" not in source and os.path.exists(source):
            with io.open(source, "r", encoding="utf-8") as fh:
                return fh.read(), source
        return source, "<string>"
    if hasattr(source, "__fspath__"):
        with io.open(os.fspath(source), "r", encoding="utf-8") as fh:
            return fh.read(), os.fspath(source)
    raise err(f"cannot read document from {type(source).__name__}")

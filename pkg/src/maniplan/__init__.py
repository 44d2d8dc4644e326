"""maniplan: constrained sampling-based motion planning for serial arms.

Bidirectional RRT-Connect whose tree extensions project whole motion
segments onto a task-constraint manifold (plane / line / fixed
orientation at the end effector), with sphere-vs-box collision checking
that stops early through a shared cancellation flag, plus a benchmark
harness.  The numeric core runs on either a compiled Cython backend or a
bit-identical pure-Python fallback (see maniplan._kernels).
"""

from ._kernels import active_name as kernel_backend
from .constraints import (ConstraintSpec, LineConstraint, PlaneConstraint,
                          damped_pinv_apply, task_error, task_jacobian,
                          unconstrained)
from .errors import (FormatError, ManiplanError, PlanSetupError,
                     ProblemFormatError, RobotFormatError, SceneFormatError,
                     SingularSystemError)
from .geometry import (Aabb, Scene, Sphere, load_scene, sphere_aabb_clearance,
                       sphere_sphere_clearance, subdivide_scene)
from .kinematics import (FrameSet, RobotModel, collision_spheres_world,
                         forward_kinematics, geometric_jacobian, load_robot)
from .planner import (PlanParams, PlanProblem, PlanResult, Tree, connect,
                      extend, extract_path, nearest, plan, revalidate_path,
                      steer)
from .projection import (MotionSegment, ProjectionOutcome, ProjectionParams,
                         interpolate_segment, parallel_project,
                         project_configuration, sequential_project)
from .sampling import HaltonState, trial_seed_offset
from .validation import ValidationReport, validate_configuration, validate_motion

__version__ = "0.1.0"

__all__ = [
    "__version__", "kernel_backend",
    # constraints
    "ConstraintSpec", "PlaneConstraint", "LineConstraint", "task_error",
    "task_jacobian", "damped_pinv_apply", "unconstrained",
    # errors
    "ManiplanError", "FormatError", "SceneFormatError", "RobotFormatError",
    "ProblemFormatError", "SingularSystemError", "PlanSetupError",
    # geometry
    "Aabb", "Sphere", "Scene", "load_scene", "subdivide_scene",
    "sphere_aabb_clearance", "sphere_sphere_clearance",
    # kinematics
    "RobotModel", "FrameSet", "load_robot", "forward_kinematics",
    "collision_spheres_world", "geometric_jacobian",
    # planner
    "Tree", "PlanParams", "PlanProblem", "PlanResult", "plan", "nearest",
    "steer", "extend", "connect", "extract_path", "revalidate_path",
    # projection
    "MotionSegment", "ProjectionParams", "ProjectionOutcome",
    "interpolate_segment", "parallel_project", "sequential_project",
    "project_configuration",
    # sampling
    "HaltonState", "trial_seed_offset",
    # validation
    "ValidationReport", "validate_motion", "validate_configuration",
]

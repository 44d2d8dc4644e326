import numpy as np
import pytest

from maniplan.bench import _data_file
from maniplan.geometry import load_scene
from maniplan.kinematics import load_robot
from maniplan.sampling import HaltonState

# A 2-link planar arm with hand-checkable kinematics: two z-axis revolute
# joints, 0.5 m links along x, one sphere per link.
PLANAR2_YAML = """
name: planar2
zero_pose_ee: [0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
joints:
  - {type: revolute, axis: [0, 0, 1], origin: {xyz: [0, 0, 0], rpy: [0, 0, 0]},
     limits: [-3.1, 3.1]}
  - {type: revolute, axis: [0, 0, 1],
     origin: {xyz: [0.5, 0, 0], rpy: [0, 0, 0]}, limits: [-3.1, 3.1]}
ee_link: 1
link_spheres:
  - {link: 0, center: [0.25, 0, 0], radius: 0.08}
  - {link: 1, center: [0.25, 0, 0], radius: 0.08}
self_collision_pairs: []
"""


@pytest.fixture(scope="session")
def arm7():
    return load_robot(_data_file("robots", "arm7").read_text())


@pytest.fixture(scope="session")
def arm8():
    return load_robot(_data_file("robots", "arm8").read_text())


@pytest.fixture(scope="session")
def planar2():
    return load_robot(PLANAR2_YAML)


@pytest.fixture(scope="session")
def scenes():
    return {name: load_scene(_data_file("scenes", name).read_text())
            for name in ("shelf", "table", "posts", "window")}


@pytest.fixture(scope="session")
def shelf_scene(scenes):
    return scenes["shelf"]


def halton_configs(model, count, seed_offset=0):
    """Deterministic batch of joint vectors inside the model's limits."""
    sampler = HaltonState(model.n, seed_offset=seed_offset)
    limits = model.limits
    return [sampler.next_sample(limits) for _ in range(count)]

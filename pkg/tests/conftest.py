import math

import numpy as np
import pytest

from crossview.frames import Pose, rotation_from_angles


def random_pose(rng):
    yaw = rng.uniform(-180, 180)
    pitch = rng.uniform(-89, 89)
    roll = rng.uniform(-30, 30)
    center = rng.uniform(-50, 50, 3)
    return Pose.from_center(rotation_from_angles(yaw, pitch, roll), center)


def rotation_about(axis, angle_deg):
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    th = math.radians(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * (K @ K)


@pytest.fixture
def rng():
    return np.random.default_rng(0)

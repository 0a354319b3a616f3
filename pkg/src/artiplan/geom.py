"""Rigid-body pose algebra on SE(3).

Orientations are stored as unit quaternions in (w, x, y, z) order; rotation
matrices are derived on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_NORM_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise ValueError("zero quaternion")
    # already-unit input is kept bit-for-bit so serialized poses round-trip
    if abs(n - 1.0) <= 4e-16:
        return q.copy()
    return q / n


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R):
    """Shepperd's method; returns the representative with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return -q if q[0] < 0 else q


def quat_angle(q):
    """Rotation angle in [0, pi] of a unit quaternion, well conditioned near 0."""
    return 2.0 * math.atan2(math.sqrt(q[1] ** 2 + q[2] ** 2 + q[3] ** 2), abs(q[0]))


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = quat_normalize(np.array(self.orientation, dtype=float).reshape(4))
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_matrix(cls, R, p):
        return cls(p, quat_from_matrix(R))

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def transform_point(self, x):
        return self.rotation @ np.asarray(x, dtype=float) + self.position

    def to_list(self):
        return [float(v) for v in self.position] + [float(v) for v in self.orientation]

    @classmethod
    def from_list(cls, vals):
        vals = [float(v) for v in vals]
        if len(vals) != 7:
            raise ValueError(f"pose needs 7 numbers, got {len(vals)}")
        return cls(vals[:3], vals[3:])

    def __repr__(self):
        return f"Pose(position={self.position.tolist()}, orientation={self.orientation.tolist()})"


@dataclass(frozen=True)
class PoseError:
    translational: float
    rotational: float

    def within(self, tol_trans, tol_rot):
        return self.translational <= tol_trans and self.rotational <= tol_rot


def compose(a: Pose, b: Pose) -> Pose:
    """Pose of b expressed through a: x -> a(b(x))."""
    q = quat_mul(a.orientation, b.orientation)
    p = a.position + quat_to_matrix(a.orientation) @ b.position
    return Pose(p, q)


def inverse(a: Pose) -> Pose:
    qi = quat_conj(a.orientation)
    return Pose(-(quat_to_matrix(qi) @ a.position), qi)


def rot_z(angle) -> Pose:
    return Pose(np.zeros(3), quat_from_axis_angle([0.0, 0.0, 1.0], angle))


def pose_error(a: Pose, b: Pose) -> PoseError:
    trans = float(np.linalg.norm(a.position - b.position))
    rel = quat_mul(quat_conj(a.orientation), b.orientation)
    rot = min(quat_angle(rel), math.pi)
    return PoseError(trans, rot)


def rotate_about_line(p: Pose, axis_point, axis_dir, angle) -> Pose:
    axis_dir = np.asarray(axis_dir, dtype=float)
    if abs(float(np.linalg.norm(axis_dir)) - 1.0) > _NORM_TOL:
        raise ValueError("axis_dir must be a unit vector")
    if angle == 0:
        return p
    c = np.asarray(axis_point, dtype=float)
    qr = quat_from_axis_angle(axis_dir, angle)
    R = quat_to_matrix(qr)
    return Pose(c + R @ (p.position - c), quat_mul(qr, p.orientation))


def rotvec_from_matrix(R):
    """Rotation vector (axis * angle) of a rotation matrix."""
    R = np.asarray(R, dtype=float)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * float(np.linalg.norm(v))
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    angle = math.atan2(s, c)
    if angle < 1e-12:
        return 0.5 * v
    if angle < math.pi - 1e-6:
        return v * (angle / (2.0 * s))
    # near pi: axis from the symmetric part
    B = 0.5 * (R + np.eye(3))
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / math.sqrt(max(B[k, k], 1e-300))
    if axis @ v < 0:
        axis = -axis
    return axis * angle

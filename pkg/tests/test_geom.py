import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from artiplan.geom import (Pose, compose, inverse, pose_error, quat_from_axis_angle, quat_from_matrix,
                           quat_mul, quat_normalize, quat_to_matrix, rotate_about_line, rotvec_from_matrix)

finite = st.floats(-10, 10, allow_nan=False)
quats = st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4).filter(
    lambda q: np.linalg.norm(q) > 0.1).map(lambda q: quat_normalize(np.array(q)))
poses = st.tuples(st.lists(finite, min_size=3, max_size=3), quats).map(lambda t: Pose(t[0], t[1]))


@given(quats)
def test_rotation_matrix_is_proper(q):
    R = quat_to_matrix(q)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


@given(quats)
def test_matrix_quaternion_round_trip(q):
    q2 = quat_from_matrix(quat_to_matrix(q))
    assert q2[0] >= 0
    assert min(np.abs(q2 - q).max(), np.abs(q2 + q).max()) < 1e-9


@given(quats)
def test_matrix_agrees_with_scipy(q):
    ref = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
    assert np.allclose(quat_to_matrix(q), ref, atol=1e-12)


@given(poses, poses, poses)
def test_compose_associative(a, b, c):
    lhs = compose(compose(a, b), c)
    rhs = compose(a, compose(b, c))
    e = pose_error(lhs, rhs)
    assert e.translational < 1e-9 and e.rotational < 1e-7


@given(poses)
def test_inverse_gives_identity(a):
    for e in (pose_error(compose(a, inverse(a)), Pose.identity()),
              pose_error(compose(inverse(a), a), Pose.identity())):
        assert e.translational < 1e-9 and e.rotational < 1e-7


@given(poses, st.lists(finite, min_size=3, max_size=3))
def test_transform_point_matches_homogeneous(a, x):
    y = a.as_matrix() @ np.r_[x, 1.0]
    assert np.allclose(a.transform_point(x), y[:3], atol=1e-9)


@given(poses, poses)
def test_pose_error_symmetric_and_bounded(a, b):
    e1, e2 = pose_error(a, b), pose_error(b, a)
    assert e1.translational == pytest.approx(e2.translational, abs=1e-12)
    assert e1.rotational == pytest.approx(e2.rotational, abs=1e-9)
    assert 0.0 <= e1.rotational <= math.pi


@given(poses)
def test_pose_error_zero_on_self(a):
    e = pose_error(a, a)
    assert e.translational == 0.0 and e.rotational < 1e-7


@given(poses, st.floats(-3, 3), quats)
def test_rotate_about_line_keeps_axis_distance(p, angle, qa):
    axis = quat_to_matrix(qa)[:, 0]
    c = np.array([0.3, -0.2, 0.5])
    out = rotate_about_line(p, c, axis, angle)

    def radial(x):
        d = x - c
        return np.linalg.norm(d - (d @ axis) * axis)

    assert radial(out.position) == pytest.approx(radial(p.position), abs=1e-9)
    assert pose_error(p, out).rotational == pytest.approx(abs(math.remainder(angle, 2 * math.pi)), abs=1e-7)


def test_rotate_about_line_rejects_non_unit_axis():
    with pytest.raises(ValueError):
        rotate_about_line(Pose.identity(), np.zeros(3), [0, 0, 2.0], 0.3)


@given(quats)
def test_rotvec_agrees_with_scipy(q):
    R = quat_to_matrix(q)
    ref = Rotation.from_matrix(R).as_rotvec()
    got = rotvec_from_matrix(R)
    # the two representations of a half turn are both valid
    if abs(np.linalg.norm(ref) - math.pi) < 1e-6:
        assert min(np.abs(got - ref).max(), np.abs(got + ref).max()) < 1e-6
    else:
        assert np.allclose(got, ref, atol=1e-8)


def test_rotvec_near_half_turn():
    for eps in (0.0, 1e-9, 1e-7):
        R = quat_to_matrix(quat_from_axis_angle(np.array([0.6, 0.0, 0.8]), math.pi - eps))
        v = rotvec_from_matrix(R)
        assert np.linalg.norm(v) == pytest.approx(math.pi - eps, abs=1e-6)


def test_pose_list_round_trip_is_exact():
    p = Pose([0.1, 0.2, 0.3], quat_normalize([0.3, 0.1, -0.5, 0.2]))
    q = Pose.from_list(p.to_list())
    assert q.to_list() == p.to_list()
    with pytest.raises(ValueError):
        Pose.from_list([0.0] * 6)


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        quat_normalize([0, 0, 0, 0])


def test_quat_mul_matches_matrix_product():
    a = quat_normalize([0.9, 0.1, 0.2, 0.3])
    b = quat_normalize([0.2, -0.4, 0.1, 0.8])
    assert np.allclose(quat_to_matrix(quat_mul(a, b)), quat_to_matrix(a) @ quat_to_matrix(b))

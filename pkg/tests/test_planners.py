import numpy as np
import pytest

from artiplan.artic import ConvexSolid, constraint_pose_at
from artiplan.collide import CollisionWorld
from artiplan.geom import Pose, pose_error
from artiplan.planners import (RANGE_FRACTION, EdgeChecker, PlannerParams, chained_rrt_connect,
                               endpoint_configs, project_to_constraint, projected_rrt, rrt_connect)
from artiplan.robot import BasePlacement, forward_kinematics, neutral_config, ready_config

BASE = BasePlacement(0.0, 0.0, 0.5)


@pytest.fixture(scope="module")
def wall_world(model):
    # a block where the hand passes halfway between the two postures forces a detour
    q = 0.5 * (neutral_config(model).angles + ready_config(model).angles)
    mid = forward_kinematics(model, BASE, q).position
    return CollisionWorld([ConvexSolid.box(Pose(mid, [1, 0, 0, 0]), (0.04, 0.04, 0.04))])


def _edges_ok(model, path, checker, step):
    for a, b in zip(path[:-1], path[1:]):
        assert np.linalg.norm(b - a) <= step + 1e-9
        assert checker.edge_free(a, b)


def test_rrt_connect_endpoints_and_edges(model, wall_world):
    start = neutral_config(model).angles
    goal = ready_config(model).angles
    checker = EdgeChecker(model, BASE, wall_world)
    p = PlannerParams(seed=3)
    res = rrt_connect(model, start, goal, BASE, checker, p)
    assert res.success and len(res.path) > 2
    assert not checker.edge_free(start, goal)
    assert np.array_equal(res.path[0], start) and np.array_equal(res.path[-1], goal)
    _edges_ok(model, res.path, checker, p.step(model))
    again = rrt_connect(model, start, goal, BASE, checker, p)
    assert np.array_equal(again.path, res.path)


def test_rrt_connect_straight_line_when_free(model):
    checker = EdgeChecker(model, BASE, CollisionWorld([]))
    a = neutral_config(model).angles
    b = a + 0.3
    res = rrt_connect(model, a, b, BASE, checker)
    assert res.success and len(res.path) == 2 and res.samples == 0


def test_rrt_connect_degenerate_and_invalid(model):
    checker = EdgeChecker(model, BASE, CollisionWorld([]))
    q = neutral_config(model).angles
    res = rrt_connect(model, q, q, BASE, checker)
    assert len(res.path) == 1
    low = EdgeChecker(model, BasePlacement(0, 0, 0.25), CollisionWorld([], floor_z=0.6))
    with pytest.raises(ValueError):
        rrt_connect(model, q, q + 0.1, BasePlacement(0, 0, 0.25), low)


def test_rrt_connect_respects_sample_budget(model, wall_world):
    checker = EdgeChecker(model, BASE, wall_world)
    start, goal = neutral_config(model).angles, ready_config(model).angles
    for n in (0, 1, 5):
        res = rrt_connect(model, start, goal, BASE, checker, PlannerParams(max_samples=n, step_size=0.05))
        assert res.samples <= n
        if not res.success:
            assert res.reason == "sample budget exhausted"


def test_default_step_follows_joint_range(model):
    diam = np.linalg.norm(model.limits[:, 1] - model.limits[:, 0])
    assert PlannerParams().step(model) == pytest.approx(RANGE_FRACTION * diam)
    assert PlannerParams(step_size=0.1).step(model) == 0.1
    for kw in ({"max_samples": -1}, {"step_size": 0.0}, {"time_budget": 0.0}, {"projection_tol": (0.0, 0.1)}):
        with pytest.raises(ValueError):
            PlannerParams(**kw)


def test_projection_lands_on_the_constraint(model, solved):
    inst, _, res = solved
    base = res.plan.base
    q = res.plan.array[4] + 0.05
    out = project_to_constraint(model, q, base, inst.obj)
    assert out is not None
    qp, f = out
    e = pose_error(forward_kinematics(model, base, qp), constraint_pose_at(inst.obj, f))
    assert e.translational <= 0.01 and e.rotational <= 0.01


def test_projected_rrt_opens_monotonically(model, solved):
    inst, _, res = solved
    base = res.plan.base
    world = inst.scene.world(0)
    checker = EdgeChecker(model, base, world)
    for step in (None, 0.3):
        out = projected_rrt(model, res.plan.array[0], res.plan.array[-1], base, inst.obj, checker,
                            PlannerParams(seed=1, step_size=step))
        assert out.success
        assert np.all(np.diff(out.fractions) >= 0)
        for q, f in zip(out.path, out.fractions):
            e = pose_error(forward_kinematics(model, base, q), constraint_pose_at(inst.obj, f))
            assert e.translational <= 0.01 and e.rotational <= 0.01
    none = projected_rrt(model, res.plan.array[0], res.plan.array[-1], base, inst.obj, checker,
                         PlannerParams(max_samples=0))
    assert not none.success and none.samples == 0


def test_endpoint_configs_reach_the_waypoints(model, solved):
    inst, _, res = solved
    base = res.plan.base
    ends = endpoint_configs(model, base, inst.waypoints, EdgeChecker(model, base, CollisionWorld([])),
                            PlannerParams(n_ik_inits=30))
    if ends is not None:
        for q, w in zip(ends, (inst.waypoints.waypoints[0], inst.waypoints.waypoints[-1])):
            assert pose_error(forward_kinematics(model, base, q), w).translational <= 1e-4


def test_chained_rrt_passes_through_every_config(model):
    checker = EdgeChecker(model, BASE, CollisionWorld([]))
    q = neutral_config(model).angles
    chain = [q, q + 0.2, q + 0.4]
    res = chained_rrt_connect(model, chain, BASE, checker)
    assert res.success
    for c in chain:
        assert any(np.array_equal(c, p) for p in res.path)

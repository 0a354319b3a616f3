import numpy as np
import pytest
from hypothesis import given, strategies as st

from artiplan.artic import ConvexSolid
from artiplan.collide import (CollisionWorld, capsule_capsule_distance, capsule_solid_distance, check_config,
                              check_state, pack_solids, sweep_check)
from artiplan.geom import Pose
from artiplan.robot import BasePlacement, Capsule, forward_kinematics, link_geometry, neutral_config, random_config

from oracles import capsule_capsule_sampled, capsule_solid_sampled, random_capsule, random_solid

BASE = BasePlacement(0.0, 0.0, 0.5)
seeds = st.integers(0, 2 ** 32 - 1)


@given(seeds)
def test_capsule_solid_distance_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    s = random_solid(rng)
    a, b, r = random_capsule(rng)
    assert capsule_solid_distance(Capsule(a, b, r), s) == pytest.approx(capsule_solid_sampled(a, b, r, s), abs=1e-3)


@given(seeds)
def test_capsule_capsule_distance_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    a1, b1, r1 = random_capsule(rng)
    a2, b2, r2 = random_capsule(rng)
    d = capsule_capsule_distance(Capsule(a1, b1, r1), Capsule(a2, b2, r2))
    assert d == pytest.approx(capsule_capsule_sampled(a1, b1, a2, b2, r1, r2), abs=1e-3)


def test_parallel_and_degenerate_segments():
    c1 = Capsule(np.array([0, 0, 0.0]), np.array([1, 0, 0.0]), 0.1)
    c2 = Capsule(np.array([0.5, 0.5, 0.0]), np.array([1.5, 0.5, 0.0]), 0.1)
    assert capsule_capsule_distance(c1, c2) == pytest.approx(0.3)
    point = Capsule(np.array([0, 0, 1.0]), np.array([0, 0, 1.0]), 0.05)
    box = ConvexSolid.box(Pose.identity(), (0.5, 0.5, 0.5))
    assert capsule_solid_distance(point, box) == pytest.approx(0.45)


def test_touching_is_not_collision(model):
    q = neutral_config(model)
    tip = forward_kinematics(model, BASE, q).position
    caps = [c for c in link_geometry(model, BASE, q) if c.link == model.grasp_link]
    # a box just below the lowest point of the finger capsule
    low = min(min(c.a[2], c.b[2]) - c.radius for c in caps)
    box = ConvexSolid.box(Pose([tip[0], tip[1], low - 0.05], [1, 0, 0, 0]), (0.05, 0.05, 0.05))
    assert not check_config(model, BASE, q, [box]).in_collision
    box_in = ConvexSolid.box(Pose([tip[0], tip[1], low - 0.04], [1, 0, 0, 0]), (0.05, 0.05, 0.05))
    rep = check_config(model, BASE, q, [box_in])
    assert rep.in_collision and rep.category == "static" and rep.distance < 0


def test_free_space_is_clear(model):
    rep = check_config(model, BASE, neutral_config(model), [])
    assert not rep.in_collision and rep.category == "none"


def test_self_collision_detected(model):
    rng = np.random.default_rng(0)
    cats = {check_config(model, BASE, random_config(model, rng), []).category for _ in range(400)}
    assert "self" in cats


def test_floor_counts_as_static(model):
    rep = check_config(model, BasePlacement(0, 0, 0.25), neutral_config(model), [], floor_z=0.6)
    assert rep.in_collision and rep.category == "static"


def test_sweep_reports_first_colliding_state(model):
    q0 = neutral_config(model).angles
    # swing the shoulder forward step by step; a box sits where the hand ends up
    dense = [q0 + np.array([0, 0.01 * k, 0, 0, 0, 0, 0]) for k in range(60)]
    tip = forward_kinematics(model, BASE, dense[-1]).position
    box = ConvexSolid.box(Pose(tip, [1, 0, 0, 0]), (0.05, 0.05, 0.05))
    world = CollisionWorld([box])
    idx, rep = sweep_check(model, BASE, dense, np.zeros(len(dense)), world)
    assert idx is not None and 0 < idx < len(dense) and rep.in_collision
    assert all(not check_state(model, BASE, q, world, 0.0).in_collision for q in dense[:idx])
    with pytest.raises(ValueError):
        sweep_check(model, BASE, dense, np.zeros(3), world)


def test_pack_layout():
    boxes = [ConvexSolid.box(Pose([i, 0, 0], [1, 0, 0, 0]), (0.1, 0.2, 0.3)) for i in range(3)]
    verts, v_off, planes, f_off, loops, l_off, edges, e_off, aabb = pack_solids(boxes)
    assert verts.shape == (24, 3) and list(v_off) == [0, 8, 16, 24]
    assert planes.shape == (18, 4) and list(f_off) == [0, 6, 12, 18]
    assert edges.shape == (36, 2) and list(e_off) == [0, 12, 24, 36]
    assert np.allclose(aabb[1], [0.9, -0.2, -0.3, 1.1, 0.2, 0.3])
    assert len(pack_solids([])[0]) == 0

"""Collision checking: self, static scene and articulating object.

Touching is not collision (contact margin 0). The grasp link is exempt from
contact with the articulating face, since holding the handle is intended.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _collide
from .artic import ArticulatedObject, ConvexSolid
from .robot import ArmModel, BasePlacement, Capsule, JointConfig

CATEGORIES = {0: "none", 1: "self", 2: "object", 3: "static"}
CONTACT_MARGIN = 0.0


@dataclass(frozen=True)
class CollisionReport:
    in_collision: bool
    category: str
    witness: tuple
    distance: float

    @classmethod
    def clear(cls, distance=float("inf")):
        return cls(False, "none", (-1, -1), float(distance))


def pack_solids(solids):
    """Flatten convex solids into the array layout of the compiled kernels."""
    verts, v_off, planes, f_off, loops, l_off, edges, e_off, aabb = [], [0], [], [0], [], [0], [], [0], []
    for s in solids:
        base = sum(len(v) for v in verts)
        verts.append(s.vertices)
        v_off.append(v_off[-1] + len(s.vertices))
        pl = s.planes()
        planes.append(pl)
        f_off.append(f_off[-1] + len(pl))
        for f in s.faces:
            loops.extend(base + i for i in f)
            l_off.append(l_off[-1] + len(f))
        e = s.edges() + base
        edges.append(e)
        e_off.append(e_off[-1] + len(e))
        lo, hi = s.aabb()
        aabb.append(np.concatenate([lo, hi]))
    return (
        np.vstack(verts) if verts else np.zeros((0, 3)),
        np.array(v_off, dtype=np.int64),
        np.vstack(planes) if planes else np.zeros((0, 4)),
        np.array(f_off, dtype=np.int64),
        np.array(loops, dtype=np.int64),
        np.array(l_off, dtype=np.int64),
        np.vstack(edges).astype(np.int64) if edges else np.zeros((0, 2), dtype=np.int64),
        np.array(e_off, dtype=np.int64),
        np.array(aabb) if aabb else np.zeros((0, 6)),
    )


def capsule_solid_distance(capsule: Capsule, solid: ConvexSolid) -> float:
    """Exact signed distance between a capsule and a convex solid."""
    pack = pack_solids([solid])
    a = np.asarray(capsule.a, dtype=float)
    b = np.asarray(capsule.b, dtype=float)
    return float(_collide.seg_poly_signed(a, b, 0, pack)) - capsule.radius


def capsule_capsule_distance(c1: Capsule, c2: Capsule) -> float:
    return float(_collide.seg_seg_dist(np.asarray(c1.a, float), np.asarray(c1.b, float),
                                       np.asarray(c2.a, float), np.asarray(c2.b, float))) - c1.radius - c2.radius


class CollisionWorld:
    """Packed static obstacles plus one articulating object, ready for the kernels."""

    def __init__(self, statics, obj: ArticulatedObject | None = None, floor_z=0.0):
        self.statics = list(statics)
        self.obj = obj
        self.floor_z = float(floor_z)
        self.static_pack = pack_solids(self.statics)
        self.obj_pack = pack_solids(obj.closed_solids() if obj is not None else [])
        if obj is not None:
            okind, _, _, direction, axis_pt, extent = obj.kernel_params
            self.obj_params = (okind, direction, axis_pt, extent)
        else:
            self.obj_params = (0, np.zeros(3), np.zeros(3), 0.0)

    def object_pack_at(self, fraction):
        R, t = _collide.articulation_map(float(fraction), *self.obj_params)
        return _collide.transform_pack(self.obj_pack, R, t)


def _report(cat, d, wa, wb):
    return CollisionReport(bool(d < CONTACT_MARGIN), CATEGORIES[int(cat)], (int(wa), int(wb)), float(d))


def _angles(q):
    return np.ascontiguousarray(q.angles if isinstance(q, JointConfig) else q, dtype=float)


def check_config(model: ArmModel, base: BasePlacement, q, statics, object_solids=(),
                 exemptions=None, floor_z=0.0) -> CollisionReport:
    """Exact check of one configuration.

    ``exemptions`` names the link allowed to touch ``object_solids``; by default
    the model's grasp link. Pass -1 to exempt nothing.
    """
    R0, p0 = base.frame()
    frames, links, A, B, r = model.capsule_arrays
    WA, WB = _collide.world_capsules(_angles(q), R0, p0, model.km, frames, A, B, r, float(floor_z))
    grasp = model.grasp_link if exemptions is None else int(exemptions)
    st = statics if isinstance(statics, tuple) and len(statics) == 9 else pack_solids(statics)
    ob = object_solids if isinstance(object_solids, tuple) and len(object_solids) == 9 else pack_solids(object_solids)
    res = _collide.check_capsules(WA, WB, r, links, frames, model.self_pairs, st, ob,
                                  float(floor_z), grasp, True)
    return _report(*res)


def check_state(model: ArmModel, base: BasePlacement, q, world: CollisionWorld, fraction) -> CollisionReport:
    return check_config(model, base, q, world.static_pack, world.object_pack_at(fraction),
                        floor_z=world.floor_z)


def sweep_check(model: ArmModel, base: BasePlacement, dense_traj, fraction_schedule,
                world: CollisionWorld):
    """First colliding state index and its report, or (None, clear report)."""
    dense = np.ascontiguousarray([_angles(q) for q in dense_traj], dtype=float).reshape(-1, 7)
    sched = np.ascontiguousarray(fraction_schedule, dtype=float)
    if len(dense) != len(sched):
        raise ValueError(f"trajectory has {len(dense)} states but schedule has {len(sched)}")
    idx = sweep_index(model, base, dense, sched, world)
    if idx < 0:
        return None, CollisionReport.clear()
    return idx, check_state(model, base, dense[idx], world, sched[idx])


def sweep_index(model, base, dense, sched, world: CollisionWorld) -> int:
    R0, p0 = base.frame()
    frames, links, A, B, r = model.capsule_arrays
    okind, direction, axis_pt, extent = world.obj_params
    return int(_collide.sweep_kernel(dense, sched, R0, p0, model.km, frames, links, A, B, r,
                                     model.self_pairs, world.static_pack, world.obj_pack, okind,
                                     direction, axis_pt, extent, world.floor_z, model.grasp_link))

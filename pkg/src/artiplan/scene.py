"""Scenes: static clutter plus articulated objects, file format, visibility, generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .artic import (KINDS, ArticulatedObject, ConvexSolid, WaypointTrajectory,
                    generate_waypoints, half_ellipse_profile, make_object, object_geometry_at)
from .geom import Pose, pose_error, quat_from_matrix

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")
SENSE_SPACING = 0.05
CAMERA_STANDOFF = 1.5


class SceneError(ValueError):
    """Schema or invariant violation in a scene document; ``path`` locates it."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(eq=False)
class Scene:
    statics: list
    objects: list
    floor_z: float = 0.0
    camera: Pose = field(default_factory=Pose.identity)
    scene_id: str = "scene"
    _cache: dict = field(default_factory=dict, repr=False)

    def obstacles_for(self, target: int):
        """Static solids plus the closed geometry of every non-target object."""
        extra = [s for k, o in enumerate(self.objects) if k != target for s in o.closed_solids()]
        return list(self.statics) + extra

    def sensed(self):
        if "sensed" not in self._cache:
            self._cache["sensed"] = sensed_geometry(self, self.camera)
        return self._cache["sensed"]

    def world(self, target: int, sensed: bool = False):
        """Packed collision world for one target object (cached)."""
        from .collide import CollisionWorld

        key = ("world", target, sensed)
        if key not in self._cache:
            statics = self.sensed() if sensed else self.statics
            extra = [s for k, o in enumerate(self.objects) if k != target for s in o.closed_solids()]
            self._cache[key] = CollisionWorld(list(statics) + extra, self.objects[target], self.floor_z)
        return self._cache[key]


@dataclass(eq=False)
class ProblemInstance:
    scene: Scene
    target_object_index: int
    waypoints: WaypointTrajectory
    instance_id: str
    split: str

    @property
    def obj(self) -> ArticulatedObject:
        return self.scene.objects[self.target_object_index]

    @property
    def kind(self):
        return self.obj.kind


# ---------------------------------------------------------------------------
# convex overlap


def _axes(solid):
    P = solid.planes()
    return P[:, :3], solid.vertices[solid.edges()[:, 1]] - solid.vertices[solid.edges()[:, 0]]


def solids_overlap(a: ConvexSolid, b: ConvexSolid, eps=1e-9) -> bool:
    """Separating-axis test; touching is not overlap."""
    na, ea = _axes(a)
    nb, eb = _axes(b)
    axes = [na, nb]
    cr = np.cross(ea[:, None, :], eb[None, :, :]).reshape(-1, 3)
    norms = np.linalg.norm(cr, axis=1)
    axes.append(cr[norms > 1e-9] / norms[norms > 1e-9, None])
    for ax in np.vstack(axes):
        pa = a.vertices @ ax
        pb = b.vertices @ ax
        if pa.max() <= pb.min() + eps or pb.max() <= pa.min() + eps:
            return False
    return True


# ---------------------------------------------------------------------------
# file format


def _pose_out(p: Pose):
    return p.to_list()


def object_to_dict(o: ArticulatedObject):
    d = {
        "kind": o.kind,
        "face_center": _pose_out(o.face_center),
        "width": o.width,
        "height": o.height,
        "handle": _pose_out(o.handle),
        "opening_extent": o.opening_extent,
        "face_thickness": o.face_thickness,
        "lid_profile": None if o.lid_profile is None else o.lid_profile.tolist(),
    }
    if o.axis_point is not None:
        d["axis"] = {"point": o.axis_point.tolist(), "dir": o.axis_dir.tolist()}
    return d


def scene_to_dict(scene: Scene, instances=()):
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene.scene_id,
        "floor_z": scene.floor_z,
        "camera": _pose_out(scene.camera),
        "statics": [s.to_dict() for s in scene.statics],
        "objects": [object_to_dict(o) for o in scene.objects],
        "instances": [{
            "instance_id": inst.instance_id,
            "target": inst.target_object_index,
            "split": inst.split,
            "opening_fractions": inst.waypoints.opening_fractions.tolist(),
            "waypoints": [_pose_out(w) for w in inst.waypoints.waypoints],
        } for inst in instances],
    }


def save_scene(scene: Scene, instances=()) -> bytes:
    return (json.dumps(scene_to_dict(scene, instances), indent=1) + "\n").encode()


def _req(d, key, path, types):
    if not isinstance(d, dict) or key not in d:
        raise SceneError(path, f"missing field {key!r}")
    v = d[key]
    if not isinstance(v, types) or isinstance(v, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise SceneError(f"{path}.{key}", f"expected {types}, got {type(v).__name__}")
    return v


def _pose_in(v, path):
    if not isinstance(v, list) or len(v) != 7 or not all(isinstance(x, (int, float)) for x in v):
        raise SceneError(path, "pose must be 7 numbers (x y z qw qx qy qz)")
    q = np.array(v[3:], dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise SceneError(path, "quaternion is not unit norm")
    return Pose.from_list(v)


def _object_in(d, path):
    kind = _req(d, "kind", path, str)
    if kind not in KINDS:
        raise SceneError(f"{path}.kind", f"unknown articulation kind {kind!r}")
    axis = d.get("axis")
    try:
        return ArticulatedObject(
            kind=kind,
            face_center=_pose_in(_req(d, "face_center", path, list), f"{path}.face_center"),
            width=float(_req(d, "width", path, (int, float))),
            height=float(_req(d, "height", path, (int, float))),
            handle=_pose_in(_req(d, "handle", path, list), f"{path}.handle"),
            opening_extent=float(_req(d, "opening_extent", path, (int, float))),
            face_thickness=float(d.get("face_thickness", 0.02)),
            lid_profile=None if d.get("lid_profile") is None else np.array(d["lid_profile"], dtype=float),
            axis_point=None if axis is None else np.array(axis["point"], dtype=float),
            axis_dir=None if axis is None else np.array(axis["dir"], dtype=float),
        )
    except SceneError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise SceneError(path, f"invariant violated: {exc}") from exc


def load_scene_document(data: bytes | str):
    """Parse a scene document into (Scene, [ProblemInstance])."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SceneError("$", f"not a well-formed document: {exc}") from exc
    version = _req(doc, "schema_version", "$", int)
    if version != SCHEMA_VERSION:
        raise SceneError("$.schema_version", f"unsupported version {version}")
    statics = []
    for i, s in enumerate(_req(doc, "statics", "$", list)):
        try:
            statics.append(ConvexSolid.from_dict(s))
        except (KeyError, ValueError, TypeError) as exc:
            raise SceneError(f"$.statics[{i}]", f"bad solid: {exc}") from exc
    objects = [_object_in(o, f"$.objects[{i}]") for i, o in enumerate(_req(doc, "objects", "$", list))]
    scene = Scene(statics, objects, float(_req(doc, "floor_z", "$", (int, float))),
                  _pose_in(_req(doc, "camera", "$", list), "$.camera"),
                  str(doc.get("scene_id", "scene")))
    validate_scene(scene)
    instances = []
    for i, rec in enumerate(doc.get("instances", [])):
        path = f"$.instances[{i}]"
        target = _req(rec, "target", path, int)
        if not 0 <= target < len(objects):
            raise SceneError(f"{path}.target", "target index out of range")
        split = _req(rec, "split", path, str)
        if split not in SPLITS:
            raise SceneError(f"{path}.split", f"unknown split {split!r}")
        wps = tuple(_pose_in(w, f"{path}.waypoints[{k}]") for k, w in enumerate(_req(rec, "waypoints", path, list)))
        try:
            traj = WaypointTrajectory(wps, np.array(_req(rec, "opening_fractions", path, list), dtype=float))
        except ValueError as exc:
            raise SceneError(path, f"invariant violated: {exc}") from exc
        ref = generate_waypoints(objects[target], len(wps))
        for k, (a, b) in enumerate(zip(ref.waypoints, wps)):
            e = pose_error(a, b)
            if e.translational > 1e-9 or e.rotational > 1e-9:
                raise SceneError(f"{path}.waypoints[{k}]", "invariant violated: waypoint does not match the object articulation")
        instances.append(ProblemInstance(scene, target, traj, _req(rec, "instance_id", path, str), split))
    return scene, instances


def load_scene(data: bytes | str) -> Scene:
    return load_scene_document(data)[0]


def validate_scene(scene: Scene):
    for i, s in enumerate(scene.statics):
        if s.vertices[:, 2].min() < scene.floor_z - 1e-6:
            raise SceneError(f"$.statics[{i}]", "invariant violated: solid extends below the floor")
    for k, o in enumerate(scene.objects):
        for s in o.closed_solids():
            if s.vertices[:, 2].min() < scene.floor_z - 1e-6:
                raise SceneError(f"$.objects[{k}]", "invariant violated: object extends below the floor")
            for i, st in enumerate(scene.statics):
                if solids_overlap(s, st):
                    raise SceneError(f"$.objects[{k}]",
                                     f"invariant violated: closed geometry intersects statics[{i}]")


# ---------------------------------------------------------------------------
# visibility


def face_samples(solid: ConvexSolid, spacing=SENSE_SPACING):
    """Sample points on every face at a fixed grid, with the face's outward normal."""
    planes = solid.planes()
    pts, normals = [], []
    for f, pl in zip(solid.faces, planes):
        P = solid.vertices[list(f)]
        n = pl[:3]
        e0 = P[1] - P[0]
        e0 /= np.linalg.norm(e0)
        e1 = np.cross(n, e0)
        uv = np.column_stack([(P - P[0]) @ e0, (P - P[0]) @ e1])
        lo, hi = uv.min(axis=0), uv.max(axis=0)
        nu = max(int(math.ceil((hi[0] - lo[0]) / spacing)), 1) + 1
        nv = max(int(math.ceil((hi[1] - lo[1]) / spacing)), 1) + 1
        gu, gv = np.meshgrid(np.linspace(lo[0], hi[0], nu), np.linspace(lo[1], hi[1], nv))
        G = np.column_stack([gu.ravel(), gv.ravel()])
        inside = np.ones(len(G), dtype=bool)
        m = len(uv)
        for i in range(m):
            a, b = uv[i], uv[(i + 1) % m]
            cross = (b[0] - a[0]) * (G[:, 1] - a[1]) - (b[1] - a[1]) * (G[:, 0] - a[0])
            inside &= cross >= -1e-12
        G = np.vstack([G[inside], uv])
        X = P[0] + G[:, :1] * e0 + G[:, 1:] * e1
        pts.append(X)
        normals.append(np.repeat(n[None], len(X), axis=0))
    return np.vstack(pts), np.vstack(normals)


def segments_blocked(cam, pts, solid: ConvexSolid, eps=1e-9):
    """Whether each segment cam->pts passes through the solid's interior."""
    P = solid.planes()
    d = pts - cam
    num = P[:, 3][None, :] - cam @ P[:, :3].T          # (1, F)
    den = d @ P[:, :3].T                               # (N, F)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    t0 = np.where(den < 0, t, -np.inf).max(axis=1)
    t1 = np.where(den > 0, t, np.inf).min(axis=1)
    parallel_out = ((np.abs(den) < 1e-15) & (num < 0)).any(axis=1)
    t0 = np.maximum(t0, 0.0)
    t1 = np.minimum(t1, 1.0)
    length = np.linalg.norm(d, axis=1)
    return (~parallel_out) & (t1 - t0 > eps / np.maximum(length, 1e-12))


def sensed_geometry(scene: Scene, camera: Pose):
    """Statics with at least one face sample directly visible from the camera."""
    cam = camera.position
    occluders = list(scene.statics) + [s for o in scene.objects for s in o.closed_solids()]
    for s in occluders:
        if s.contains(cam, tol=-1e-9):
            raise ValueError("camera lies inside a solid")
    sensed = []
    for i, s in enumerate(scene.statics):
        pts, nrm = face_samples(s)
        visible = np.einsum("ij,ij->i", cam - pts, nrm) > 0
        for j, o in enumerate(occluders):
            if j == i or not visible.any():
                continue
            idx = np.flatnonzero(visible)
            visible[idx[segments_blocked(cam, pts[idx], o)]] = False
        if visible.any():
            sensed.append(s)
    return sensed


# ---------------------------------------------------------------------------
# procedural generator


@dataclass
class GeneratorConfig:
    counts: dict = field(default_factory=lambda: {"prismatic": 10})
    handle_height: tuple = (0.3, 1.3)
    clutter_density: float = 0.0     # boxes per square metre of the floor region in front
    lids: int = 0                    # extra hinge_top objects with a half-ellipse lid profile
    split_fractions: tuple = (0.6, 0.1, 0.3)
    n_waypoints: int = 10

    def validate(self):
        for k, v in self.counts.items():
            if k not in KINDS:
                raise ValueError(f"unknown kind {k!r} in counts")
            if int(v) < 0:
                raise ValueError(f"negative count for {k}")
        lo, hi = self.handle_height
        if not 0.05 <= lo <= hi:
            raise ValueError("handle_height range must satisfy 0.05 <= lo <= hi")
        if self.clutter_density < 0:
            raise ValueError("clutter_density must be non-negative")
        if self.lids < 0:
            raise ValueError("lids must be non-negative")
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions) \
                or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split_fractions must be three non-negative numbers summing to 1")
        if self.n_waypoints < 2:
            raise ValueError("n_waypoints must be at least 2")


def _face_frame(yaw, normal_up=False):
    """Face rotation with outward normal at heading ``yaw`` (or +z for lids)."""
    n = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    if normal_up:
        v = -n                       # lid: "up" along the face points to the back
        n = np.array([0.0, 0.0, 1.0])
    else:
        v = np.array([0.0, 0.0, 1.0])
    u = np.cross(v, n)
    return np.column_stack([u, v, n])


_GAP = 0.02   # clearance between a closed face slab and its carcass


def _box_in_frame(R, origin, lo, hi):
    """Box given by local bounds [lo, hi] in the frame (R, origin)."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    c = origin + R @ (0.5 * (lo + hi))
    return ConvexSolid.box(Pose.from_matrix(R, c), 0.5 * (hi - lo))


def _layout(kind, rng, h, lid=False):
    """One object and its furniture in a local frame with the face normal along +x."""
    R = _face_frame(0.0)
    t = 0.02
    statics = []
    if lid:
        W, D = rng.uniform(0.35, 0.45), rng.uniform(0.4, 0.5)
        top = h
        Rf = _face_frame(0.0, normal_up=True)
        # bowl/base under the lid; the lid face lies on top of it
        center = np.array([-0.5 * D - 0.05, 0.0, top])
        statics.append(_box_in_frame(np.eye(3), np.zeros(3), [-D - 0.1, -0.5 * W, 0.0],
                                     [-0.05, 0.5 * W, top - t - _GAP]))
        statics.append(_box_in_frame(np.eye(3), np.zeros(3), [-D - 0.35, -0.5 * W, 0.0],
                                     [-D - 0.15, 0.5 * W, top + 0.4]))   # cistern behind the hinge
        prof = half_ellipse_profile(W, D)
        obj = make_object("hinge_top", Pose.from_matrix(Rf, center), W, D,
                          handle_uv=(0.0, -0.5 * D + 0.04), lid_profile=prof)
        return obj, statics
    if kind == "prismatic":
        W, H = rng.uniform(0.35, 0.6), rng.uniform(0.15, 0.3)
        zc = h
    elif kind in ("hinge_left", "hinge_right"):
        W, H = rng.uniform(0.3, 0.5), rng.uniform(0.4, 0.7)
        zc = h
    elif kind == "hinge_bottom":
        W, H = rng.uniform(0.4, 0.6), rng.uniform(0.3, 0.5)
        zc = h - (0.5 * H - 0.06)
    else:
        W, H = rng.uniform(0.35, 0.6), rng.uniform(0.3, 0.45)
        zc = h + (0.5 * H - 0.06)
    if zc - 0.5 * H < 0.03:
        H = 2 * (zc - 0.03) if kind in ("prismatic", "hinge_left", "hinge_right") else H
        zc = max(zc, 0.5 * H + 0.03)
    obj = make_object(kind, Pose.from_matrix(R, [0.0, 0.0, zc]), W, H)
    depth = rng.uniform(0.45, 0.65)
    left = 0.5 * W + rng.uniform(0.0, 0.6)
    right = 0.5 * W + rng.uniform(0.0, 0.6)
    back = -t - _GAP
    bottom = zc - 0.5 * H
    top = zc + 0.5 * H
    wall = kind != "prismatic" and bottom > 1.0
    if wall:
        # wall cabinet over a counter
        statics.append(_box_in_frame(np.eye(3), np.zeros(3), [back - depth, -right, bottom - 0.03],
                                     [back, left, top + rng.uniform(0.02, 0.2)]))
        ch = rng.uniform(0.85, 0.95)
        if ch < bottom - 0.3:
            statics.append(_box_in_frame(np.eye(3), np.zeros(3), [back - depth, -right - 0.3, 0.0],
                                         [back + rng.uniform(0.15, 0.3), left + 0.3, ch]))
    else:
        statics.append(_box_in_frame(np.eye(3), np.zeros(3), [back - depth, -right, 0.0],
                                     [back, left, top + rng.uniform(0.03, 0.35)]))
    return obj, statics


def _yaw_matrix(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _compose_src(T: Pose, pose_list):
    from .geom import compose

    return compose(T, Pose.from_list(pose_list))


def _swept(obj, n=6):
    return [s for f in np.linspace(0.0, 1.0, n) for s in object_geometry_at(obj, float(f))]


def _clutter(rng, obj, statics, density, cam):
    """Random boxes on the floor in front of the object, avoiding its swept face."""
    n_axis = obj.normal if abs(obj.normal[2]) < 0.5 else -obj.v
    n_axis = n_axis / np.linalg.norm(n_axis)
    lat = np.array([-n_axis[1], n_axis[0], 0.0])
    area = 2.0 * 3.0
    count = int(round(density * area))
    origin = np.array([obj.handle.position[0], obj.handle.position[1], 0.0])
    swept = _swept(obj)
    boxes = []
    for _ in range(count):
        for _try in range(50):
            a = rng.uniform(0.15, 2.0)
            b = rng.uniform(-1.5, 1.5)
            sx, sy, sz = rng.uniform(0.08, 0.25), rng.uniform(0.08, 0.25), rng.uniform(0.1, 0.6)
            c = origin + a * n_axis + b * lat + np.array([0, 0, sz])
            R = _yaw_matrix(rng.uniform(-math.pi, math.pi))
            box = ConvexSolid.box(Pose.from_matrix(R, c), (sx, sy, sz))
            if box.contains(cam, tol=0.05):
                continue
            if any(solids_overlap(box, s) for s in swept):
                continue
            if any(solids_overlap(box, s) for s in statics + boxes):
                continue
            boxes.append(box)
            break
    return boxes


def _look_at(cam, target):
    z = target - cam
    z /= np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    return Pose.from_matrix(np.column_stack([x, np.cross(z, x), z]), cam)


def camera_for(obj: ArticulatedObject) -> Pose:
    cam = obj.handle.position + CAMERA_STANDOFF * obj.normal
    return _look_at(cam, obj.handle.position)


def make_scene(kind, rng, h, clutter_density, scene_id, lid=False):
    obj_l, st_l = _layout(kind, rng, h, lid=lid)
    yaw = rng.uniform(-math.pi, math.pi)
    offset = np.array([rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0])
    T = Pose.from_matrix(_yaw_matrix(yaw), offset)
    from .artic import transform_object

    obj = transform_object(obj_l, T)
    statics = [ConvexSolid.box(_compose_src(T, s.source["pose"]), s.source["half_extents"]) for s in st_l]
    cam = camera_for(obj)
    statics = statics + _clutter(rng, obj, statics, clutter_density, cam.position)
    return Scene(statics, [obj], 0.0, cam, scene_id)


def generate_instances(seed: int, params: GeneratorConfig):
    """Deterministic list of problem instances; splits are drawn per scene."""
    params.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE4E]))
    jobs = []
    for kind in KINDS:
        jobs += [(kind, False)] * int(params.counts.get(kind, 0))
    jobs += [("hinge_top", True)] * int(params.lids)
    lo, hi = params.handle_height
    scenes = []
    for idx, (kind, lid) in enumerate(jobs):
        h = float(rng.uniform(lo, hi))
        sid = f"s{seed}-{idx:04d}"
        scenes.append(make_scene(kind, rng, h, params.clutter_density, sid, lid=lid))
    # splits: stratified by family, assigned per scene
    split_of = {}
    fam = {}
    for (kind, lid), sc in zip(jobs, scenes):
        fam.setdefault((kind, lid), []).append(sc.scene_id)
    for key in sorted(fam):
        ids = fam[key]
        order = rng.permutation(len(ids))
        n = len(ids)
        n_train = int(round(params.split_fractions[0] * n))
        n_val = int(round(params.split_fractions[1] * n))
        for rank, i in enumerate(order):
            split_of[ids[i]] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    out = []
    for sc in scenes:
        for k, o in enumerate(sc.objects):
            out.append(ProblemInstance(sc, k, generate_waypoints(o, params.n_waypoints),
                                       f"{sc.scene_id}-o{k}", split_of[sc.scene_id]))
    return out


def scenes_of(instances):
    """Unique scenes with their instances, in first-seen order."""
    seen = {}
    for inst in instances:
        seen.setdefault(id(inst.scene), (inst.scene, []))[1].append(inst)
    return list(seen.values())


__all__ = ["GeneratorConfig", "ProblemInstance", "Scene", "SceneError", "camera_for",
           "generate_instances", "load_scene", "load_scene_document", "save_scene",
           "sensed_geometry", "solids_overlap", "quat_from_matrix"]

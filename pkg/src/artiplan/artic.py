"""Articulated objects: waypoint generation and time-varying face geometry.

A face is a rectangle with local axes u (width), v (height, "up" along the
face) and outward normal n. The slab occupies depth [-thickness, 0] behind
the face plane. Hinges turn about one face edge, swinging the face outward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kin
from .geom import Pose, compose, rotate_about_line

KINDS = ("prismatic", "hinge_left", "hinge_right", "hinge_top", "hinge_bottom")
VERTICAL_HINGES = ("hinge_left", "hinge_right")
HORIZONTAL_HINGES = ("hinge_top", "hinge_bottom")
DEFAULT_EXTENT = {"prismatic": 0.30, "hinge_left": math.pi / 2, "hinge_right": math.pi / 2,
                  "hinge_top": math.pi / 2, "hinge_bottom": math.pi / 2}
_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ConvexSolid:
    """Convex polytope: vertices plus face loops ordered CCW about the outward normal."""
    vertices: np.ndarray
    faces: tuple
    source: dict | None = None   # constructor parameters, used for serialization

    @classmethod
    def box(cls, pose: Pose, half_extents):
        hx, hy, hz = (float(h) for h in half_extents)
        corners = np.array([[sx * hx, sy * hy, sz * hz]
                            for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)])
        faces = ((0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5))
        src = {"type": "box", "pose": pose.to_list(), "half_extents": [hx, hy, hz]}
        return cls(corners @ pose.rotation.T + pose.position, faces, src)

    @classmethod
    def prism(cls, pose: Pose, polygon, z0, z1):
        """Extrusion of a convex CCW polygon (local xy) over local z in [z0, z1]."""
        poly = np.asarray(polygon, dtype=float)
        m = len(poly)
        bottom = np.column_stack([poly, np.full(m, z0)])
        top = np.column_stack([poly, np.full(m, z1)])
        verts = np.vstack([bottom, top])
        faces = [tuple(range(m - 1, -1, -1)), tuple(range(m, 2 * m))]
        for i in range(m):
            j = (i + 1) % m
            faces.append((i, j, m + j, m + i))
        src = {"type": "prism", "pose": pose.to_list(), "polygon": poly.tolist(),
               "z0": float(z0), "z1": float(z1)}
        return cls(verts @ pose.rotation.T + pose.position, tuple(faces), src)

    def transformed(self, R, t):
        return ConvexSolid(self.vertices @ np.asarray(R).T + t, self.faces)

    def planes(self):
        """Outward unit normals and offsets, n . x <= d inside."""
        out = []
        for f in self.faces:
            P = self.vertices[list(f)]
            c = P.mean(axis=0)
            n = np.zeros(3)
            for i in range(len(f)):
                n += np.cross(P[i] - c, P[(i + 1) % len(f)] - c)
            n /= np.linalg.norm(n)
            out.append(np.concatenate([n, [n @ c]]))
        return np.array(out)

    def edges(self):
        es = set()
        for f in self.faces:
            for i in range(len(f)):
                a, b = f[i], f[(i + 1) % len(f)]
                es.add((min(a, b), max(a, b)))
        return np.array(sorted(es), dtype=np.int64)

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, x, tol=0.0):
        P = self.planes()
        return bool(np.all(P[:, :3] @ np.asarray(x) - P[:, 3] <= tol))

    def to_dict(self):
        if self.source is not None:
            return dict(self.source)
        return {"type": "polytope", "vertices": self.vertices.tolist(),
                "faces": [list(f) for f in self.faces]}

    @classmethod
    def from_dict(cls, d):
        t = d["type"]
        if t == "box":
            return cls.box(Pose.from_list(d["pose"]), d["half_extents"])
        if t == "prism":
            return cls.prism(Pose.from_list(d["pose"]), d["polygon"], d["z0"], d["z1"])
        if t == "polytope":
            return cls(np.array(d["vertices"], dtype=float), tuple(tuple(int(i) for i in f) for f in d["faces"]))
        raise ValueError(f"unknown solid type {t!r}")


@dataclass(frozen=True, eq=False)
class ArticulatedObject:
    kind: str
    face_center: Pose          # local x = u (width), y = v (height), z = outward normal
    width: float
    height: float
    handle: Pose               # grasp pose on the face plane
    opening_extent: float
    face_thickness: float = 0.02
    lid_profile: np.ndarray | None = None   # convex CCW polygon in face (u, v) coordinates
    axis_point: np.ndarray | None = None
    axis_dir: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown articulation kind {self.kind!r}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("degenerate face: width and height must be positive")
        if not self.opening_extent > 0:
            raise ValueError("opening_extent must be positive")
        off = (self.handle.position - self.face_center.position) @ self.normal
        if abs(off) > _TOL:
            raise ValueError(f"handle lies {off:.3g} m off the face plane")
        if self.kind != "prismatic":
            if self.axis_point is None or self.axis_dir is None:
                c, d = self.edge_axis()
                object.__setattr__(self, "axis_point", c)
                object.__setattr__(self, "axis_dir", d)
            else:
                object.__setattr__(self, "axis_point", np.asarray(self.axis_point, dtype=float))
                d = np.asarray(self.axis_dir, dtype=float)
                object.__setattr__(self, "axis_dir", d / np.linalg.norm(d))
                self._check_axis_on_edge()
        if self.lid_profile is not None:
            object.__setattr__(self, "lid_profile", np.asarray(self.lid_profile, dtype=float))

    @property
    def u(self):
        return self.face_center.rotation[:, 0]

    @property
    def v(self):
        return self.face_center.rotation[:, 1]

    @property
    def normal(self):
        return self.face_center.rotation[:, 2]

    def edge_axis(self):
        """Hinge line on the named face edge, directed so positive angles open outward."""
        c0 = self.face_center.position
        if self.kind == "hinge_left":
            point, along, lever = c0 - 0.5 * self.width * self.u, self.v, self.u
        elif self.kind == "hinge_right":
            point, along, lever = c0 + 0.5 * self.width * self.u, self.v, -self.u
        elif self.kind == "hinge_top":
            point, along, lever = c0 + 0.5 * self.height * self.v, self.u, -self.v
        else:
            point, along, lever = c0 - 0.5 * self.height * self.v, self.u, self.v
        d = along if np.cross(along, lever) @ self.normal > 0 else -along
        return point.copy(), d.copy()

    def _check_axis_on_edge(self):
        c, d = self.edge_axis()
        if abs(abs(float(d @ self.axis_dir)) - 1.0) > _TOL:
            raise ValueError(f"hinge axis is not parallel to the {self.kind} face edge")
        off = self.axis_point - c
        off = off - (off @ d) * d
        if np.linalg.norm(off) > _TOL:
            raise ValueError(f"hinge axis does not lie on the {self.kind} face edge")
        # positive angle must open outward
        if float(d @ self.axis_dir) < 0:
            raise ValueError("hinge axis direction opens the face inward")

    @property
    def kernel_params(self):
        """(kind code, p0, R0, direction, axis point, extent) for the compiled kernels."""
        if "kp" not in self._cache:
            if self.kind == "prismatic":
                kp = (0, self.handle.position.copy(), self.handle.rotation, self.normal.copy(),
                      np.zeros(3), float(self.opening_extent))
            else:
                kp = (1, self.handle.position.copy(), self.handle.rotation, self.axis_dir.copy(),
                      self.axis_point.copy(), float(self.opening_extent))
            self._cache["kp"] = kp
        return self._cache["kp"]

    def articulation(self, fraction):
        """Rigid map (R, t) carrying closed-state geometry to the given opening."""
        if self.kind == "prismatic":
            return np.eye(3), float(fraction) * self.opening_extent * self.normal
        R = _kin.axis_angle_matrix(self.axis_dir, float(fraction) * self.opening_extent)
        return R, self.axis_point - R @ self.axis_point

    def closed_solids(self):
        if "solids" not in self._cache:
            t = self.face_thickness
            if self.lid_profile is None:
                back = Pose(self.face_center.position - 0.5 * t * self.normal, self.face_center.orientation)
                solid = ConvexSolid.box(back, (0.5 * self.width, 0.5 * self.height, 0.5 * t))
            else:
                solid = ConvexSolid.prism(self.face_center, self.lid_profile, -t, 0.0)
            self._cache["solids"] = [solid]
        return self._cache["solids"]


def grasp_orientation(obj_kind, u, v, n):
    """Approach axis into the face; fingers close across the hinge axis."""
    z = -np.asarray(n, dtype=float)
    y = np.asarray(v if obj_kind in HORIZONTAL_HINGES else u, dtype=float)
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


@dataclass(frozen=True, eq=False)
class WaypointTrajectory:
    waypoints: tuple
    opening_fractions: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.opening_fractions, dtype=float)
        if len(f) != len(self.waypoints):
            raise ValueError("one opening fraction per waypoint required")
        if len(f) >= 2 and (f[0] != 0.0 or f[-1] != 1.0 or np.any(np.diff(f) <= 0)):
            raise ValueError("opening fractions must increase strictly from 0 to 1")
        object.__setattr__(self, "opening_fractions", f)

    def __len__(self):
        return len(self.waypoints)

    def arrays(self):
        """Stacked rotations (T, 3, 3) and positions (T, 3)."""
        return (np.array([w.rotation for w in self.waypoints]),
                np.array([w.position for w in self.waypoints]))


def constraint_pose_at(obj: ArticulatedObject, fraction: float) -> Pose:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 0.0:
        return obj.handle
    if obj.kind == "prismatic":
        return Pose(obj.handle.position + (fraction * obj.opening_extent) * obj.normal,
                    obj.handle.orientation)
    return rotate_about_line(obj.handle, obj.axis_point, obj.axis_dir, fraction * obj.opening_extent)


def generate_waypoints(obj: ArticulatedObject, T: int = 10) -> WaypointTrajectory:
    if T < 2:
        raise ValueError("need at least two waypoints")
    fr = np.array([k / (T - 1) for k in range(T)])
    return WaypointTrajectory(tuple(constraint_pose_at(obj, float(f)) for f in fr), fr)


def object_geometry_at(obj: ArticulatedObject, fraction: float):
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    solids = obj.closed_solids()
    if fraction == 0.0:
        return list(solids)
    R, t = obj.articulation(fraction)
    return [s.transformed(R, t) for s in solids]


def half_ellipse_profile(width, depth, n=8):
    """Convex n-gon approximating a half ellipse whose flat side lies on v = +depth/2.

    Used for lids hinged along their back (top) edge.
    """
    a, b = 0.5 * width, depth
    ang = np.linspace(math.pi, 2 * math.pi, n)
    pts = np.column_stack([a * np.cos(ang), 0.5 * depth + b * np.sin(ang)])
    return pts


def make_object(kind, face_center: Pose, width, height, handle_uv=None, extent=None,
                thickness=0.02, lid_profile=None):
    """Build an object with the grasp convention applied at the handle."""
    R = face_center.rotation
    u, v, n = R[:, 0], R[:, 1], R[:, 2]
    if handle_uv is None:
        handle_uv = default_handle_uv(kind, width, height)
    hp = face_center.position + handle_uv[0] * u + handle_uv[1] * v
    handle = Pose.from_matrix(grasp_orientation(kind, u, v, n), hp)
    return ArticulatedObject(kind, face_center, float(width), float(height), handle,
                             float(DEFAULT_EXTENT[kind] if extent is None else extent),
                             thickness, lid_profile)


def default_handle_uv(kind, width, height, margin=0.06):
    if kind == "hinge_left":
        return (0.5 * width - margin, 0.0)
    if kind == "hinge_right":
        return (-0.5 * width + margin, 0.0)
    if kind == "hinge_top":
        return (0.0, -0.5 * height + margin)
    if kind == "hinge_bottom":
        return (0.0, 0.5 * height - margin)
    return (0.0, 0.0)


def transform_object(obj: ArticulatedObject, T: Pose) -> ArticulatedObject:
    """Rigidly move an object (used for equivariance checks)."""
    ap = None if obj.axis_point is None else T.transform_point(obj.axis_point)
    ad = None if obj.axis_dir is None else T.rotation @ obj.axis_dir
    return ArticulatedObject(obj.kind, compose(T, obj.face_center), obj.width, obj.height,
                             compose(T, obj.handle), obj.opening_extent, obj.face_thickness,
                             obj.lid_profile, ap, ad)

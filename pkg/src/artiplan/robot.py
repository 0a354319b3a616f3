"""7-DOF arm on a fixed base: description file, FK, Jacobian, link capsules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kin
from .geom import Pose, quat_to_matrix

ALLOWED_HEIGHTS = (0.25, 0.5, 1.0, 1.5)
N_JOINTS = 7


@dataclass(frozen=True)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float
    link: int = -1


@dataclass(frozen=True, eq=False)
class ArmModel:
    name: str
    joint_poses: tuple          # fixed parent-frame transform of each joint
    axes: np.ndarray            # (7, 3) rotation axis in the joint frame
    limits: np.ndarray          # (7, 2)
    flange: Pose
    link_frames: tuple          # frame index per link id (0 mount, 1..7 joints)
    link_names: tuple
    link_capsules: tuple        # per link: tuple of Capsule in the link frame
    pedestal_radius: float = 0.0
    disabled_pairs: frozenset = frozenset()
    grasp_link: int = -1
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if len(self.joint_poses) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} revolute joints, got {len(self.joint_poses)}")
        if np.any(self.limits[:, 0] >= self.limits[:, 1]):
            raise ValueError("joint limits must satisfy lo < hi")
        for caps in self.link_capsules:
            for c in caps:
                if c.radius <= 0:
                    raise ValueError("capsule radius must be positive")

    @property
    def n_links(self):
        return len(self.link_frames)

    @property
    def pedestal_link(self):
        return self.n_links if self.pedestal_radius > 0 else -1

    @property
    def km(self):
        """Kinematic arrays in the layout the compiled kernels expect."""
        if "km" not in self._arrays:
            jpos = np.array([p.position for p in self.joint_poses])
            jrot = np.array([p.rotation for p in self.joint_poses])
            self._arrays["km"] = (jpos, jrot, np.ascontiguousarray(self.axes, dtype=float),
                                  np.ascontiguousarray(self.limits, dtype=float),
                                  self.flange.position.copy(), self.flange.rotation)
        return self._arrays["km"]

    @property
    def capsule_arrays(self):
        """Flat capsule table: (frame, link, a, b, radius); pedestal appended last."""
        if "caps" not in self._arrays:
            frames, links, A, B, r = [], [], [], [], []
            for link, caps in enumerate(self.link_capsules):
                for c in caps:
                    frames.append(self.link_frames[link])
                    links.append(link)
                    A.append(c.a)
                    B.append(c.b)
                    r.append(c.radius)
            if self.pedestal_radius > 0:
                frames.append(-1)
                links.append(self.pedestal_link)
                A.append(np.zeros(3))
                B.append(np.zeros(3))
                r.append(self.pedestal_radius)
            self._arrays["caps"] = (np.array(frames, dtype=np.int64), np.array(links, dtype=np.int64),
                                    np.array(A, dtype=float), np.array(B, dtype=float),
                                    np.array(r, dtype=float))
        return self._arrays["caps"]

    @property
    def self_pairs(self):
        """Capsule index pairs tested for self collision."""
        if "pairs" not in self._arrays:
            _, links, _, _, _ = self.capsule_arrays
            pairs = []
            for i in range(len(links)):
                for j in range(i + 1, len(links)):
                    li, lj = int(links[i]), int(links[j])
                    if li == lj or (min(li, lj), max(li, lj)) in self.disabled_pairs:
                        continue
                    pairs.append((i, j))
            self._arrays["pairs"] = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        return self._arrays["pairs"]

    def reach(self):
        return float(_kin.reach_radius(self.km))


@dataclass(frozen=True, eq=False)
class JointConfig:
    angles: np.ndarray
    clamped: bool = False

    def __post_init__(self):
        a = np.array(self.angles, dtype=float).reshape(N_JOINTS)
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    @classmethod
    def within(cls, model: ArmModel, angles):
        """Clamp to the model's limits, recording whether clamping happened."""
        a = np.asarray(angles, dtype=float)
        c = np.clip(a, model.limits[:, 0], model.limits[:, 1])
        return cls(c, bool(np.any(c != a)))

    def __eq__(self, other):
        return isinstance(other, JointConfig) and np.array_equal(self.angles, other.angles)

    def __hash__(self):
        return hash(self.angles.tobytes())


@dataclass(frozen=True)
class BasePlacement:
    x: float
    y: float
    height: float
    yaw: float = 0.0

    def __post_init__(self):
        if not any(abs(self.height - h) < 1e-12 for h in ALLOWED_HEIGHTS):
            raise ValueError(f"base height {self.height} not in {ALLOWED_HEIGHTS}")

    @property
    def xy(self):
        return np.array([self.x, self.y])

    def frame(self):
        return _kin.base_frame(float(self.x), float(self.y), float(self.height), float(self.yaw))

    def to_list(self):
        return [float(self.x), float(self.y), float(self.height), float(self.yaw)]


def _floats(tokens):
    return [float(t) for t in tokens]


def parse_robot(text: str) -> ArmModel:
    joints, axes, limits = {}, {}, {}
    flange = None
    links = {}
    caps = {}
    pedestal = 0.0
    disabled = set()
    grasp = -1
    name = "arm"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        try:
            if key == "name":
                name = tok[1]
            elif key == "joint":
                i = int(tok[1])
                kv = {tok[k]: k for k in range(2, len(tok)) if tok[k] in ("xyz", "quat", "axis", "limits")}
                joints[i] = Pose(_floats(tok[kv["xyz"] + 1:kv["xyz"] + 4]),
                                 _floats(tok[kv["quat"] + 1:kv["quat"] + 5]))
                axes[i] = _floats(tok[kv["axis"] + 1:kv["axis"] + 4])
                limits[i] = _floats(tok[kv["limits"] + 1:kv["limits"] + 3])
            elif key == "flange":
                flange = Pose(_floats(tok[2:5]), _floats(tok[6:10]))
            elif key == "link":
                links[int(tok[1])] = (int(tok[2]), tok[3])
            elif key == "capsule":
                v = _floats(tok[2:9])
                caps.setdefault(int(tok[1]), []).append(
                    Capsule(np.array(v[1:4]), np.array(v[4:7]), v[0], int(tok[1])))
            elif key == "pedestal":
                pedestal = float(tok[1])
            elif key == "disable_pair":
                i, j = int(tok[1]), int(tok[2])
                disabled.add((min(i, j), max(i, j)))
            elif key == "grasp_link":
                grasp = int(tok[1])
            else:
                raise ValueError(f"unknown key {key!r}")
        except (IndexError, KeyError) as exc:
            raise ValueError(f"line {lineno}: malformed {key!r} entry") from exc
    if flange is None:
        raise ValueError("missing flange entry")
    order = sorted(joints)
    axes_arr = np.array([axes[i] for i in order], dtype=float)
    axes_arr /= np.linalg.norm(axes_arr, axis=1, keepdims=True)
    link_ids = sorted(links)
    if link_ids != list(range(len(link_ids))):
        raise ValueError("link ids must be contiguous from 0")
    pedestal_id = len(link_ids)
    # the pedestal sits below the mount and shoulder
    if pedestal > 0:
        for j in range(3):
            disabled.add((j, pedestal_id))
    return ArmModel(
        name=name,
        joint_poses=tuple(joints[i] for i in order),
        axes=axes_arr,
        limits=np.array([limits[i] for i in order], dtype=float),
        flange=flange,
        link_frames=tuple(links[i][0] for i in link_ids),
        link_names=tuple(links[i][1] for i in link_ids),
        link_capsules=tuple(tuple(caps.get(i, [])) for i in link_ids),
        pedestal_radius=pedestal,
        disabled_pairs=frozenset(disabled),
        grasp_link=grasp,
    )


def load_robot(path=None) -> ArmModel:
    if path is None:
        text = resources.files("artiplan").joinpath("data/panda.robot").read_text()
    else:
        text = Path(path).read_text()
    return parse_robot(text)


_DEFAULT = None


def default_model() -> ArmModel:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_robot()
    return _DEFAULT


def _angles(q):
    return np.ascontiguousarray(q.angles if isinstance(q, JointConfig) else q, dtype=float)


def forward_kinematics(model: ArmModel, base: BasePlacement, q) -> Pose:
    R0, p0 = base.frame()
    R, p = _kin.fk_ee(_angles(q), R0, p0, model.km)
    return Pose.from_matrix(R, p)


def jacobian(model: ArmModel, base: BasePlacement, q) -> np.ndarray:
    """Geometric 6x7 Jacobian of the grasp frame in the scene frame."""
    R0, p0 = base.frame()
    Rs, ps = _kin.fk_frames(_angles(q), R0, p0, model.km)
    return _kin.jacobian_from_frames(Rs, ps, model.km[2])


def joint_frames(model: ArmModel, base: BasePlacement, q):
    R0, p0 = base.frame()
    return _kin.fk_frames(_angles(q), R0, p0, model.km)


def world_capsules(model: ArmModel, base: BasePlacement, q):
    """World capsule endpoints as arrays (A, B, radius, link)."""
    R0, p0 = base.frame()
    Rs, ps = _kin.fk_frames(_angles(q), R0, p0, model.km)
    frames, links, A, B, r = model.capsule_arrays
    WA = np.empty_like(A)
    WB = np.empty_like(B)
    for k, f in enumerate(frames):
        if f < 0:
            top = p0 + R0 @ np.array([0.0, 0.0, -r[k]])
            WA[k] = top
            WB[k] = np.array([p0[0], p0[1], min(r[k] + 1e-3, top[2])])
        else:
            WA[k] = Rs[f] @ A[k] + ps[f]
            WB[k] = Rs[f] @ B[k] + ps[f]
    return WA, WB, r, links


def link_geometry(model: ArmModel, base: BasePlacement, q):
    """World-frame capsules of every link, pedestal included."""
    WA, WB, r, links = world_capsules(model, base, q)
    return [Capsule(WA[k], WB[k], float(r[k]), int(links[k])) for k in range(len(r))]


def random_config(model: ArmModel, rng) -> JointConfig:
    lo, hi = model.limits[:, 0], model.limits[:, 1]
    return JointConfig(rng.uniform(lo, hi))


def neutral_config(model: ArmModel) -> JointConfig:
    return JointConfig.within(model, [0.0, -math.pi / 4, 0.0, -3 * math.pi / 4, 0.0, math.pi / 2, math.pi / 4])


def ready_config(model: ArmModel) -> JointConfig:
    """Gripper level, about 0.5 m ahead of and 0.8 m above the base, well inside the limits."""
    return JointConfig.within(model, [-0.972, -0.786, 0.651, -2.009, 1.537, 2.713, -0.257])


def rotation_about(axis, angle):
    return _kin.axis_angle_matrix(np.asarray(axis, dtype=float), float(angle))


__all__ = [
    "ALLOWED_HEIGHTS", "ArmModel", "BasePlacement", "Capsule", "JointConfig",
    "default_model", "forward_kinematics", "jacobian", "link_geometry", "load_robot",
    "neutral_config", "parse_robot", "quat_to_matrix", "random_config", "ready_config",
]

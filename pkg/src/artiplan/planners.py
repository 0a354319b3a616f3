"""Comparison planners: unconstrained RRT-connect and a projection-based constrained RRT."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from . import _kin
from .artic import ArticulatedObject, WaypointTrajectory, constraint_pose_at
from .collide import CollisionWorld, sweep_index
from .ik import IkParams, solve_ik
from .robot import ArmModel, BasePlacement, JointConfig, forward_kinematics, random_config
from .seqik import nearest_fraction


@dataclass(frozen=True)
class PlannerParams:
    max_samples: int = 2000
    step_size: float | None = None      # rad; None -> RANGE_FRACTION of the joint-space diameter
    projection_tol: tuple = (0.01, 0.01)
    time_budget: float = 60.0
    seed: int = 0
    goal_bias: float = 0.1
    n_ik_inits: int = 10

    def __post_init__(self):
        if self.max_samples < 0:
            raise ValueError("max_samples must be non-negative")
        if (self.step_size is not None and self.step_size <= 0) or self.time_budget <= 0 \
                or min(self.projection_tol) <= 0:
            raise ValueError("step_size, time_budget and projection_tol must be positive")

    def step(self, model: ArmModel):
        if self.step_size is not None:
            return float(self.step_size)
        return RANGE_FRACTION * float(np.linalg.norm(model.limits[:, 1] - model.limits[:, 0]))


RANGE_FRACTION = 0.2


class PlanningFailure(Exception):
    pass


@dataclass
class PlannerResult:
    path: np.ndarray | None     # (K, 7) waypoint configs, endpoints exact
    samples: int
    reason: str = ""
    fractions: np.ndarray | None = None

    @property
    def success(self):
        return self.path is not None


def _dense(a, b, step=0.01):
    dense, _, _ = _kin.interpolate_kernel(np.ascontiguousarray(np.stack([a, b])), step)
    return dense


class EdgeChecker:
    """Collision predicate over joint-space segments after 0.01 rad interpolation.

    ``world.obj`` (if any) opens linearly between the two endpoint fractions.
    """

    def __init__(self, model: ArmModel, base: BasePlacement, world: CollisionWorld):
        self.model, self.base, self.world = model, base, world

    def state_free(self, q, fraction=0.0):
        d = np.ascontiguousarray(np.asarray(q, dtype=float).reshape(1, 7))
        return sweep_index(self.model, self.base, d, np.array([float(fraction)]), self.world) < 0

    def edge_free(self, a, b, fa=0.0, fb=0.0):
        d = _dense(a, b)
        sched = np.linspace(fa, fb, len(d)) if len(d) > 1 else np.array([fb])
        return sweep_index(self.model, self.base, d, sched, self.world) < 0


def _steer(a, b, step):
    d = b - a
    n = float(np.linalg.norm(d))
    return b.copy() if n <= step else a + d * (step / n)


class _Tree:
    def __init__(self, root, payload=0.0):
        self.nodes = [np.asarray(root, dtype=float)]
        self.parent = [-1]
        self.payload = [payload]
        self._arr = np.asarray(root, dtype=float)[None, :]

    def add(self, q, parent, payload=0.0):
        self.nodes.append(q)
        self.parent.append(parent)
        self.payload.append(payload)
        self._arr = np.vstack([self._arr, q[None, :]])
        return len(self.nodes) - 1

    def nearest(self, q):
        return int(np.argmin(np.sum((self._arr - q) ** 2, axis=1)))

    def branch(self, i):
        out = []
        while i >= 0:
            out.append(i)
            i = self.parent[i]
        return out[::-1]


def rrt_connect(model: ArmModel, start, goal, base: BasePlacement, checker: EdgeChecker,
                params: PlannerParams = PlannerParams()) -> PlannerResult:
    """Bidirectional RRT with greedy connect; joint limits bound the sampler."""
    qs = np.asarray(start.angles if isinstance(start, JointConfig) else start, dtype=float)
    qg = np.asarray(goal.angles if isinstance(goal, JointConfig) else goal, dtype=float)
    if not checker.state_free(qs) or not checker.state_free(qg):
        raise ValueError("start and goal must be collision free")
    if np.array_equal(qs, qg):
        return PlannerResult(qs[None, :].copy(), 0)
    rng = np.random.default_rng(params.seed)
    ta, tb = _Tree(qs), _Tree(qg)
    a_is_start = True
    t0 = time.perf_counter()
    for n in range(params.max_samples + 1):
        # first pass tries the straight connection
        q_rand = qg if n == 0 else random_config(model, rng).angles
        ia = _extend(ta, q_rand, params.step(model), checker)
        if ia is not None:
            ib = _connect(tb, ta.nodes[ia], params.step(model), checker)
            if ib is not None and np.array_equal(tb.nodes[ib], ta.nodes[ia]):
                pa = [ta.nodes[i] for i in ta.branch(ia)]
                pb = [tb.nodes[i] for i in tb.branch(ib)]
                path = np.array(pa + pb[::-1][1:])
                if not a_is_start:
                    path = path[::-1].copy()
                path[0], path[-1] = qs, qg
                return PlannerResult(path, n)
        ta, tb = tb, ta
        a_is_start = not a_is_start
        if time.perf_counter() - t0 > params.time_budget:
            return PlannerResult(None, n, "time budget exhausted")
    return PlannerResult(None, params.max_samples, "sample budget exhausted")


def _extend(tree: _Tree, q, step, checker):
    i = tree.nearest(q)
    qn = _steer(tree.nodes[i], q, step)
    if np.array_equal(qn, tree.nodes[i]) or not checker.edge_free(tree.nodes[i], qn):
        return None
    return tree.add(qn, i)


def _connect(tree: _Tree, q, step, checker):
    last = tree.nearest(q)
    if np.array_equal(tree.nodes[last], q):
        return last
    last = None
    while True:
        i = _extend(tree, q, step, checker)
        if i is None:
            return last
        last = i
        if np.array_equal(tree.nodes[i], q):
            return i


def ik_solutions(model: ArmModel, base: BasePlacement, target, n_inits: int, seed: int,
                 checker: EdgeChecker | None = None, fraction=0.0, ik_params=IkParams()):
    """Converged (and collision-free, if a checker is given) IK solutions from seeded inits."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_inits):
        res = solve_ik(model, base, target, random_config(model, rng), ik_params)
        if res.converged and (checker is None or checker.state_free(res.config.angles, fraction)):
            out.append(res.config.angles)
    return out


def endpoint_configs(model, base, waypoints: WaypointTrajectory, checker, params: PlannerParams,
                     ik_params=IkParams()):
    """First collision-free IK solution for the first and the last waypoint, or None."""
    s = ik_solutions(model, base, waypoints.waypoints[0], params.n_ik_inits, params.seed, checker, 0.0,
                     ik_params)
    g = ik_solutions(model, base, waypoints.waypoints[-1], params.n_ik_inits, params.seed + 1, checker, 1.0,
                     ik_params)
    if not s or not g:
        return None
    return s[0], g[0]


# ---------------------------------------------------------------------------
# constrained


def project_to_constraint(model: ArmModel, q, base: BasePlacement, obj: ArticulatedObject,
                          params: PlannerParams = PlannerParams(), ik_params=IkParams(max_iters=50)):
    """Closest constraint pose by opening fraction, then IK toward it from q.

    Returns (config, fraction) or None when the residual exceeds projection_tol.
    """
    q = np.asarray(q.angles if isinstance(q, JointConfig) else q, dtype=float)
    f = nearest_fraction(obj, forward_kinematics(model, base, q))
    res = solve_ik(model, base, constraint_pose_at(obj, f), q, ik_params)
    if res.residual.within(*params.projection_tol):
        return res.config.angles, f
    return None


def projected_rrt(model: ArmModel, start, goal, base: BasePlacement, obj: ArticulatedObject,
                  checker: EdgeChecker, params: PlannerParams = PlannerParams(),
                  ik_params=IkParams(max_iters=50)) -> PlannerResult:
    """Goal-biased RRT whose nodes are projected onto the constraint before insertion.

    A node may only extend toward larger (or equal) opening fractions, so every
    root-to-node path opens the object monotonically.
    """
    if params.max_samples == 0:
        return PlannerResult(None, 0, "sample budget exhausted")
    ps = project_to_constraint(model, start, base, obj, params, ik_params)
    pg = project_to_constraint(model, goal, base, obj, params, ik_params)
    if ps is None or pg is None:
        raise PlanningFailure("start or goal cannot be projected onto the constraint")
    qs, fs = ps
    qg, fg = pg
    rng = np.random.default_rng(params.seed)
    step = params.step(model)
    tree = _Tree(qs, fs)
    t0 = time.perf_counter()
    for n in range(1, params.max_samples + 1):
        q_rand = qg if rng.random() < params.goal_bias else random_config(model, rng).angles
        i = tree.nearest(q_rand)
        q_new = _steer(tree.nodes[i], q_rand, step)
        proj = project_to_constraint(model, q_new, base, obj, params, ik_params)
        if proj is not None:
            qp, fp = proj
            fi = tree.payload[i]
            if (fp >= fi and np.linalg.norm(qp - tree.nodes[i]) <= 2.0 * step
                    and checker.edge_free(tree.nodes[i], qp, fi, fp)):
                k = tree.add(qp, i, fp)
                if (np.linalg.norm(qg - qp) <= step and fg >= fp
                        and checker.edge_free(qp, qg, fp, fg)):
                    g = tree.add(qg, k, fg)
                    idx = tree.branch(g)
                    return PlannerResult(np.array([tree.nodes[j] for j in idx]), n, "",
                                         np.array([tree.payload[j] for j in idx]))
        if time.perf_counter() - t0 > params.time_budget:
            return PlannerResult(None, n, "time budget exhausted")
    return PlannerResult(None, params.max_samples, "sample budget exhausted")


def chained_rrt_connect(model, configs, base, checker, params: PlannerParams = PlannerParams()):
    """RRT-connect between consecutive configurations, concatenated."""
    parts = []
    total = 0
    for k in range(len(configs) - 1):
        res = rrt_connect(model, configs[k], configs[k + 1], base, checker,
                          dataclasses.replace(params, seed=params.seed + k))
        total += res.samples
        if not res.success:
            return PlannerResult(None, total, res.reason)
        parts.append(res.path if k == 0 else res.path[1:])
    return PlannerResult(np.concatenate(parts), total)

"""Sequential IK decoding of a strategy, interpolation, and feasibility evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kin, _pipeline
from .artic import ArticulatedObject, WaypointTrajectory
from .collide import CollisionReport, CollisionWorld, check_state, sweep_index
from .geom import PoseError, pose_error
from .ik import IkParams
from .robot import ArmModel, BasePlacement, JointConfig, forward_kinematics


@dataclass(frozen=True)
class Strategy:
    base: BasePlacement
    init: JointConfig
    index: int = -1     # canonical candidate index, -1 when not drawn from a grid


@dataclass(frozen=True, eq=False)
class JointTrajectory:
    base: BasePlacement
    configs: tuple
    decoded_from: Strategy | None = None
    iterations: tuple = ()

    @property
    def array(self):
        return np.array([c.angles for c in self.configs])

    def __len__(self):
        return len(self.configs)


class IkDivergence(Exception):
    def __init__(self, step, partial=None):
        super().__init__(f"IK did not converge at waypoint {step}")
        self.step = step
        self.partial = partial


@dataclass(frozen=True)
class FeasibilityParams:
    tol_goal_trans: float = 0.01
    tol_goal_rot: float = 0.01
    tol_dev_trans: float = 0.01
    tol_dev_rot: float = 0.01
    max_interp_step: float = 0.01

    @property
    def tols(self):
        return np.array([self.tol_goal_trans, self.tol_goal_rot, self.tol_dev_trans, self.tol_dev_rot])


@dataclass(frozen=True)
class FeasibilityReport:
    success: bool
    goal_error: PoseError | None
    max_deviation: PoseError | None
    collision: CollisionReport
    failed_stage: str
    collision_index: int | None = None


@dataclass
class StageCounters:
    """How often each evaluation stage actually ran."""
    decodes: int = 0
    goal_checks: int = 0
    deviation_checks: int = 0
    collision_checks: int = 0


COUNTERS = StageCounters()


def _waypoint_arrays(waypoints: WaypointTrajectory):
    Rt, pt = waypoints.arrays()
    return np.ascontiguousarray(Rt), np.ascontiguousarray(pt)


def seqik_decode(model: ArmModel, strategy: Strategy, waypoints: WaypointTrajectory,
                 ik_params: IkParams = IkParams()) -> JointTrajectory:
    """Raises IkDivergence at the first waypoint whose IK does not converge."""
    COUNTERS.decodes += 1
    R0, p0 = strategy.base.frame()
    Rt, pt = _waypoint_arrays(waypoints)
    configs, fail, iters, _ = _kin.seqik_kernel(np.ascontiguousarray(strategy.init.angles), R0, p0,
                                                Rt, pt, model.km, *ik_params.as_args())
    if fail >= 0:
        raise IkDivergence(int(fail), configs[:fail])
    return JointTrajectory(strategy.base, tuple(JointConfig(c) for c in configs), strategy,
                           tuple(int(i) for i in iters))


@dataclass(frozen=True, eq=False)
class DenseTrajectory:
    configs: np.ndarray     # (N, 7)
    segment: np.ndarray     # waypoint index t of each state
    fraction: np.ndarray    # position s in [0, 1) along segment t

    def __len__(self):
        return len(self.configs)


def interpolate(traj, max_step: float = 0.01) -> DenseTrajectory:
    """Linear joint-space interpolation so no joint moves more than max_step per state."""
    arr = traj.array if isinstance(traj, JointTrajectory) else np.asarray(traj, dtype=float)
    if len(arr) == 0:
        raise ValueError("empty trajectory")
    dense, seg, frac = _kin.interpolate_kernel(np.ascontiguousarray(arr), float(max_step))
    return DenseTrajectory(dense, seg, frac)


def opening_schedule(dense: DenseTrajectory, fractions) -> np.ndarray:
    return _pipeline.opening_schedule(dense.segment, dense.fraction, np.asarray(fractions, dtype=float))


def nearest_fraction(obj: ArticulatedObject, pose) -> float:
    """Opening fraction whose constraint pose is closest to ``pose`` (trans + 0.5 rot)."""
    okind, p0, R0, direction, axis_pt, extent = obj.kernel_params
    return float(_kin.nearest_fraction_kernel(pose.rotation, pose.position.copy(), okind, p0, R0,
                                              direction, axis_pt, extent, 41))


def nearest_deviations(model: ArmModel, base: BasePlacement, obj: ArticulatedObject, configs):
    """Per-state nearest opening fraction and (trans, rot) deviation to that constraint pose."""
    R0, p0 = base.frame()
    okind, kp0, kR0, direction, axis_pt, extent = obj.kernel_params
    return _kin.nearest_deviation_kernel(np.ascontiguousarray(configs, dtype=float), R0, p0, model.km,
                                         okind, kp0, kR0, direction, axis_pt, extent)


def evaluate(model: ArmModel, traj: JointTrajectory, waypoints: WaypointTrajectory,
             world: CollisionWorld, obj: ArticulatedObject | None = None,
             params: FeasibilityParams = FeasibilityParams(), deviation="matched") -> FeasibilityReport:
    """Goal, then deviation, then collision; the first failing stage is recorded.

    ``world`` carries either full or sensed statics. ``deviation="nearest"``
    measures deviation to the closest constraint pose instead of the pose at
    the interpolated opening fraction.
    """
    obj = world.obj if obj is None else obj
    if deviation == "nearest":
        return evaluate_path(model, traj.base, traj.array, waypoints, world, obj, params)
    if deviation != "matched":
        raise ValueError(f"unknown deviation mode {deviation!r}")
    if len(traj) != len(waypoints):
        raise ValueError("trajectory and waypoints differ in length")
    R0, p0 = traj.base.frame()
    Rt, pt = _waypoint_arrays(waypoints)
    okind, kp0, kR0, direction, axis_pt, extent = obj.kernel_params
    frames, links, A, B, r = model.capsule_arrays
    COUNTERS.goal_checks += 1
    stage, gt, gr, dt, dr, idx = _pipeline.evaluate_kernel(
        np.ascontiguousarray(traj.array), waypoints.opening_fractions, Rt[-1], pt[-1], R0, p0,
        model.km, okind, kp0, kR0, direction, axis_pt, extent, frames, links, A, B, r,
        model.self_pairs, world.static_pack, world.obj_pack, world.floor_z, model.grasp_link,
        params.tol_goal_trans, params.tol_goal_rot, params.tol_dev_trans, params.tol_dev_rot,
        params.max_interp_step, True)
    goal = PoseError(float(gt), float(gr))
    dev = PoseError(float(dt), float(dr))
    if stage == _pipeline.STAGE_GOAL:
        return FeasibilityReport(False, goal, dev, CollisionReport.clear(), "goal")
    COUNTERS.deviation_checks += 1
    if stage == _pipeline.STAGE_DEV:
        return FeasibilityReport(False, goal, dev, CollisionReport.clear(), "deviation")
    COUNTERS.collision_checks += 1
    if stage == _pipeline.STAGE_COLLISION:
        dense = interpolate(traj, params.max_interp_step)
        sched = opening_schedule(dense, waypoints.opening_fractions)
        rep = check_state(model, traj.base, dense.configs[idx], world, sched[idx])
        return FeasibilityReport(False, goal, dev, rep, "collision", int(idx))
    return FeasibilityReport(True, goal, dev, CollisionReport.clear(), "none")


def evaluate_path(model: ArmModel, base: BasePlacement, configs, waypoints: WaypointTrajectory,
                  world: CollisionWorld, obj: ArticulatedObject | None = None,
                  params: FeasibilityParams = FeasibilityParams()) -> FeasibilityReport:
    """Evaluate a joint path of any length, e.g. from a sampling planner.

    Deviation is measured to the nearest constraint pose; the object opens to
    the running maximum of those fractions during the collision sweep.
    """
    obj = world.obj if obj is None else obj
    configs = np.asarray(configs, dtype=float)
    goal = pose_error(forward_kinematics(model, base, configs[-1]), waypoints.waypoints[-1])
    dense = interpolate(configs, params.max_interp_step)
    frac, dev_arr = nearest_deviations(model, base, obj, dense.configs)
    dev = PoseError(float(dev_arr[:, 0].max()), float(dev_arr[:, 1].max()))
    if not goal.within(params.tol_goal_trans, params.tol_goal_rot):
        return FeasibilityReport(False, goal, dev, CollisionReport.clear(), "goal")
    if not dev.within(params.tol_dev_trans, params.tol_dev_rot):
        return FeasibilityReport(False, goal, dev, CollisionReport.clear(), "deviation")
    sched = np.clip(np.maximum.accumulate(frac), 0.0, 1.0)
    idx = sweep_index(model, base, dense.configs, sched, world)
    if idx >= 0:
        rep = check_state(model, base, dense.configs[idx], world, sched[idx])
        return FeasibilityReport(False, goal, dev, rep, "collision", int(idx))
    return FeasibilityReport(True, goal, dev, CollisionReport.clear(), "none")


@dataclass
class PlanOutcome:
    trajectory: JointTrajectory | None
    report: FeasibilityReport | None
    failed_stage: str
    divergence_step: int | None = None

    @property
    def success(self):
        return self.failed_stage == "none"


def plan_with_internal_check(model: ArmModel, strategy: Strategy, waypoints: WaypointTrajectory,
                             sensed_world: CollisionWorld, obj=None,
                             params: FeasibilityParams = FeasibilityParams(),
                             ik_params: IkParams = IkParams()) -> PlanOutcome:
    """Decode then evaluate against sensed geometry; the plan is kept only on success."""
    try:
        traj = seqik_decode(model, strategy, waypoints, ik_params)
    except IkDivergence as exc:
        return PlanOutcome(None, None, "ik_divergence", exc.step)
    rep = evaluate(model, traj, waypoints, sensed_world, obj, params)
    return PlanOutcome(traj if rep.success else None, rep, rep.failed_stage)


def trajectory_to_text(traj: JointTrajectory, max_step=0.01) -> str:
    """Plain-text export: base placement, T x 7 angles, then the dense interpolation."""
    lines = ["# joint trajectory (SI units: m, rad)",
             "base " + " ".join(repr(v) for v in traj.base.to_list()),
             f"waypoints {len(traj)}"]
    lines += [" ".join(repr(float(a)) for a in c.angles) for c in traj.configs]
    dense = interpolate(traj, max_step)
    lines.append(f"dense {len(dense)}")
    for q, t, s in zip(dense.configs, dense.segment, dense.fraction):
        lines.append(f"{int(t)} {float(s)!r} " + " ".join(repr(float(a)) for a in q))
    return "\n".join(lines) + "\n"


def trajectory_from_text(text: str) -> JointTrajectory:
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    base = BasePlacement(*[float(v) for v in rows[0].split()[1:5]])
    T = int(rows[1].split()[1])
    configs = tuple(JointConfig([float(v) for v in rows[2 + k].split()]) for k in range(T))
    return JointTrajectory(base, configs)

"""Damped least-squares inverse kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kin
from .geom import Pose, PoseError
from .robot import ALLOWED_HEIGHTS, ArmModel, BasePlacement, JointConfig


@dataclass(frozen=True)
class IkParams:
    damping: float = 1e-2
    max_iters: int = 100
    step_clamp: float = 0.2
    tol_trans: float = 1e-4
    tol_rot: float = 1e-4

    def __post_init__(self):
        if self.damping < 0 or self.max_iters < 1 or self.step_clamp <= 0:
            raise ValueError("invalid IK parameters")
        if self.tol_trans <= 0 or self.tol_rot <= 0:
            raise ValueError("IK tolerances must be positive")

    def as_args(self):
        return (float(self.damping), int(self.max_iters), float(self.step_clamp),
                float(self.tol_trans), float(self.tol_rot))


@dataclass(frozen=True)
class IkResult:
    config: JointConfig
    converged: bool
    iterations: int
    residual: PoseError


def solve_ik(model: ArmModel, base: BasePlacement, target: Pose, init,
             params: IkParams = IkParams()) -> IkResult:
    R0, p0 = base.frame()
    q0 = np.ascontiguousarray(init.angles if isinstance(init, JointConfig) else init, dtype=float)
    q, conv, it, et, er = _kin.solve_ik_kernel(q0, R0, p0, target.rotation, target.position.copy(),
                                               model.km, *params.as_args())
    return IkResult(JointConfig(q), bool(conv), int(it), PoseError(float(et), float(er)))


def facing_yaw(base_xy, handle_xy):
    d = np.asarray(handle_xy, dtype=float) - np.asarray(base_xy, dtype=float)
    return math.atan2(d[1], d[0])


def snap_height(h):
    return min(ALLOWED_HEIGHTS, key=lambda a: (abs(a - h), a))


def solve_ik_mobile(model: ArmModel, target: Pose, handle_xy, height, init_xy, init_q,
                    params: IkParams = IkParams(), max_iters=None):
    """IK over 7 joints plus the base xy (two prismatic virtual joints).

    The base keeps the given height; yaw is re-aimed at ``handle_xy`` after each
    step. Returns (BasePlacement, IkResult).
    """
    limits = model.km[3]
    Rt, pt = target.rotation, target.position.copy()
    q = np.clip(np.asarray(init_q, dtype=float), limits[:, 0], limits[:, 1])
    xy = np.asarray(init_xy, dtype=float).copy()
    iters = params.max_iters if max_iters is None else max_iters

    def evaluate(q, xy):
        yaw = facing_yaw(xy, handle_xy)
        R0, p0 = _kin.base_frame(xy[0], xy[1], height, yaw)
        Rs, ps = _kin.fk_frames(q, R0, p0, model.km)
        e = _kin.pose_err_vec(Rs[-1], ps[-1], Rt, pt)
        return Rs, ps, e

    Rs, ps, e = evaluate(q, xy)
    et, er = np.linalg.norm(e[:3]), np.linalg.norm(e[3:])
    lam = params.damping
    it = 0
    converged = et <= params.tol_trans and er <= params.tol_rot
    while not converged and it < iters:
        it += 1
        J = np.zeros((6, 9))
        J[:, :7] = _kin.jacobian_from_frames(Rs, ps, model.km[2])
        # base columns by central differences; yaw follows xy
        for k in range(2):
            h = np.zeros(2)
            h[k] = 1e-6
            J[:, 7 + k] = -(evaluate(q, xy + h)[2] - evaluate(q, xy - h)[2]) / 2e-6
        comb = et + _kin.ROT_WEIGHT * er
        accepted = False
        for _ in range(4):
            dx = _kin.dls_step(J, e, lam)
            dx = np.clip(dx, -params.step_clamp, params.step_clamp)
            qn = np.clip(q + dx[:7], limits[:, 0], limits[:, 1])
            xyn = xy + dx[7:]
            Rn, pn, en = evaluate(qn, xyn)
            ent, enr = np.linalg.norm(en[:3]), np.linalg.norm(en[3:])
            if ent + _kin.ROT_WEIGHT * enr < comb:
                q, xy, Rs, ps, e, et, er = qn, xyn, Rn, pn, en, ent, enr
                lam = max(lam * 0.5, _kin.LAMBDA_MIN)
                accepted = True
                break
            lam = min(lam * 2.0, _kin.LAMBDA_MAX)
        if not accepted:
            break
        converged = et <= params.tol_trans and er <= params.tol_rot
    base = BasePlacement(float(xy[0]), float(xy[1]), height, facing_yaw(xy, handle_xy))
    return base, IkResult(JointConfig(q), bool(converged), it, PoseError(float(et), float(er)))

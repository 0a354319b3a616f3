"""Compiled decode-and-evaluate pipeline shared by single plans and batch labeling."""

import numpy as np
from numba import njit

from . import _collide, _kin

STAGE_NONE, STAGE_IK, STAGE_GOAL, STAGE_DEV, STAGE_COLLISION = 0, 1, 2, 3, 4
STAGES = ("none", "ik_divergence", "goal", "deviation", "collision")


@njit(cache=True)
def opening_schedule(seg, frac, fractions):
    T = fractions.shape[0]
    out = np.empty(seg.shape[0])
    for k in range(seg.shape[0]):
        t = seg[k]
        if t >= T - 1:
            out[k] = fractions[T - 1]
        else:
            out[k] = fractions[t] + (fractions[t + 1] - fractions[t]) * frac[k]
    return out


@njit(cache=True)
def evaluate_kernel(configs, fractions, goal_R, goal_p, base_R, base_p, km, okind, p0, R0,
                    direction, axis_pt, extent, cap_frame, cap_link, cap_a, cap_b, cap_r,
                    pairs, statics, obj_closed, floor_z, grasp_link, tol_goal_t, tol_goal_r,
                    tol_dev_t, tol_dev_r, max_step, check_collision):
    """Stages goal -> deviation -> collision, stopping at the first failure.

    Returns (stage, goal_t, goal_r, dev_t, dev_r, collision_index).
    """
    T = configs.shape[0]
    Re, pe = _kin.fk_ee(configs[T - 1], base_R, base_p, km)
    d = pe - goal_p
    goal_t = np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    goal_r = _kin.rot_angle_between(Re, goal_R)
    dense, seg, frac = _kin.interpolate_kernel(configs, max_step)
    opening = opening_schedule(seg, frac, fractions)
    dev = _kin.deviation_kernel(dense, opening, base_R, base_p, km, okind, p0, R0, direction,
                                axis_pt, extent)
    dev_t = 0.0
    dev_r = 0.0
    for k in range(dev.shape[0]):
        if dev[k, 0] > dev_t:
            dev_t = dev[k, 0]
        if dev[k, 1] > dev_r:
            dev_r = dev[k, 1]
    if not (goal_t <= tol_goal_t and goal_r <= tol_goal_r):
        return STAGE_GOAL, goal_t, goal_r, dev_t, dev_r, -1
    if not (dev_t <= tol_dev_t and dev_r <= tol_dev_r):
        return STAGE_DEV, goal_t, goal_r, dev_t, dev_r, -1
    if not check_collision:
        return STAGE_NONE, goal_t, goal_r, dev_t, dev_r, -1
    idx = _collide.sweep_kernel(dense, opening, base_R, base_p, km, cap_frame, cap_link, cap_a,
                                cap_b, cap_r, pairs, statics, obj_closed, okind, direction,
                                axis_pt, extent, floor_z, grasp_link)
    if idx >= 0:
        return STAGE_COLLISION, goal_t, goal_r, dev_t, dev_r, idx
    return STAGE_NONE, goal_t, goal_r, dev_t, dev_r, -1


@njit(cache=True)
def decode_evaluate_batch(bases, inits, targets_R, targets_p, fractions, km, ik_args,
                          okind, p0, R0, direction, axis_pt, extent, cap_frame, cap_link,
                          cap_a, cap_b, cap_r, pairs, statics, obj_closed, floor_z, grasp_link,
                          tols, max_step):
    """Decode and evaluate candidate (base, init) pairs one after another.

    ``bases`` rows are (x, y, height, yaw). Returns per-candidate stage codes and
    the (goal_t, goal_r, dev_t, dev_r) evidence (NaN where not reached).
    """
    N = bases.shape[0]
    T = targets_p.shape[0]
    stages = np.empty(N, dtype=np.int64)
    evidence = np.full((N, 4), np.nan)
    damping, max_iters, step_clamp, tol_t, tol_r = ik_args
    for c in range(N):
        base_R, base_p = _kin.base_frame(bases[c, 0], bases[c, 1], bases[c, 2], bases[c, 3])
        configs, fail, iters, res = _kin.seqik_kernel(inits[c], base_R, base_p, targets_R, targets_p,
                                                      km, damping, max_iters, step_clamp, tol_t, tol_r)
        if fail >= 0:
            stages[c] = STAGE_IK
            continue
        st, gt, gr, dt, dr, idx = evaluate_kernel(
            configs, fractions, targets_R[T - 1], targets_p[T - 1], base_R, base_p, km, okind, p0, R0,
            direction, axis_pt, extent, cap_frame, cap_link, cap_a, cap_b, cap_r, pairs, statics,
            obj_closed, floor_z, grasp_link, tols[0], tols[1], tols[2], tols[3], max_step, True)
        stages[c] = st
        evidence[c, 0] = gt
        evidence[c, 1] = gr
        evidence[c, 2] = dt
        evidence[c, 3] = dr
    return stages, evidence

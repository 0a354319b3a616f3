"""Compiled kinematics kernels: forward kinematics, Jacobian, DLS IK, SeqIK.

Everything here works on plain arrays so the per-candidate loops used for
exhaustive labeling run without Python overhead. Results are computed one
candidate at a time, so they do not depend on how candidates are batched.

Kinematic model tuple ``km`` = (jpos, jrot, jaxis, limits, flange_p, flange_R).
"""

import math

import numpy as np
from numba import njit

ROT_WEIGHT = 0.5  # m/rad, rotational weight in the scalar step-acceptance residual
LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1e2


@njit(cache=True)
def axis_angle_matrix(a, ang):
    c = math.cos(ang)
    s = math.sin(ang)
    C = 1.0 - c
    x, y, z = a[0], a[1], a[2]
    R = np.empty((3, 3))
    R[0, 0] = c + x * x * C
    R[0, 1] = x * y * C - z * s
    R[0, 2] = x * z * C + y * s
    R[1, 0] = y * x * C + z * s
    R[1, 1] = c + y * y * C
    R[1, 2] = y * z * C - x * s
    R[2, 0] = z * x * C - y * s
    R[2, 1] = z * y * C + x * s
    R[2, 2] = c + z * z * C
    return R


@njit(cache=True)
def base_frame(x, y, height, yaw):
    R = np.zeros((3, 3))
    c = math.cos(yaw)
    s = math.sin(yaw)
    R[0, 0] = c
    R[0, 1] = -s
    R[1, 0] = s
    R[1, 1] = c
    R[2, 2] = 1.0
    p = np.empty(3)
    p[0] = x
    p[1] = y
    p[2] = height
    return R, p


@njit(cache=True)
def fk_frames(q, base_R, base_p, km):
    """World frames 0..7 (mount, joints 1..7) and the grasp frame at index 8."""
    jpos, jrot, jaxis, limits, fl_p, fl_R = km
    n = q.shape[0]
    Rs = np.empty((n + 2, 3, 3))
    ps = np.empty((n + 2, 3))
    Rs[0] = base_R
    ps[0] = base_p
    for i in range(n):
        Rp = Rs[i]
        ps[i + 1] = ps[i] + Rp @ jpos[i]
        Rs[i + 1] = (Rp @ jrot[i]) @ axis_angle_matrix(jaxis[i], q[i])
    ps[n + 1] = ps[n] + Rs[n] @ fl_p
    Rs[n + 1] = Rs[n] @ fl_R
    return Rs, ps


@njit(cache=True)
def fk_ee(q, base_R, base_p, km):
    Rs, ps = fk_frames(q, base_R, base_p, km)
    n = q.shape[0]
    return Rs[n + 1].copy(), ps[n + 1].copy()


@njit(cache=True)
def jacobian_from_frames(Rs, ps, jaxis):
    n = jaxis.shape[0]
    J = np.empty((6, n))
    pe = ps[n + 1]
    for i in range(n):
        a = Rs[i + 1] @ jaxis[i]
        r = pe - ps[i + 1]
        J[0, i] = a[1] * r[2] - a[2] * r[1]
        J[1, i] = a[2] * r[0] - a[0] * r[2]
        J[2, i] = a[0] * r[1] - a[1] * r[0]
        J[3, i] = a[0]
        J[4, i] = a[1]
        J[5, i] = a[2]
    return J


@njit(cache=True)
def rotvec(R):
    """Rotation vector of a rotation matrix, robust near 0 and pi."""
    v0 = R[2, 1] - R[1, 2]
    v1 = R[0, 2] - R[2, 0]
    v2 = R[1, 0] - R[0, 1]
    s = 0.5 * math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    ang = math.atan2(s, c)
    out = np.empty(3)
    if ang < 1e-12:
        out[0] = 0.5 * v0
        out[1] = 0.5 * v1
        out[2] = 0.5 * v2
        return out
    if ang < math.pi - 1e-6:
        k = ang / (2.0 * s)
        out[0] = v0 * k
        out[1] = v1 * k
        out[2] = v2 * k
        return out
    best = 0
    for i in range(3):
        if R[i, i] > R[best, best]:
            best = i
    bkk = 0.5 * (R[best, best] + 1.0)
    if bkk < 1e-300:
        bkk = 1e-300
    norm = math.sqrt(bkk)
    for i in range(3):
        out[i] = 0.5 * (R[i, best] + (1.0 if i == best else 0.0)) / norm
    if out[0] * v0 + out[1] * v1 + out[2] * v2 < 0:
        out *= -1.0
    out *= ang
    return out


@njit(cache=True)
def rot_angle_between(Ra, Rb):
    """Geodesic angle between two rotation matrices."""
    M = Ra.T @ Rb
    v0 = M[2, 1] - M[1, 2]
    v1 = M[0, 2] - M[2, 0]
    v2 = M[1, 0] - M[0, 1]
    s = 0.5 * math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    c = 0.5 * (M[0, 0] + M[1, 1] + M[2, 2] - 1.0)
    return math.atan2(s, c)


@njit(cache=True)
def pose_err_vec(R, p, Rt, pt):
    """Stacked (translation, rotation-vector) error taking (R, p) to (Rt, pt)."""
    e = np.empty(6)
    e[0] = pt[0] - p[0]
    e[1] = pt[1] - p[1]
    e[2] = pt[2] - p[2]
    w = rotvec(Rt @ R.T)
    e[3] = w[0]
    e[4] = w[1]
    e[5] = w[2]
    return e


@njit(cache=True)
def _err_norms(e):
    et = math.sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
    er = math.sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5])
    return et, er


@njit(cache=True)
def _chol_solve(A, b):
    n = A.shape[0]
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                L[i, i] = math.sqrt(s if s > 1e-300 else 1e-300)
            else:
                L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def dls_step(J, e, lam):
    m = J.shape[0]
    A = J @ J.T
    for i in range(m):
        A[i, i] += lam
    return J.T @ _chol_solve(A, e)


@njit(cache=True)
def solve_ik_kernel(q_init, base_R, base_p, Rt, pt, km, damping, max_iters,
                    step_clamp, tol_t, tol_r):
    """Damped least squares with adaptive damping and a monotone residual guard.

    Returns (q, converged, iterations, residual_trans, residual_rot).
    """
    limits = km[3]
    jaxis = km[2]
    n = q_init.shape[0]
    q = q_init.copy()
    for i in range(n):
        q[i] = min(max(q[i], limits[i, 0]), limits[i, 1])
    Rs, ps = fk_frames(q, base_R, base_p, km)
    e = pose_err_vec(Rs[n + 1], ps[n + 1], Rt, pt)
    et, er = _err_norms(e)
    lam = damping
    it = 0
    converged = et <= tol_t and er <= tol_r
    while not converged and it < max_iters:
        it += 1
        J = jacobian_from_frames(Rs, ps, jaxis)
        comb = et + ROT_WEIGHT * er
        accepted = False
        for _attempt in range(4):
            dq = dls_step(J, e, lam)
            qn = q.copy()
            for i in range(n):
                d = min(max(dq[i], -step_clamp), step_clamp)
                qn[i] = min(max(q[i] + d, limits[i, 0]), limits[i, 1])
            Rn, pn = fk_frames(qn, base_R, base_p, km)
            en = pose_err_vec(Rn[n + 1], pn[n + 1], Rt, pt)
            ent, enr = _err_norms(en)
            if ent + ROT_WEIGHT * enr < comb:
                q = qn
                Rs = Rn
                ps = pn
                e = en
                et = ent
                er = enr
                lam = max(lam * 0.5, LAMBDA_MIN)
                accepted = True
                break
            lam = min(lam * 2.0, LAMBDA_MAX)
        if not accepted:
            break
        converged = et <= tol_t and er <= tol_r
    return q, converged, it, et, er


@njit(cache=True)
def reach_radius(km):
    """Upper bound on the distance from the joint-1 origin to the grasp point."""
    jpos = km[0]
    r = 0.0
    for i in range(1, jpos.shape[0]):
        r += math.sqrt(jpos[i, 0] ** 2 + jpos[i, 1] ** 2 + jpos[i, 2] ** 2)
    fl = km[4]
    r += math.sqrt(fl[0] ** 2 + fl[1] ** 2 + fl[2] ** 2)
    return r


@njit(cache=True)
def seqik_kernel(q0, base_R, base_p, targets_R, targets_p, km, damping,
                 max_iters, step_clamp, tol_t, tol_r):
    """Warm-started per-waypoint IK.

    Returns (configs (T, 7), fail_step or -1, iterations (T,), residuals (T, 2)).
    Waypoints beyond the arm's reach bound cannot converge; they are reported
    as divergent without running the solver.
    """
    T = targets_p.shape[0]
    n = q0.shape[0]
    configs = np.zeros((T, n))
    iters = np.zeros(T, dtype=np.int64)
    res = np.zeros((T, 2))
    shoulder = base_p + base_R @ km[0][0]
    reach = reach_radius(km) + tol_t
    q = q0.copy()
    for t in range(T):
        d = targets_p[t] - shoulder
        if math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) > reach:
            return configs, t, iters, res
        q, conv, it, et, er = solve_ik_kernel(q, base_R, base_p, targets_R[t], targets_p[t], km,
                                              damping, max_iters, step_clamp, tol_t, tol_r)
        configs[t] = q
        iters[t] = it
        res[t, 0] = et
        res[t, 1] = er
        if not conv:
            return configs, t, iters, res
    return configs, -1, iters, res


@njit(cache=True)
def n_segments(qa, qb, max_step):
    dmax = 0.0
    for i in range(qa.shape[0]):
        d = abs(qb[i] - qa[i])
        if d > dmax:
            dmax = d
    if dmax == 0.0:
        return 1
    k = int(math.ceil(dmax / max_step - 1e-9))
    if k < 1:
        k = 1
    while True:
        ok = True
        prev = qa.copy()
        for j in range(1, k + 1):
            for i in range(qa.shape[0]):
                cur = qb[i] if j == k else qa[i] + (qb[i] - qa[i]) * (j / k)
                if abs(cur - prev[i]) > max_step:
                    ok = False
                prev[i] = cur
            if not ok:
                break
        if ok:
            return k
        k += 1


@njit(cache=True)
def interpolate_kernel(configs, max_step):
    """Dense states plus their (segment index, fraction within segment)."""
    T, n = configs.shape
    counts = np.empty(max(T - 1, 0), dtype=np.int64)
    total = 1
    for t in range(T - 1):
        counts[t] = n_segments(configs[t], configs[t + 1], max_step)
        total += counts[t]
    dense = np.empty((total, n))
    seg = np.empty(total, dtype=np.int64)
    frac = np.empty(total)
    k = 0
    for t in range(T - 1):
        m = counts[t]
        for j in range(m):
            s = j / m
            for i in range(n):
                dense[k, i] = configs[t, i] if j == 0 else configs[t, i] + (configs[t + 1, i] - configs[t, i]) * s
            seg[k] = t
            frac[k] = s
            k += 1
    dense[k] = configs[T - 1]
    seg[k] = T - 1
    frac[k] = 0.0
    return dense, seg, frac


@njit(cache=True)
def constraint_pose_kernel(f, okind, p0, R0, direction, axis_pt, extent):
    """Handle grasp pose at opening fraction f (okind 0 prismatic, 1 hinge)."""
    if okind == 0:
        return R0.copy(), p0 + (f * extent) * direction
    Rr = axis_angle_matrix(direction, f * extent)
    return Rr @ R0, axis_pt + Rr @ (p0 - axis_pt)


@njit(cache=True)
def deviation_kernel(dense, opening, base_R, base_p, km, okind, p0, R0, direction,
                     axis_pt, extent):
    """Per-state (translational, rotational) deviation from the constraint curve."""
    N = dense.shape[0]
    out = np.empty((N, 2))
    for k in range(N):
        Re, pe = fk_ee(dense[k], base_R, base_p, km)
        Rc, pc = constraint_pose_kernel(opening[k], okind, p0, R0, direction, axis_pt, extent)
        d = pe - pc
        out[k, 0] = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        out[k, 1] = rot_angle_between(Re, Rc)
    return out


@njit(cache=True)
def _curve_cost(f, Re, pe, okind, p0, R0, direction, axis_pt, extent):
    Rc, pc = constraint_pose_kernel(f, okind, p0, R0, direction, axis_pt, extent)
    d = pe - pc
    return math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + ROT_WEIGHT * rot_angle_between(Re, Rc)


@njit(cache=True)
def nearest_fraction_kernel(Re, pe, okind, p0, R0, direction, axis_pt, extent, coarse):
    """Opening fraction minimising trans + ROT_WEIGHT * rot error to the constraint curve.

    A coarse scan brackets the minimum, golden-section search refines it.
    """
    best_k = 0
    best = 1e300
    for k in range(coarse):
        c = _curve_cost(k / (coarse - 1), Re, pe, okind, p0, R0, direction, axis_pt, extent)
        if c < best:
            best = c
            best_k = k
    a = max(best_k - 1, 0) / (coarse - 1)
    b = min(best_k + 1, coarse - 1) / (coarse - 1)
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c1 = b - g * (b - a)
    c2 = a + g * (b - a)
    f1 = _curve_cost(c1, Re, pe, okind, p0, R0, direction, axis_pt, extent)
    f2 = _curve_cost(c2, Re, pe, okind, p0, R0, direction, axis_pt, extent)
    while b - a > 1e-10:
        if f1 < f2:
            b = c2
            c2 = c1
            f2 = f1
            c1 = b - g * (b - a)
            f1 = _curve_cost(c1, Re, pe, okind, p0, R0, direction, axis_pt, extent)
        else:
            a = c1
            c1 = c2
            f1 = f2
            c2 = a + g * (b - a)
            f2 = _curve_cost(c2, Re, pe, okind, p0, R0, direction, axis_pt, extent)
    f = 0.5 * (a + b)
    if _curve_cost(f, Re, pe, okind, p0, R0, direction, axis_pt, extent) > best:
        f = best_k / (coarse - 1)
    return f


@njit(cache=True)
def nearest_deviation_kernel(dense, base_R, base_p, km, okind, p0, R0, direction, axis_pt, extent):
    """Per-state nearest fraction and (translational, rotational) deviation to that pose."""
    N = dense.shape[0]
    frac = np.empty(N)
    out = np.empty((N, 2))
    for k in range(N):
        Re, pe = fk_ee(dense[k], base_R, base_p, km)
        f = nearest_fraction_kernel(Re, pe, okind, p0, R0, direction, axis_pt, extent, 41)
        Rc, pc = constraint_pose_kernel(f, okind, p0, R0, direction, axis_pt, extent)
        d = pe - pc
        frac[k] = f
        out[k, 0] = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        out[k, 1] = rot_angle_between(Re, Rc)
    return frac, out

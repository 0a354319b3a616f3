"""Compiled narrow-phase kernels for capsules against convex polytopes.

A packed polytope set is the tuple
    (verts, v_off, planes, f_off, loops, l_off, edges, e_off, aabb)
with per-solid slices given by the *_off arrays (faces index l_off, which is
per face, not per solid).
"""

import math

import numpy as np
from numba import njit

from . import _kin

NONE, SELF, OBJECT, STATIC = 0, 1, 2, 3
_PAR_EPS = 1e-14


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def seg_seg_dist(p1, q1, p2, q2):
    """Distance between segments [p1, q1] and [p2, q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1, d1)
    e = _dot(d2, d2)
    f = _dot(d2, r)
    if a <= _PAR_EPS and e <= _PAR_EPS:
        s = 0.0
        t = 0.0
    elif a <= _PAR_EPS:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = _dot(d1, r)
        if e <= _PAR_EPS:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = _dot(d1, d2)
            denom = a * e - b * b
            if denom > _PAR_EPS * a * e:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    dx = p1[0] + d1[0] * s - p2[0] - d2[0] * t
    dy = p1[1] + d1[1] * s - p2[1] - d2[1] * t
    dz = p1[2] + d1[2] * s - p2[2] - d2[2] * t
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True)
def _point_face_if_inside(x, verts, loops, l0, l1, n, d):
    """Plane distance if x projects inside the convex face, else +inf."""
    m = l1 - l0
    for i in range(m):
        a = verts[loops[l0 + i]]
        b = verts[loops[l0 + (i + 1) % m]]
        ex = b[0] - a[0]
        ey = b[1] - a[1]
        ez = b[2] - a[2]
        wx = x[0] - a[0]
        wy = x[1] - a[1]
        wz = x[2] - a[2]
        cx = ey * wz - ez * wy
        cy = ez * wx - ex * wz
        cz = ex * wy - ey * wx
        if cx * n[0] + cy * n[1] + cz * n[2] < 0.0:
            return np.inf
    return abs(n[0] * x[0] + n[1] * x[1] + n[2] * x[2] - d)


@njit(cache=True)
def seg_poly_signed(a, b, k, pack):
    """Signed distance between segment [a, b] and solid k (negative inside)."""
    verts, v_off, planes, f_off, loops, l_off, edges, e_off, aabb = pack
    f0 = f_off[k]
    f1 = f_off[k + 1]
    dvec = b - a
    t0 = 0.0
    t1 = 1.0
    hit = True
    for f in range(f0, f1):
        n = planes[f, :3]
        num = planes[f, 3] - _dot(n, a)
        den = _dot(n, dvec)
        if abs(den) < 1e-15:
            if num < 0.0:
                hit = False
                break
        else:
            t = num / den
            if den < 0.0:
                if t > t0:
                    t0 = t
            else:
                if t < t1:
                    t1 = t
            if t0 > t1:
                hit = False
                break
    if hit:
        # min over s in [0, 1] of max_f (n_f . x(s) - d_f): a 1-D LP, solved at breakpoints
        nf = f1 - f0
        ca = np.empty(nf)
        cb = np.empty(nf)
        for i in range(nf):
            n = planes[f0 + i, :3]
            ca[i] = _dot(n, a) - planes[f0 + i, 3]
            cb[i] = _dot(n, dvec)
        best = np.inf
        for c in range(2 + nf * nf):
            if c == 0:
                s = 0.0
            elif c == 1:
                s = 1.0
            else:
                i = (c - 2) // nf
                j = (c - 2) % nf
                if j <= i or abs(cb[i] - cb[j]) < 1e-15:
                    continue
                s = (ca[j] - ca[i]) / (cb[i] - cb[j])
                if s < 0.0 or s > 1.0:
                    continue
            g = -np.inf
            for i in range(nf):
                val = ca[i] + cb[i] * s
                if val > g:
                    g = val
            if g < best:
                best = g
        return best
    best = np.inf
    for f in range(f0, f1):
        n = planes[f, :3]
        dd = planes[f, 3]
        da = _point_face_if_inside(a, verts, loops, l_off[f], l_off[f + 1], n, dd)
        if da < best:
            best = da
        db = _point_face_if_inside(b, verts, loops, l_off[f], l_off[f + 1], n, dd)
        if db < best:
            best = db
    for e in range(e_off[k], e_off[k + 1]):
        de = seg_seg_dist(a, b, verts[edges[e, 0]], verts[edges[e, 1]])
        if de < best:
            best = de
    return best


@njit(cache=True)
def aabb_gap(lo, hi, box):
    """Lower bound on the distance between two boxes (0 when they overlap)."""
    g = 0.0
    for i in range(3):
        d = max(box[i] - hi[i], lo[i] - box[i + 3], 0.0)
        g += d * d
    return math.sqrt(g)


@njit(cache=True)
def transform_pack(pack, R, t):
    verts, v_off, planes, f_off, loops, l_off, edges, e_off, aabb = pack
    nv = verts.shape[0]
    V = np.empty_like(verts)
    for i in range(nv):
        V[i] = R @ verts[i] + t
    P = np.empty_like(planes)
    for f in range(planes.shape[0]):
        n = R @ planes[f, :3]
        P[f, :3] = n
        P[f, 3] = planes[f, 3] + _dot(n, t)
    B = np.empty_like(aabb)
    for k in range(aabb.shape[0]):
        for j in range(3):
            B[k, j] = np.inf
            B[k, j + 3] = -np.inf
        for i in range(v_off[k], v_off[k + 1]):
            for j in range(3):
                B[k, j] = min(B[k, j], V[i, j])
                B[k, j + 3] = max(B[k, j + 3], V[i, j])
    return (V, v_off, P, f_off, loops, l_off, edges, e_off, B)


@njit(cache=True)
def world_capsules(q, base_R, base_p, km, cap_frame, cap_a, cap_b, cap_r, floor_z):
    Rs, ps = _kin.fk_frames(q, base_R, base_p, km)
    C = cap_frame.shape[0]
    WA = np.empty((C, 3))
    WB = np.empty((C, 3))
    for c in range(C):
        f = cap_frame[c]
        if f < 0:
            WA[c, 0] = base_p[0]
            WA[c, 1] = base_p[1]
            WA[c, 2] = base_p[2] - cap_r[c]
            WB[c, 0] = base_p[0]
            WB[c, 1] = base_p[1]
            WB[c, 2] = min(floor_z + cap_r[c] + 1e-3, WA[c, 2])
        else:
            WA[c] = Rs[f] @ cap_a[c] + ps[f]
            WB[c] = Rs[f] @ cap_b[c] + ps[f]
    return WA, WB


@njit(cache=True)
def check_capsules(WA, WB, cap_r, cap_link, cap_frame, pairs, statics, obj, floor_z,
                   grasp_link, exact):
    """Most severe finding among self, object and static tests.

    Returns (category, distance, witness_a, witness_b). In non-exact mode AABB-
    separated pairs are skipped and the scan stops at the first penetration, so
    only the collision flag is meaningful.
    """
    best = np.inf
    cat = NONE
    wa = -1
    wb = -1
    C = WA.shape[0]
    # self
    for p in range(pairs.shape[0]):
        i = pairs[p, 0]
        j = pairs[p, 1]
        d = seg_seg_dist(WA[i], WB[i], WA[j], WB[j]) - cap_r[i] - cap_r[j]
        if d < best:
            best = d
            cat = SELF
            wa = i
            wb = j
        if not exact and best < 0.0:
            return cat, best, wa, wb
    lo = np.empty(3)
    hi = np.empty(3)
    # object (category precedence over static on ties)
    for c in range(C):
        for j in range(3):
            lo[j] = min(WA[c, j], WB[c, j]) - cap_r[c]
            hi[j] = max(WA[c, j], WB[c, j]) + cap_r[c]
        if cap_link[c] != grasp_link:
            nob = obj[1].shape[0] - 1
            for k in range(nob):
                if not exact and aabb_gap(lo, hi, obj[8][k]) > 0.0:
                    continue
                d = seg_poly_signed(WA[c], WB[c], k, obj) - cap_r[c]
                if d < best:
                    best = d
                    cat = OBJECT
                    wa = c
                    wb = k
                if not exact and best < 0.0:
                    return cat, best, wa, wb
    for c in range(C):
        for j in range(3):
            lo[j] = min(WA[c, j], WB[c, j]) - cap_r[c]
            hi[j] = max(WA[c, j], WB[c, j]) + cap_r[c]
        if cap_frame[c] >= 1:
            d = min(WA[c, 2], WB[c, 2]) - cap_r[c] - floor_z
            if d < best:
                best = d
                cat = STATIC
                wa = c
                wb = -1
        ns = statics[1].shape[0] - 1
        for k in range(ns):
            if not exact and aabb_gap(lo, hi, statics[8][k]) > 0.0:
                continue
            d = seg_poly_signed(WA[c], WB[c], k, statics) - cap_r[c]
            if d < best:
                best = d
                cat = STATIC
                wa = c
                wb = k
            if not exact and best < 0.0:
                return cat, best, wa, wb
    if best >= 0.0:
        return NONE, best, wa, wb
    return cat, best, wa, wb


@njit(cache=True)
def articulation_map(f, okind, direction, axis_pt, extent):
    if okind == 0:
        return np.eye(3), (f * extent) * direction
    R = _kin.axis_angle_matrix(direction, f * extent)
    return R, axis_pt - R @ axis_pt


@njit(cache=True)
def sweep_kernel(dense, opening, base_R, base_p, km, cap_frame, cap_link, cap_a, cap_b,
                 cap_r, pairs, statics, obj_closed, okind, direction, axis_pt, extent,
                 floor_z, grasp_link):
    """Index of the first colliding dense state, or -1."""
    for s in range(dense.shape[0]):
        R, t = articulation_map(opening[s], okind, direction, axis_pt, extent)
        obj = transform_pack(obj_closed, R, t)
        WA, WB = world_capsules(dense[s], base_R, base_p, km, cap_frame, cap_a, cap_b, cap_r, floor_z)
        cat, d, wa, wb = check_capsules(WA, WB, cap_r, cap_link, cap_frame, pairs, statics, obj,
                                        floor_z, grasp_link, False)
        if d < 0.0:
            return s
    return -1

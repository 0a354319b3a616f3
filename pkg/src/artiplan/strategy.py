"""Candidate strategies, ground-truth labels, rankers and the end-to-end planner."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _pipeline
from .artic import ArticulatedObject
from .geom import pose_error
from .ik import IkParams, facing_yaw, snap_height, solve_ik_mobile
from .robot import (ALLOWED_HEIGHTS, ArmModel, BasePlacement, default_model, forward_kinematics, random_config,
                    ready_config)
from .scene import ProblemInstance
from .seqik import (FeasibilityParams, JointTrajectory, PlanOutcome, Strategy, plan_with_internal_check,
                    seqik_decode)

GRID_ROWS = 11      # across the face
GRID_COLS = 16      # along the outward normal
GRID_PITCH = 0.1
STANDOFF = 0.3      # nearest column, metres from the face
N_ARMS = 10
N_PLACEMENTS = GRID_ROWS * GRID_COLS * len(ALLOWED_HEIGHTS)


def grid_directions(obj: ArticulatedObject):
    """Horizontal outward direction and its left-hand perpendicular."""
    n = obj.normal.copy()
    n[2] = 0.0
    if np.linalg.norm(n) < 1e-6:
        # upward-facing lid: step away from the hinge
        n = -obj.v.copy()
        n[2] = 0.0
    n /= np.linalg.norm(n)
    lat = np.array([-n[1], n[0], 0.0])
    return n, lat


def build_candidate_grid(obj: ArticulatedObject) -> list:
    """704 placements, height-major then row-major (row across, column outward)."""
    n, lat = grid_directions(obj)
    h0 = obj.handle.position[:2]
    out = []
    for h in ALLOWED_HEIGHTS:
        for r in range(GRID_ROWS):
            for c in range(GRID_COLS):
                xy = h0 + (STANDOFF + GRID_PITCH * c) * n[:2] + GRID_PITCH * (r - GRID_ROWS // 2) * lat[:2]
                out.append(BasePlacement(float(xy[0]), float(xy[1]), h, facing_yaw(xy, h0)))
    return out


def candidate_index(h, r, c, a, n_arms=N_ARMS):
    return ((h * GRID_ROWS + r) * GRID_COLS + c) * n_arms + a


@dataclass(frozen=True, eq=False)
class CandidateSet:
    base_grid: tuple
    arm_configs: tuple

    @classmethod
    def for_object(cls, obj: ArticulatedObject, arm_configs):
        return cls(tuple(build_candidate_grid(obj)), tuple(arm_configs))

    def __len__(self):
        return len(self.base_grid) * len(self.arm_configs)

    def split(self, index):
        """Canonical index -> (placement index, arm index)."""
        return divmod(int(index), len(self.arm_configs))

    def strategy(self, index) -> Strategy:
        b, a = self.split(index)
        return Strategy(self.base_grid[b], self.arm_configs[a], int(index))

    def arrays(self, indices=None):
        """(N, 4) base rows and (N, 7) initial configs in the given (default canonical) order."""
        bases = np.array([[p.x, p.y, p.height, p.yaw] for p in self.base_grid])
        arms = np.array([c.angles for c in self.arm_configs])
        if indices is None:
            indices = np.arange(len(self))
        indices = np.asarray(indices, dtype=np.int64)
        nb = len(self.arm_configs)
        return (np.ascontiguousarray(bases[indices // nb]), np.ascontiguousarray(arms[indices % nb]))


# ---------------------------------------------------------------------------
# batch decode + evaluate


def _batch(model: ArmModel, instance: ProblemInstance, bases, inits, sensed, params, ik_params):
    obj = instance.obj
    world = instance.scene.world(instance.target_object_index, sensed)
    Rt, pt = instance.waypoints.arrays()
    okind, p0, R0, direction, axis_pt, extent = obj.kernel_params
    frames, links, A, B, r = model.capsule_arrays
    return _pipeline.decode_evaluate_batch(
        bases, inits, np.ascontiguousarray(Rt), np.ascontiguousarray(pt), instance.waypoints.opening_fractions,
        model.km, ik_params.as_args(), okind, p0, R0, direction, axis_pt, extent, frames, links, A, B, r,
        model.self_pairs, world.static_pack, world.obj_pack, world.floor_z, model.grasp_link,
        params.tols, params.max_interp_step)


def decode_evaluate(model, instance, cands: CandidateSet, indices=None, sensed=False,
                    params=FeasibilityParams(), ik_params=IkParams()):
    """Stage codes and evidence for the given candidates (canonical order by default)."""
    bases, inits = cands.arrays(indices)
    return _batch(model, instance, bases, inits, sensed, params, ik_params)


# ---------------------------------------------------------------------------
# labels


@dataclass(eq=False)
class LabelSet:
    instance_id: str
    labels: np.ndarray
    metadata: dict = field(default_factory=dict)
    stages: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)

    def __len__(self):
        return len(self.labels)

    @property
    def n_positive(self):
        return int(self.labels.sum())

    def __eq__(self, other):
        return (isinstance(other, LabelSet) and self.instance_id == other.instance_id
                and np.array_equal(self.labels, other.labels) and self.metadata == other.metadata)


def label_instance(instance: ProblemInstance, cands: CandidateSet, model: ArmModel | None = None,
                   params=FeasibilityParams(), ik_params=IkParams(), chunk=None) -> LabelSet:
    """Ground-truth labels against the full scene geometry."""
    model = model or default_model()
    n = len(cands)
    if chunk is None:
        stages, _ = decode_evaluate(model, instance, cands, None, False, params, ik_params)
    else:
        parts = [decode_evaluate(model, instance, cands, np.arange(s, min(s + chunk, n)), False, params,
                                 ik_params)[0] for s in range(0, n, chunk)]
        stages = np.concatenate(parts)
    meta = label_metadata(params, ik_params, len(cands.arm_configs))
    return LabelSet(instance.instance_id, (stages == _pipeline.STAGE_NONE).astype(np.uint8), meta,
                    stages.astype(np.int8))


def label_metadata(params: FeasibilityParams, ik_params: IkParams, n_arms):
    return {"tol_goal_trans": params.tol_goal_trans, "tol_goal_rot": params.tol_goal_rot,
            "tol_dev_trans": params.tol_dev_trans, "tol_dev_rot": params.tol_dev_rot,
            "max_interp_step": params.max_interp_step, "ik_damping": ik_params.damping,
            "ik_max_iters": ik_params.max_iters, "ik_step_clamp": ik_params.step_clamp,
            "ik_tol_trans": ik_params.tol_trans, "ik_tol_rot": ik_params.tol_rot,
            "n_arms": n_arms, "grid_standoff": STANDOFF}


LABEL_MAGIC = "# artiplan labels v1"


def labels_to_text(ls: LabelSet) -> str:
    bits = np.packbits(ls.labels).tobytes().hex()
    lines = [LABEL_MAGIC, f"instance_id {ls.instance_id}", f"count {len(ls)}"]
    lines += [f"meta {k} {v!r}" for k, v in sorted(ls.metadata.items())]
    lines += [bits[i:i + 64] for i in range(0, len(bits), 64)]
    return "\n".join(lines) + "\n"


def labels_from_text(text: str) -> LabelSet:
    lines = text.splitlines()
    if not lines or lines[0] != LABEL_MAGIC:
        raise ValueError("not a label file")
    inst, count, meta, hexdata = None, None, {}, []
    for ln in lines[1:]:
        if ln.startswith("instance_id "):
            inst = ln.split(" ", 1)[1]
        elif ln.startswith("count "):
            count = int(ln.split()[1])
        elif ln.startswith("meta "):
            _, k, v = ln.split(" ", 2)
            meta[k] = _literal(v)
        elif ln.strip():
            hexdata.append(ln.strip())
    if inst is None or count is None:
        raise ValueError("label file header incomplete")
    raw = np.frombuffer(bytes.fromhex("".join(hexdata)), dtype=np.uint8)
    labels = np.unpackbits(raw)[:count]
    if len(labels) != count:
        raise ValueError(f"label file holds {len(labels)} bits, header says {count}")
    return LabelSet(inst, labels, meta)


def _literal(v):
    try:
        return int(v)
    except ValueError:
        return float(v)


# ---------------------------------------------------------------------------
# arm configurations


@dataclass(frozen=True)
class ArmSelection:
    pool: tuple
    scores: np.ndarray
    selected: tuple         # indices into pool

    @property
    def configs(self):
        return tuple(self.pool[i] for i in self.selected)


def sample_arm_pool(model: ArmModel, seed: int, pool_size: int = 20):
    rng = np.random.default_rng(seed)
    return tuple(random_config(model, rng) for _ in range(pool_size))


def select_top(scores, keep: int = 10):
    """Indices of the ``keep`` largest scores; ties go to the lower index."""
    scores = np.asarray(scores)
    order = np.lexsort((np.arange(len(scores)), -scores))
    return tuple(int(i) for i in order[:keep])


def select_arm_configs(training_instances, seed: int, pool_size: int = 20, keep: int = 10,
                       model: ArmModel | None = None, params=FeasibilityParams(), ik_params=IkParams(),
                       pool_labels=None) -> ArmSelection:
    """Score a random pool by total label successes over training instances and keep the best.

    ``pool_labels`` may supply precomputed pool-wide LabelSets (one per instance,
    pool_size arms per placement) to skip labeling.
    """
    training_instances = list(training_instances)
    if not training_instances and not pool_labels:
        raise ValueError("empty training set")
    model = model or default_model()
    pool = sample_arm_pool(model, seed, pool_size)
    if pool_labels is None:
        pool_labels = [label_instance(inst, CandidateSet.for_object(inst.obj, pool), model, params, ik_params)
                       for inst in training_instances]
    scores = np.zeros(pool_size, dtype=np.int64)
    for ls in pool_labels:
        scores += np.asarray(ls.labels, dtype=np.int64).reshape(-1, pool_size).sum(axis=0)
    return ArmSelection(pool, scores, select_top(scores, keep))


def restrict_labels(ls: LabelSet, pool_size: int, selected) -> LabelSet:
    """Labels over a pool restricted to the selected arms, in canonical order."""
    sub = np.asarray(ls.labels).reshape(-1, pool_size)[:, list(selected)].reshape(-1)
    meta = dict(ls.metadata, n_arms=len(selected))
    return LabelSet(ls.instance_id, sub, meta)


# ---------------------------------------------------------------------------
# rankers


@dataclass(frozen=True, eq=False)
class Ranker:
    kind: str
    seed: int = 0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("random", "frequency", "external"):
            raise ValueError(f"unknown ranker {self.kind!r}")
        if self.kind != "random" and self.table is None:
            raise ValueError(f"{self.kind} ranker needs a table")

    @classmethod
    def random(cls, seed):
        return cls("random", seed)

    @classmethod
    def frequency(cls, counts):
        return cls("frequency", table=np.asarray(counts, dtype=np.int64))

    @classmethod
    def external(cls, scores):
        return cls("external", table=np.asarray(scores, dtype=float))


def frequency_table(label_sets) -> np.ndarray:
    label_sets = list(label_sets)
    if not label_sets:
        raise ValueError("no label sets")
    n = len(label_sets[0])
    out = np.zeros(n, dtype=np.int64)
    for ls in label_sets:
        if len(ls) != n:
            raise ValueError("label sets differ in length")
        out += ls.labels
    return out


def frequency_to_csv(counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "successes"])
    for i, c in enumerate(counts):
        w.writerow([i, int(c)])
    return buf.getvalue()


def frequency_from_csv(text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    idx = np.array([int(r["index"]) for r in rows])
    if not np.array_equal(idx, np.arange(len(rows))):
        raise ValueError("frequency table indices must be 0..N-1 in order")
    return np.array([int(r["successes"]) for r in rows], dtype=np.int64)


def load_scores(text: str, n: int) -> np.ndarray:
    vals = [float(ln) for ln in text.split("\n") if ln.strip()]
    if len(vals) != n:
        raise ValueError(f"scorer file has {len(vals)} scores, expected {n}")
    return np.array(vals)


def rank(instance, cands: CandidateSet, ranker: Ranker) -> np.ndarray:
    """Permutation of canonical candidate indices, best first."""
    n = len(cands)
    if ranker.kind == "random":
        return np.random.default_rng(ranker.seed).permutation(n)
    if len(ranker.table) != n:
        raise ValueError(f"{ranker.kind} table has {len(ranker.table)} entries, expected {n}")
    return np.lexsort((np.arange(n), -ranker.table))


# ---------------------------------------------------------------------------
# planning


@dataclass
class MpaoResult:
    plan: JointTrajectory | None
    strategy: Strategy | None
    tries_used: int
    stages: list            # failure stage of each unsuccessful try, in order

    @property
    def success(self):
        return self.plan is not None

    @property
    def histogram(self):
        return dict(Counter(self.stages))


def mpao_plan(instance: ProblemInstance, cands: CandidateSet, ranker: Ranker, budget: int | None = None,
              model: ArmModel | None = None, params=FeasibilityParams(), ik_params=IkParams(),
              chunk: int = 64) -> MpaoResult:
    """Walk the ranked candidates; return the first that passes the sensed-geometry check."""
    if budget is not None and budget < 1:
        raise ValueError("budget must be at least 1")
    model = model or default_model()
    order = rank(instance, cands, ranker)
    if budget is not None:
        order = order[:budget]
    stages = []
    # candidates are independent, so evaluating a chunk ahead and stopping at the
    # first success gives the same answer as trying them one by one
    for s in range(0, len(order), chunk):
        idx = order[s:s + chunk]
        codes, _ = decode_evaluate(model, instance, cands, idx, True, params, ik_params)
        hit = np.flatnonzero(codes == _pipeline.STAGE_NONE)
        stop = int(hit[0]) if len(hit) else len(idx)
        stages += [_pipeline.STAGES[c] for c in codes[:stop]]
        if len(hit):
            strat = cands.strategy(idx[stop])
            traj = seqik_decode(model, strat, instance.waypoints, ik_params)
            return MpaoResult(traj, strat, s + stop + 1, stages)
    return MpaoResult(None, None, len(order), stages)


@dataclass
class BaselineResult:
    plan: JointTrajectory | None
    base: BasePlacement | None
    outcome: PlanOutcome | None
    failed_stage: str
    divergence_step: int | None = None

    @property
    def success(self):
        return self.plan is not None


def ready_offset(model: ArmModel):
    """Forward reach and height of the grasp point in the ready posture, base frame."""
    p = forward_kinematics(model, BasePlacement(0.0, 0.0, ALLOWED_HEIGHTS[0]), ready_config(model)).position
    return math.hypot(p[0], p[1]), p[2] - ALLOWED_HEIGHTS[0]


def baseline_start(obj: ArticulatedObject, model: ArmModel):
    """Allowed height and base xy that put the ready grasp point near the handle."""
    reach, lift = ready_offset(model)
    n, _ = grid_directions(obj)
    h = obj.handle.position
    return snap_height(h[2] - lift), h[:2] + reach * n[:2]


def rolled_ready(model: ArmModel, obj: ArticulatedObject, height, xy, target):
    """Ready posture with the last joint turned to the quarter roll closest to the grasp."""
    base = BasePlacement(float(xy[0]), float(xy[1]), height, facing_yaw(xy, obj.handle.position[:2]))
    q = ready_config(model).angles.copy()
    lo, hi = model.limits[6]
    best = None
    for k in (0, 1, -1, 2, -2):
        qk = q.copy()
        qk[6] = q[6] + k * math.pi / 2
        if not lo <= qk[6] <= hi:
            continue
        err = pose_error(forward_kinematics(model, base, qk), target).rotational
        if best is None or err < best[0] - 1e-9:
            best = (err, qk)
    return best[1]


def ik_init_baseline(instance: ProblemInstance, model: ArmModel | None = None, params=FeasibilityParams(),
                     ik_params=IkParams()) -> BaselineResult:
    """Solve base xy and joints for the first waypoint, then track with a fixed base."""
    model = model or default_model()
    obj = instance.obj
    height, xy0 = baseline_start(obj, model)
    target = instance.waypoints.waypoints[0]
    q0 = rolled_ready(model, obj, height, xy0, target)
    base, res = solve_ik_mobile(model, target, obj.handle.position[:2], height, xy0, q0, ik_params)
    if not res.converged:
        return BaselineResult(None, None, None, "ik_divergence", 0)
    world = instance.scene.world(instance.target_object_index, sensed=True)
    out = plan_with_internal_check(model, Strategy(base, res.config), instance.waypoints, world, obj,
                                   params, ik_params)
    return BaselineResult(out.trajectory, base, out, out.failed_stage, out.divergence_step)

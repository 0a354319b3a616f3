"""Benchmark harness: per-instance records, CSV output, and summary tables/curves."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .collide import CollisionWorld
from .config import derive_seed
from .geom import PoseError
from .ik import IkParams
from .planners import (EdgeChecker, PlannerParams, PlanningFailure, endpoint_configs, projected_rrt,
                       rrt_connect)
from .robot import ArmModel, default_model
from .scene import ProblemInstance
from .seqik import FeasibilityParams, evaluate, evaluate_path
from .strategy import CandidateSet, Ranker, ik_init_baseline, mpao_plan

METHODS = ("mpao_frequency", "mpao_random", "mpao_external", "ik_init", "rrt_connect", "projected_rrt")
COLUMNS = ("instance_id", "kind", "method", "budget", "seed", "success", "tries_used", "wall_time_s",
           "goal_trans_m", "goal_rot_rad", "dev_trans_m", "dev_rot_rad", "failure_stage")
KIND_ROWS = (("prismatic", "Prismatic"), ("vertical_hinge", "Vertical Hinge"),
             ("hinge_bottom", "Horizontal Down-Hinge"), ("hinge_top", "Horizontal Up-Hinge"))
TABLE_HEADER = ("Articulation Type", "Success Rate (%)", "Translational Deviation (m)",
                "Rotational Deviation (rad)", "Median number of initializations", "Time (s)")


@dataclass(frozen=True)
class BenchRecord:
    instance_id: str
    kind: str
    method: str
    budget: int
    seed: int
    success: bool
    tries_used: int
    wall_time: float | None
    goal_error: PoseError | None
    max_deviation: PoseError | None
    failure_stage: str

    def key(self):
        return (self.instance_id, self.method, self.budget, self.seed)


@dataclass
class BenchContext:
    arm_configs: tuple
    frequency: np.ndarray | None = None
    scores: np.ndarray | None = None
    feasibility: FeasibilityParams = field(default_factory=FeasibilityParams)
    ik: IkParams = field(default_factory=IkParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    root_seed: int = 0
    timing: bool = False
    model: ArmModel | None = None


def _record(inst, method, budget, seed, success, tries, wall, goal, dev, stage):
    return BenchRecord(inst.instance_id, inst.kind, method, int(budget), int(seed), bool(success), int(tries),
                       wall, goal, dev, stage)


def _ranker(method, inst, seed, ctx: BenchContext):
    if method == "mpao_frequency":
        if ctx.frequency is None:
            raise ValueError("mpao_frequency needs a frequency table")
        return Ranker.frequency(ctx.frequency)
    if method == "mpao_external":
        if ctx.scores is None:
            raise ValueError("mpao_external needs a scorer file")
        return Ranker.external(ctx.scores)
    return Ranker.random(derive_seed(ctx.root_seed, "rank", inst.instance_id, seed))


def _mpao_records(inst, method, budgets, seeds, ctx, cands, model):
    out = []
    full = inst.scene.world(inst.target_object_index, sensed=False)
    seed_list = seeds if method == "mpao_random" else seeds[:1]
    cache = {}
    for s in seed_list:
        ranker = _ranker(method, inst, s, ctx)
        runs = {}
        if ctx.timing:
            for b in budgets:
                t0 = time.perf_counter()
                res = mpao_plan(inst, cands, ranker, b, model, ctx.feasibility, ctx.ik)
                rep = evaluate(model, res.plan, inst.waypoints, full, params=ctx.feasibility) if res.plan else None
                runs[b] = (res, rep, time.perf_counter() - t0)
        else:
            # one walk up to the largest budget decides every smaller budget
            res = mpao_plan(inst, cands, ranker, max(budgets), model, ctx.feasibility, ctx.ik)
            rep = evaluate(model, res.plan, inst.waypoints, full, params=ctx.feasibility) if res.plan else None
            for b in budgets:
                if res.plan is not None and res.tries_used <= b:
                    runs[b] = (res, rep, None)
                else:
                    runs[b] = (replace(res, plan=None, strategy=None, tries_used=min(b, len(cands))), None, None)
        cache[s] = runs
    for s in seeds:
        runs = cache[s if method == "mpao_random" else seeds[0]]
        for b in budgets:
            res, rep, wall = runs[b]
            if res.plan is None:
                out.append(_record(inst, method, b, s, False, res.tries_used, wall, None, None, "budget_exhausted"))
            else:
                out.append(_record(inst, method, b, s, rep.success, res.tries_used, wall, rep.goal_error,
                                   rep.max_deviation, rep.failed_stage))
    return out


def _ik_init_records(inst, budgets, seeds, ctx, model):
    full = inst.scene.world(inst.target_object_index, sensed=False)
    t0 = time.perf_counter()
    res = ik_init_baseline(inst, model, ctx.feasibility, ctx.ik)
    rep = evaluate(model, res.plan, inst.waypoints, full, params=ctx.feasibility) if res.plan else None
    wall = time.perf_counter() - t0 if ctx.timing else None
    out = []
    for s in seeds:
        for b in budgets:
            if rep is None:
                ev = res.outcome.report if res.outcome is not None else None
                out.append(_record(inst, "ik_init", b, s, False, 1, wall, ev and ev.goal_error,
                                   ev and ev.max_deviation, res.failed_stage))
            else:
                out.append(_record(inst, "ik_init", b, s, rep.success, 1, wall, rep.goal_error, rep.max_deviation,
                                   rep.failed_stage))
    return out, res


def planner_setup(inst, ctx, cands, model, baseline=None):
    """Base and endpoint configurations shared with SeqIK.

    With a frequency table, the frequency-ranked MPAO plan supplies the base and
    its first and last configurations; otherwise the IK-init base is used and
    the endpoints come from seeded IK. Returns (base or None, ends or None).
    """
    if ctx.frequency is not None:
        res = mpao_plan(inst, cands, Ranker.frequency(ctx.frequency), None, model, ctx.feasibility, ctx.ik)
        if res.plan is not None:
            return res.plan.base, (res.plan.configs[0].angles, res.plan.configs[-1].angles)
    baseline = baseline or ik_init_baseline(inst, model, ctx.feasibility, ctx.ik)
    return baseline.base, None


def _planner_records(inst, method, budgets, seeds, ctx, setup, model):
    full = inst.scene.world(inst.target_object_index, sensed=False)
    out = []
    for s in seeds:
        params = replace(ctx.planner, seed=derive_seed(ctx.root_seed, "planner", inst.instance_id, s) % (2 ** 31))
        t0 = time.perf_counter()
        rec = run_planner(inst, method, setup, params, full, model, ctx)[:5]
        wall = time.perf_counter() - t0 if ctx.timing else None
        success, tries, goal, dev, stage = rec
        for b in budgets:
            out.append(_record(inst, method, b, s, success, tries, wall, goal, dev, stage))
    return out


def run_planner(inst, method, setup, params, full, model, ctx):
    """(success, samples, goal error, max deviation, failed stage, path)."""
    base, ends = setup
    if base is None:
        return False, 0, None, None, "no_base", None
    # the unconstrained planner does not model the articulating object
    free = CollisionWorld(full.statics, None, full.floor_z)
    if ends is None:
        ends = endpoint_configs(model, base, inst.waypoints, EdgeChecker(model, base, free), params, ctx.ik)
    if ends is None:
        return False, 0, None, None, "no_endpoints", None
    try:
        if method == "rrt_connect":
            res = rrt_connect(model, ends[0], ends[1], base, EdgeChecker(model, base, free), params)
        else:
            res = projected_rrt(model, ends[0], ends[1], base, inst.obj, EdgeChecker(model, base, full), params)
    except (PlanningFailure, ValueError):
        return False, 0, None, None, "projection" if method == "projected_rrt" else "no_endpoints", None
    if not res.success:
        return False, res.samples, None, None, "planner_budget", None
    rep = evaluate_path(model, base, res.path, inst.waypoints, full, inst.obj, ctx.feasibility)
    return rep.success, res.samples, rep.goal_error, rep.max_deviation, rep.failed_stage, res.path


def bench_instance(inst: ProblemInstance, methods, budgets, seeds, ctx: BenchContext):
    model = ctx.model or default_model()
    cands = CandidateSet.for_object(inst.obj, ctx.arm_configs)
    budgets = sorted({len(cands) if b is None else int(b) for b in budgets})
    seeds = sorted(int(s) for s in seeds)
    out = []
    baseline = None
    for m in methods:
        if m.startswith("mpao_"):
            out += _mpao_records(inst, m, budgets, seeds, ctx, cands, model)
        elif m == "ik_init":
            recs, baseline = _ik_init_records(inst, budgets, seeds, ctx, model)
            out += recs
    planners = [m for m in methods if m in ("rrt_connect", "projected_rrt")]
    if planners:
        setup = planner_setup(inst, ctx, cands, model, baseline)
        for m in planners:
            out += _planner_records(inst, m, budgets, seeds, ctx, setup, model)
    return out


def _bench_job(args):
    return bench_instance(*args)


def run_benchmark(instances, methods, budgets, seeds, ctx: BenchContext, jobs: int = 1):
    """One record per (instance, method, budget, seed), sorted canonically."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods: {unknown}")
    if not budgets or any(b is not None and int(b) < 1 for b in budgets):
        raise ValueError("budgets must be positive")
    tasks = [(inst, tuple(methods), tuple(budgets), tuple(seeds), ctx) for inst in instances]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_bench_job, tasks))
    else:
        parts = [_bench_job(t) for t in tasks]
    recs = [r for p in parts for r in p]
    return sorted(recs, key=BenchRecord.key)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in sorted(records, key=BenchRecord.key):
        g, d = r.goal_error, r.max_deviation
        w.writerow([_fmt(x) for x in (
            r.instance_id, r.kind, r.method, r.budget, r.seed, r.success, r.tries_used, r.wall_time,
            g and float(g.translational), g and float(g.rotational), d and float(d.translational),
            d and float(d.rotational), r.failure_stage)])
    return buf.getvalue()


def _opt_float(s):
    return float(s) if s != "" else None


def records_from_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError("unexpected benchmark CSV header")
    out = []
    for row in rows[1:]:
        d = dict(zip(COLUMNS, row))
        gt, gr, dt, dr = (_opt_float(d[k]) for k in ("goal_trans_m", "goal_rot_rad", "dev_trans_m", "dev_rot_rad"))
        out.append(BenchRecord(d["instance_id"], d["kind"], d["method"], int(d["budget"]), int(d["seed"]),
                               d["success"] == "1", int(d["tries_used"]), _opt_float(d["wall_time_s"]),
                               None if gt is None else PoseError(gt, gr), None if dt is None else PoseError(dt, dr),
                               d["failure_stage"]))
    return out


# ---------------------------------------------------------------------------
# summaries


def success_at(r: BenchRecord, tol_trans: float, tol_rot: float) -> bool:
    """Success recomputed at a (tighter) tolerance from the stored errors."""
    if not r.success:
        return False
    return (r.goal_error.translational <= tol_trans and r.goal_error.rotational <= tol_rot
            and r.max_deviation.translational <= tol_trans and r.max_deviation.rotational <= tol_rot)


def kind_row(kind):
    return "vertical_hinge" if kind in ("hinge_left", "hinge_right") else kind


def success_curve(records, method):
    """(budget, success rate) pairs averaged over instances and seeds."""
    rs = [r for r in records if r.method == method]
    out = []
    for b in sorted({r.budget for r in rs}):
        sel = [r.success for r in rs if r.budget == b]
        out.append((b, float(np.mean(sel))))
    return out


def deviation_curve(records, method, thresholds=None):
    """(threshold, success rate) at the largest budget, same threshold in m and rad."""
    rs = [r for r in records if r.method == method]
    if not rs:
        return []
    bmax = max(r.budget for r in rs)
    rs = [r for r in rs if r.budget == bmax]
    if thresholds is None:
        thresholds = np.round(np.linspace(0.0005, 0.01, 20), 6)
    return [(float(t), float(np.mean([success_at(r, t, t) for r in rs]))) for t in thresholds]


def _median(vals):
    vals = [v for v in vals if v is not None]
    return float(np.median(vals)) if vals else None


def table(records, method):
    """Rows of the per-kind summary at the largest budget, columns in TABLE_HEADER order."""
    rs = [r for r in records if r.method == method]
    if not rs:
        return []
    bmax = max(r.budget for r in rs)
    rs = [r for r in rs if r.budget == bmax]
    rows = []
    for key, name in KIND_ROWS:
        sel = [r for r in rs if kind_row(r.kind) == key]
        if not sel:
            continue
        ok = [r for r in sel if r.success]
        rows.append((name, 100.0 * len(ok) / len(sel),
                     _median([r.max_deviation.translational for r in ok]),
                     _median([r.max_deviation.rotational for r in ok]),
                     _median([r.tries_used for r in ok]),
                     _median([r.wall_time for r in sel])))
    return rows


def format_table(rows) -> str:
    def cell(v, fmt):
        return "-" if v is None else format(v, fmt)
    lines = ["| " + " | ".join(TABLE_HEADER) + " |", "|" + "---|" * len(TABLE_HEADER)]
    for name, sr, dt, dr, n, t in rows:
        lines.append(f"| {name} | {sr:.1f} | {cell(dt, '.4f')} | {cell(dr, '.4f')} | {cell(n, '.0f')} | "
                     f"{cell(t, '.2f')} |")
    return "\n".join(lines) + "\n"


def summarize(records):
    """Tables and curves, all pure functions of the records."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    methods = [m for m in METHODS if any(r.method == m for r in records)]
    return {m: {"table": table(records, m), "tries": success_curve(records, m),
                "deviation": deviation_curve(records, m)} for m in methods}


def curves_to_csv(summary) -> tuple[str, str]:
    t = ["method,budget,success_rate"]
    d = ["method,threshold,success_rate"]
    for m, s in summary.items():
        t += [f"{m},{b},{v!r}" for b, v in s["tries"]]
        d += [f"{m},{th!r},{v!r}" for th, v in s["deviation"]]
    return "\n".join(t) + "\n", "\n".join(d) + "\n"


def report_text(summary) -> str:
    parts = []
    for m, s in summary.items():
        parts.append(f"## {m}\n\n" + format_table(s["table"]))
        parts.append("success vs tries: " + ", ".join(f"{b}: {100 * v:.1f}%" for b, v in s["tries"]) + "\n")
    return "\n".join(parts)


def mean_success_at(records, method, budget):
    sel = [r.success for r in records if r.method == method and r.budget == budget]
    return float(np.mean(sel)) if sel else math.nan


def exhaustive_deviation_curve(instances, arm_configs, thresholds, model: ArmModel | None = None,
                               params: FeasibilityParams = FeasibilityParams(), ik_params=IkParams()):
    """Exhaustive-candidate success rate as the deviation tolerance (m and rad alike) grows.

    Every candidate is evaluated once with the loosest tolerance; a candidate
    counts at threshold t when it succeeded and its deviation is within t.
    Returns (curve [(t, rate)], per-instance best deviation or inf).
    """
    from . import _pipeline
    from .strategy import decode_evaluate

    model = model or default_model()
    thresholds = np.asarray(sorted(float(t) for t in thresholds))
    loose = replace(params, tol_dev_trans=float(thresholds[-1]), tol_dev_rot=float(thresholds[-1]))
    best = []
    for inst in instances:
        cands = CandidateSet.for_object(inst.obj, arm_configs)
        stages, ev = decode_evaluate(model, inst, cands, None, False, loose, ik_params)
        ok = stages == _pipeline.STAGE_NONE
        best.append(float(np.max(ev[ok, 2:], axis=1).min()) if ok.any() else math.inf)
    best = np.array(best)
    return [(float(t), float(np.mean(best <= t))) for t in thresholds], best

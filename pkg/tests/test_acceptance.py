"""End-to-end acceptance checks. Each test prints one PASS/FAIL line.

Slow: the whole module takes on the order of ten minutes on one core.
Shared fixtures (arm selection on a mixed training split, the frequency
table) are computed once per session.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import wilcoxon

from artiplan import _pipeline, bench, strategy
from artiplan.cli import main as cli_main, save_arms
from artiplan.collide import capsule_capsule_distance, capsule_solid_distance
from artiplan.config import derive_seed
from artiplan.ik import solve_ik
from artiplan.robot import BasePlacement, Capsule, JointConfig, forward_kinematics, jacobian, random_config
from artiplan.scene import GeneratorConfig, generate_instances, load_scene_document
from artiplan.seqik import Strategy, evaluate, interpolate, plan_with_internal_check, seqik_decode

from oracles import capsule_capsule_sampled, capsule_solid_sampled, random_capsule, random_solid

pytestmark = pytest.mark.slow

FIXTURE = Path(__file__).parent / "fixtures" / "occlusion"
BUDGETS = [1, 2, 5, 10, 20, 50, 100]
BASE = BasePlacement(0.0, 0.0, 0.5)
VERTICAL = ("hinge_left", "hinge_right")


@pytest.fixture
def verdict(capsys):
    def say(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return say


# ---------------------------------------------------------------------------
# shared experiment state

@pytest.fixture(scope="module")
def mixed():
    gen = GeneratorConfig(counts={"prismatic": 30, "hinge_left": 15, "hinge_right": 15,
                                  "hinge_top": 15, "hinge_bottom": 15})
    insts = generate_instances(11, gen)
    return [i for i in insts if i.split == "train"], [i for i in insts if i.split == "test"]


@pytest.fixture(scope="module")
def selection(model, mixed):
    train, _ = mixed
    pool = strategy.sample_arm_pool(model, derive_seed(0, "arm-pool"), 20)
    pool_labels = [strategy.label_instance(i, strategy.CandidateSet.for_object(i.obj, pool), model) for i in train]
    sel = strategy.select_arm_configs(train, derive_seed(0, "arm-pool"), 20, 10, model, pool_labels=pool_labels)
    table = strategy.frequency_table([strategy.restrict_labels(ls, 20, sel.selected) for ls in pool_labels])
    return sel.configs, table


@pytest.fixture(scope="module")
def prismatic_suite():
    return generate_instances(101, GeneratorConfig(counts={"prismatic": 60}, clutter_density=0.0))


@pytest.fixture(scope="module")
def prismatic_best(model, prismatic_suite, selection):
    t0 = time.perf_counter()
    curve, best = bench.exhaustive_deviation_curve(prismatic_suite, selection[0], [0.0001, 0.0002, 0.0005, 0.001, 0.002, 0.005, 0.01],
                                               model)
    return curve, best, time.perf_counter() - t0


@pytest.fixture(scope="module")
def planner_records(model, prismatic_suite, selection):
    ctx = bench.BenchContext(selection[0], selection[1], model=model)
    return bench.run_benchmark(prismatic_suite[:20], ["mpao_frequency", "rrt_connect", "projected_rrt"],
                               [None], [0], ctx)


# ---------------------------------------------------------------------------

def test_01_jacobian_finite_differences(model, verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    h = 1e-6
    for _ in range(100):
        q = random_config(model, rng).angles
        J = jacobian(model, BASE, q)
        R0 = forward_kinematics(model, BASE, q).rotation
        F = np.zeros((6, 7))
        for i in range(7):
            dq = np.zeros(7)
            dq[i] = h
            p, m = forward_kinematics(model, BASE, q + dq), forward_kinematics(model, BASE, q - dq)
            F[:3, i] = (p.position - m.position) / (2 * h)
            W = (p.rotation - m.rotation) / (2 * h) @ R0.T
            F[3:, i] = [W[2, 1], W[0, 2], W[1, 0]]
        worst = max(worst, np.linalg.norm(J - F) / np.linalg.norm(F))
    dt = time.perf_counter() - t0
    verdict(1, worst < 1e-5 and dt < 5.0, f"max relative Frobenius error {worst:.2e}, {dt:.2f} s")


def test_02_ik_convergence(model, verdict):
    rng = np.random.default_rng(2)
    lo, hi = model.limits[:, 0], model.limits[:, 1]
    t0 = time.perf_counter()
    conv, bad = 0, 0
    for _ in range(1000):
        q_star = random_config(model, rng).angles
        target = forward_kinematics(model, BASE, q_star)
        res = solve_ik(model, BASE, target, np.clip(q_star + rng.normal(0, 0.1, 7), lo, hi))
        if res.converged:
            conv += 1
            e = res.residual
            bad += not (e.translational <= 1e-4 and e.rotational <= 1e-4)
    dt = time.perf_counter() - t0
    ok = conv >= 950 and bad == 0 and dt < 30.0
    verdict(2, ok, f"{conv}/1000 converged, {bad} converged above 1e-4, {dt:.1f} s")


def test_03_exhaustive_prismatic(prismatic_suite, prismatic_best, verdict):
    curve, best, dt = prismatic_best
    rates = [r for _, r in curve]
    rate = rates[-1]
    ok = len(prismatic_suite) >= 50 and rate >= 0.9 and rates == sorted(rates) and dt < 600
    verdict(3, ok, f"{rate:.1%} of {len(prismatic_suite)} solved; curve {rates}; {dt:.0f} s")


def test_04_prismatic_beats_vertical_hinge(model, prismatic_best, selection, verdict):
    hinges = generate_instances(101, GeneratorConfig(counts={"hinge_left": 30, "hinge_right": 30},
                                                     clutter_density=0.0))
    assert {i.kind for i in hinges} <= set(VERTICAL)
    curve, _ = bench.exhaustive_deviation_curve(hinges, selection[0], [0.01], model)
    p_rate, h_rate = prismatic_best[0][-1][1], curve[-1][1]
    verdict(4, p_rate > h_rate, f"prismatic {p_rate:.1%} vs vertical hinge {h_rate:.1%}")


def test_05_frequency_beats_random(model, mixed, selection, verdict):
    _, test = mixed
    ctx = bench.BenchContext(selection[0], selection[1], model=model)
    recs = bench.run_benchmark(test, ["mpao_frequency", "mpao_random"], BUDGETS, range(20), ctx)
    freq = [bench.mean_success_at(recs, "mpao_frequency", b) for b in BUDGETS]
    rand = [bench.mean_success_at(recs, "mpao_random", b) for b in BUDGETS]
    ids = sorted(i.instance_id for i in test)
    at10 = [r for r in recs if r.budget == 10]
    per_f = np.array([np.mean([r.success for r in at10 if r.method == "mpao_frequency" and r.instance_id == i])
                      for i in ids])
    per_r = np.array([np.mean([r.success for r in at10 if r.method == "mpao_random" and r.instance_id == i])
                      for i in ids])
    p = wilcoxon(per_f, per_r, alternative="greater").pvalue
    gap = freq[BUDGETS.index(10)] - rand[BUDGETS.index(10)]
    ok = all(f >= r for f, r in zip(freq, rand)) and gap >= 0.10 and p < 0.05
    verdict(5, ok, f"frequency {np.round(freq, 3).tolist()} random {np.round(rand, 3).tolist()}; "
                   f"gap at 10 = {gap:.3f}, p = {p:.2g}")


def test_06_rrt_connect_leaves_the_constraint(planner_records, verdict):
    rs = [r for r in planner_records if r.method == "rrt_connect"]
    off = sum(r.max_deviation is not None and r.max_deviation.translational > 0.01 for r in rs)
    verdict(6, off >= 0.95 * len(rs), f"{off}/{len(rs)} RRT-connect paths deviate more than 0.01 m")


def test_07_projection_deviation_vs_seqik(planner_records, verdict):
    def med(method):
        d = [r.max_deviation.translational for r in planner_records
             if r.method == method and r.max_deviation is not None]
        return float(np.median(d)) if d else float("nan"), len(d)
    (proj, n_p), (seq, n_s) = med("projected_rrt"), med("mpao_frequency")
    ok = n_p > 0 and n_s > 0 and proj >= 10 * seq
    verdict(7, ok, f"median deviation projected {proj:.4f} m (n={n_p}) vs SeqIK {seq:.5f} m (n={n_s})")


def test_08_interpolation(verdict):
    rng = np.random.default_rng(8)
    worst, ends = 0.0, True
    for _ in range(200):
        path = rng.uniform(-2.9, 2.9, (int(rng.integers(2, 12)), 7))
        d = interpolate(path, 0.01)
        worst = max(worst, np.abs(np.diff(d.configs, axis=0)).max())
        ends &= np.array_equal(d.configs[0], path[0]) and np.array_equal(d.configs[-1], path[-1])
    verdict(8, worst <= 0.01 and ends, f"largest joint step {worst:.6f} rad, endpoints exact: {ends}")


def test_09_collision_kernel_oracle(verdict):
    rng = np.random.default_rng(9)
    worst = 0.0
    for k in range(1000):
        if k % 2:
            s = random_solid(rng)
            a, b, r = random_capsule(rng)
            err = capsule_solid_distance(Capsule(a, b, r), s) - capsule_solid_sampled(a, b, r, s)
        else:
            a1, b1, r1 = random_capsule(rng)
            a2, b2, r2 = random_capsule(rng)
            err = (capsule_capsule_distance(Capsule(a1, b1, r1), Capsule(a2, b2, r2))
                   - capsule_capsule_sampled(a1, b1, a2, b2, r1, r2))
        worst = max(worst, abs(err))
    verdict(9, worst <= 1e-3, f"max |kernel - oracle| over 1000 pairs {worst:.2e} m")


def test_10_candidate_set_constants(prismatic_suite, arms, verdict):
    obj = prismatic_suite[0].obj
    grid = strategy.build_candidate_grid(obj)
    cands = strategy.CandidateSet.for_object(obj, arms)
    n, lat = strategy.grid_directions(obj)
    d = np.array([p.xy for p in grid]) - obj.handle.position[:2]
    rows, cols = np.unique(np.round(d @ lat[:2], 9)), np.unique(np.round(d @ n[:2], 9))
    shape = (len({p.height for p in grid}), len(rows), len(cols))
    ok = len(grid) == 704 and len(cands) == 7040 and shape == (4, 11, 16)
    verdict(10, ok, f"{len(grid)} placements, {len(cands)} candidates, heights x rows x cols {shape}")


def test_11_occlusion_gap(model, verdict):
    _, insts = load_scene_document((FIXTURE / "scene.json").read_bytes())
    doc = json.loads((FIXTURE / "strategy.json").read_text())
    inst = next(i for i in insts if i.instance_id == doc["instance_id"])
    st = Strategy(BasePlacement(*doc["base"]), JointConfig(np.array(doc["init"])))
    sensed = plan_with_internal_check(model, st, inst.waypoints, inst.scene.world(inst.target_object_index, True))
    traj = seqik_decode(model, st, inst.waypoints)
    truth = evaluate(model, traj, inst.waypoints, inst.scene.world(inst.target_object_index))
    ok = sensed.success and truth.failed_stage == _pipeline.STAGES[_pipeline.STAGE_COLLISION]
    verdict(11, ok, f"sensed check: {sensed.failed_stage}, ground truth: {truth.failed_stage}")


def test_12_cli_runs_are_byte_identical(tmp_path, arms, verdict):
    def pipeline(root, jobs):
        run = lambda *a: cli_main(["--jobs", str(jobs)] + [str(x) for x in a])
        assert run("gen", "--seed", 3, "--out", root / "suite", "--counts", "prismatic=3,hinge_left=2") == 0
        save_arms(root / "arms.json", arms)
        assert run("label", "--suite", root / "suite", "--arms", root / "arms.json", "--out", root / "labels") == 0
        assert run("rank", "--labels", root / "labels", "--out", root / "rank") == 0
        (root / "scores.txt").write_text("".join(f"{(k * 7919) % 7040}\n" for k in range(7040)))
        assert run("bench", "--suite", root / "suite", "--arms", root / "arms.json", "--table",
                   root / "rank" / "frequency.csv", "--scores", root / "scores.txt", "--methods", ",".join(bench.METHODS), "--budgets", "1,5,all",
                   "--seeds", "0,1", "--out", root / "bench") == 0
        assert run("report", "--in", root / "bench") == 0
        return sorted(root.rglob("*.csv"))

    runs = [pipeline(tmp_path / name, jobs) for name, jobs in (("a", 1), ("b", 1), ("c", 2))]
    rel = [[p.relative_to(tmp_path / n) for p in r] for n, r in zip("abc", runs)]
    same = rel[0] == rel[1] == rel[2] and all(
        p.read_bytes() == q.read_bytes() == s.read_bytes() for p, q, s in zip(*runs))
    verdict(12, same and len(rel[0]) >= 4, f"{len(rel[0])} CSV files compared across 3 runs (jobs 1, 1, 2)")

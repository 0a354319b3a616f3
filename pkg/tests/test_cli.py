import json

import pytest

from artiplan.cli import load_suite, main, save_arms


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, arms):
    root = tmp_path_factory.mktemp("cli")
    assert run("--jobs", 1, "gen", "--seed", 4, "--out", root / "suite",
               "--counts", "prismatic=3,hinge_left=2", "--clutter", 0.2) == 0
    save_arms(root / "arms.json", arms)
    assert run("--jobs", 1, "label", "--suite", root / "suite", "--arms", root / "arms.json",
               "--out", root / "labels") == 0
    assert run("rank", "--ranker", "frequency", "--labels", root / "labels", "--out", root / "rank") == 0
    return root


def _bench(root, out, jobs):
    return run("--jobs", jobs, "bench", "--suite", root / "suite", "--arms", root / "arms.json",
               "--labels", root / "labels", "--methods", "mpao_frequency,mpao_random",
               "--budgets", "1,5", "--seeds", "0,1", "--out", root / out)


def test_gen_writes_suite_and_config(pipeline):
    doc = json.loads((pipeline / "suite" / "suite.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["scenes"]) == 5
    cfg = json.loads((pipeline / "suite" / "config.json").read_text())
    assert cfg["command"]["counts"] == "prismatic=3,hinge_left=2"
    assert cfg["config"]["generator"]["clutter_density"] == 0.2
    assert len(load_suite(pipeline / "suite")) == 5
    assert not list(pipeline.rglob("*.tmp*"))


def test_validate_exit_codes(pipeline, tmp_path):
    assert run("validate", pipeline / "suite") == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1, "scene_id": 3}')
    assert run("validate", bad) == 1
    assert run("validate", tmp_path / "missing") == 2


def test_rank_outputs(pipeline):
    table = (pipeline / "rank" / "frequency.csv").read_text().splitlines()
    order = (pipeline / "rank" / "ranking.txt").read_text().split()
    assert len(table) == 7041 and len(order) == 7040
    assert sorted(map(int, order)) == list(range(7040))


def test_plan_writes_trajectory(pipeline, tmp_path):
    inst = load_suite(pipeline / "suite", "test")[0]
    code = run("plan", "--suite", pipeline / "suite", "--instance", inst.instance_id, "--arms",
               pipeline / "arms.json", "--ranker", "random", "--budget", 7040, "--out", tmp_path)
    doc = json.loads((tmp_path / "plan.json").read_text())
    assert code == (0 if doc["success"] else 1)
    assert (tmp_path / "trajectory.txt").exists() == doc["success"]


def test_usage_errors(pipeline, tmp_path):
    inst = load_suite(pipeline / "suite")[0].instance_id
    assert run("plan", "--suite", pipeline / "suite", "--instance", inst, "--arms", pipeline / "arms.json",
               "--budget", 0, "--out", tmp_path) == 2
    assert run("bench", "--suite", pipeline / "suite", "--arms", pipeline / "arms.json",
               "--methods", "oracle", "--out", tmp_path) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"ik": {"bogus": 1}}')
    assert run("--config", cfg, "validate", pipeline / "suite") == 2
    assert run("--jobs", 0, "validate", pipeline / "suite") == 2
    assert run("nosuchcommand") == 2


def test_bench_is_reproducible_across_jobs(pipeline):
    assert _bench(pipeline, "b1", 1) == 0
    assert _bench(pipeline, "b2", 2) == 0
    a = (pipeline / "b1" / "records.csv").read_bytes()
    assert a == (pipeline / "b2" / "records.csv").read_bytes()
    assert a.count(b"\n") == 1 + 2 * 2 * 2 * len(load_suite(pipeline / "suite", "test"))
    assert run("report", "--in", pipeline / "b1") == 0
    assert (pipeline / "b1" / "report.md").read_text().startswith("#")
    assert (pipeline / "b1" / "curve_tries.csv").exists()

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from artiplan import strategy as S
from artiplan.robot import ALLOWED_HEIGHTS
from artiplan.seqik import plan_with_internal_check


def test_grid_structure(small_suite, arms):
    for inst in small_suite:
        grid = S.build_candidate_grid(inst.obj)
        assert len(grid) == 704 == S.N_PLACEMENTS
        assert len(S.CandidateSet.for_object(inst.obj, arms)) == 7040
        n, lat = S.grid_directions(inst.obj)
        h = inst.obj.handle.position[:2]
        for k, p in enumerate(grid):
            hi, rem = divmod(k, 11 * 16)
            r, c = divmod(rem, 16)
            assert p.height == ALLOWED_HEIGHTS[hi]
            d = p.xy - h
            assert d @ n[:2] == pytest.approx(0.3 + 0.1 * c)
            assert d @ lat[:2] == pytest.approx(0.1 * (r - 5))
            # every placement faces the handle
            assert math.cos(p.yaw - math.atan2(-d[1], -d[0])) == pytest.approx(1.0)


@given(st.integers(0, 3), st.integers(0, 10), st.integers(0, 15), st.integers(0, 9))
def test_candidate_index_bijection(small_suite, arms, h, r, c, a):
    cands = S.CandidateSet.for_object(small_suite[0].obj, arms)
    i = S.candidate_index(h, r, c, a)
    assert 0 <= i < 7040
    b, arm = cands.split(i)
    assert arm == a and b == (h * 11 + r) * 16 + c
    st_ = cands.strategy(i)
    assert st_.init is arms[a] and st_.base is cands.base_grid[b] and st_.index == i


def test_candidate_arrays_follow_canonical_order(small_suite, arms):
    cands = S.CandidateSet.for_object(small_suite[0].obj, arms)
    bases, inits = cands.arrays([0, 9, 10, 7039])
    assert np.array_equal(inits[1], arms[9].angles) and np.array_equal(inits[2], arms[0].angles)
    assert bases[2].tolist() == cands.base_grid[1].to_list()


@given(st.integers(0, 2 ** 31))
def test_random_ranker_is_a_seeded_permutation(seed):
    r = S.rank(None, range(7040), S.Ranker.random(seed))
    assert np.array_equal(np.sort(r), np.arange(7040))
    assert np.array_equal(r, S.rank(None, range(7040), S.Ranker.random(seed)))


@given(st.lists(st.integers(0, 5), min_size=1, max_size=200))
def test_frequency_ranker_orders_by_count_then_index(counts):
    order = S.rank(None, range(len(counts)), S.Ranker.frequency(counts))
    keys = [(-counts[i], i) for i in order]
    assert keys == sorted(keys)


def test_ranker_validation():
    with pytest.raises(ValueError):
        S.Ranker("oracle")
    with pytest.raises(ValueError):
        S.Ranker("frequency")
    with pytest.raises(ValueError):
        S.rank(None, range(10), S.Ranker.external(np.zeros(9)))
    with pytest.raises(ValueError):
        S.load_scores("1\n2\n", 3)
    assert np.array_equal(S.load_scores("0.5\n\n-1\n2e3\n", 3), [0.5, -1, 2000])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=300), st.text(
    alphabet=st.characters(whitelist_categories=("L", "N"), whitelist_characters="-_"), min_size=1, max_size=20))
def test_label_text_round_trip(bits, name):
    ls = S.LabelSet(name, np.array(bits), {"tol": 0.01, "n_arms": 10})
    assert S.labels_from_text(S.labels_to_text(ls)) == ls


def test_label_file_errors():
    with pytest.raises(ValueError):
        S.labels_from_text("garbage\n")
    text = S.labels_to_text(S.LabelSet("x", np.ones(16)))
    with pytest.raises(ValueError):
        S.labels_from_text(text.replace("count 16", "count 99"))


@given(st.lists(st.lists(st.integers(0, 1), min_size=12, max_size=12), min_size=1, max_size=6))
def test_frequency_table_sums_labels(rows):
    sets = [S.LabelSet(str(k), np.array(r)) for k, r in enumerate(rows)]
    t = S.frequency_table(sets)
    assert np.array_equal(t, np.array(rows).sum(axis=0))
    assert np.array_equal(S.frequency_from_csv(S.frequency_to_csv(t)), t)


def test_frequency_table_rejects_ragged():
    with pytest.raises(ValueError):
        S.frequency_table([S.LabelSet("a", np.ones(3)), S.LabelSet("b", np.ones(4))])
    with pytest.raises(ValueError):
        S.frequency_table([])


def test_select_top_breaks_ties_by_index():
    assert S.select_top([3, 5, 5, 1, 5], 3) == (1, 2, 4)
    assert S.select_top([0, 0, 0], 2) == (0, 1)


@given(st.integers(1, 5), st.data())
def test_restrict_labels_keeps_selected_columns(pool, data):
    n_place = 7
    bits = np.array(data.draw(st.lists(st.integers(0, 1), min_size=pool * n_place, max_size=pool * n_place)))
    sel = data.draw(st.lists(st.integers(0, pool - 1), min_size=1, max_size=pool, unique=True))
    sub = S.restrict_labels(S.LabelSet("i", bits), pool, sel)
    assert np.array_equal(sub.labels.reshape(n_place, len(sel)), bits.reshape(n_place, pool)[:, sel])
    assert sub.metadata["n_arms"] == len(sel)


def test_labels_deterministic_and_chunk_invariant(model, small_suite, arms):
    inst = small_suite[0]
    cands = S.CandidateSet.for_object(inst.obj, arms)
    a = S.label_instance(inst, cands, model)
    b = S.label_instance(inst, cands, model, chunk=1000)
    assert a == b and a.n_positive > 0
    assert a.metadata["n_arms"] == 10 and a.metadata["tol_dev_trans"] == 0.01


def test_mpao_matches_sequential_reference(model, small_suite, arms):
    inst = small_suite[1]
    cands = S.CandidateSet.for_object(inst.obj, arms)
    ranker = S.Ranker.random(7)
    res = S.mpao_plan(inst, cands, ranker, 150, model, chunk=16)
    sensed = inst.scene.world(0, sensed=True)
    stages = []
    for i in S.rank(inst, cands, ranker)[:150]:
        out = plan_with_internal_check(model, cands.strategy(i), inst.waypoints, sensed)
        if out.success:
            break
        stages.append(out.failed_stage)
    assert res.stages == stages
    assert res.tries_used == len(stages) + (1 if res.success else 0)
    if res.success:
        assert res.strategy.index == i
        assert sum(res.histogram.values()) == res.tries_used - 1


def test_mpao_budget(model, small_suite, arms):
    inst = small_suite[3]
    cands = S.CandidateSet.for_object(inst.obj, arms)
    res = S.mpao_plan(inst, cands, S.Ranker.random(0), 5, model)
    assert res.tries_used <= 5
    with pytest.raises(ValueError):
        S.mpao_plan(inst, cands, S.Ranker.random(0), 0, model)


def test_select_arm_configs_from_pool_labels():
    pool = 4
    lab = [S.LabelSet("a", np.tile([1, 0, 1, 1], 5)), S.LabelSet("b", np.tile([0, 0, 1, 0], 5))]
    sel = S.select_arm_configs([], 0, pool, 2, pool_labels=lab)
    assert sel.scores.tolist() == [5, 0, 10, 5]
    assert sel.selected == (2, 0)
    assert len(sel.configs) == 2
    with pytest.raises(ValueError):
        S.select_arm_configs([], 0, pool, 2)


def test_ik_init_baseline_runs(model, small_suite):
    res = S.ik_init_baseline(small_suite[0], model)
    assert res.failed_stage in ("none", "ik_divergence", "goal", "deviation", "collision")
    assert res.success == (res.plan is not None)
    if res.base is not None:
        assert res.base.height in ALLOWED_HEIGHTS


def test_baseline_start_sits_in_front_of_the_handle(model, small_suite):
    for inst in small_suite:
        h, xy = S.baseline_start(inst.obj, model)
        n, _ = S.grid_directions(inst.obj)
        assert h in ALLOWED_HEIGHTS
        assert (xy - inst.obj.handle.position[:2]) @ n[:2] == pytest.approx(S.ready_offset(model)[0])

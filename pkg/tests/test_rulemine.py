import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruleguard.envs.base import Experience
from ruleguard.explainer import aggregate_importance
from ruleguard.rulemine import (GROW, PRUNE, VALID, LabeledDataset, MineParams, _prune_value,
                                build_all_datasets, build_datasets, filter_rules, foil_gain,
                                grow_rule, mine_combination, mine_rules, prune_rule,
                                weighted_foil_gain)
from ruleguard.rules import NEG, POS, Rule, coverage_mask


def _fixture_sets():
    inc = np.zeros((10, 2), dtype=int)
    exc = np.zeros((10, 2), dtype=int)
    inc[:6, 0] = 1
    exc[:2, 0] = 1
    return inc, exc


def test_foil_gain_fixture():
    inc, exc = _fixture_sets()
    g = weighted_foil_gain((0, 1), (), inc, exc, np.array([1.0, 1.0]))
    # 6 * (log2(6/8) - log2(10/20))
    assert g == pytest.approx(6 * (math.log2(0.75) + 1), abs=1e-12)
    assert g == pytest.approx(3.5098, abs=1e-4)


def test_gain_scales_with_importance():
    inc, exc = _fixture_sets()
    assert weighted_foil_gain((0, 1), (), inc, exc, np.array([0.5, 1.0])) == pytest.approx(3.5098 / 2, abs=1e-4)
    assert weighted_foil_gain((0, 1), (), inc, exc, np.array([0.0, 1.0])) == 0.0


def test_negative_gain_is_floored():
    inc, exc = _fixture_sets()
    # interval 0 of feature 0 has lower precision than the whole set: negative raw gain
    assert foil_gain(10, 10, 4, 8) < 0
    assert weighted_foil_gain((0, 0), (), inc, exc, np.array([1.0, 1.0])) == 0.0


def test_gain_on_existing_feature_rejected():
    inc, exc = _fixture_sets()
    with pytest.raises(ValueError):
        weighted_foil_gain((0, 1), ((0, 0),), inc, exc, np.ones(2))


def test_grow_tie_breaks_to_lower_feature():
    inc = np.array([[1, 1], [1, 1], [0, 0]])
    exc = np.array([[0, 0], [0, 0], [0, 0]])
    conds = grow_rule(inc, exc, np.ones(2), POS, 0)
    assert conds == [(0, 1)]


def test_grow_picks_importance_weighted_best():
    inc = np.array([[1, 1], [1, 1], [0, 1]])
    exc = np.array([[0, 0], [0, 0], [1, 0]])
    # feature 0 alone separates worse than feature 1; importance can still favour it
    assert grow_rule(inc, exc, np.array([1.0, 1.0]), POS, 0) == [(1, 1)]
    assert grow_rule(inc, exc, np.array([1.0, 0.0]), POS, 0)[0] == (0, 1)


def _oracle_prune(conds, inc, exc):
    def value(c):
        r = Rule(POS, 0, tuple(c))
        p, n = coverage_mask(r, inc).sum(), coverage_mask(r, exc).sum()
        return -math.inf if p + n == 0 else (p - n) / (p + n)
    out = list(conds)
    while len(out) > 1 and value(out[:-1]) >= value(out):
        out = out[:-1]
    return out


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=1, max_size=5,
                unique_by=lambda c: c[0]),
       st.integers(0, 2**31 - 1))
def test_prune_matches_suffix_oracle(conds, seed):
    rng = np.random.default_rng(seed)
    inc, exc = rng.integers(2, size=(30, 5)), rng.integers(2, size=(30, 5))
    got = prune_rule(conds, inc, exc)
    assert got == _oracle_prune(conds, inc, exc)
    assert got == conds[:len(got)] and len(got) >= 1


def test_prune_value_empty_coverage():
    assert _prune_value([(0, 5)], np.zeros((3, 2), int), np.zeros((3, 2), int)) == -math.inf


def test_split_fractions(wall_data):
    _, q, _, E, scheme = wall_data
    ds = build_datasets(E, q, 0, NEG, scheme, seed=0)
    for split in (ds.inc_split, ds.exc_split):
        counts = np.bincount(split, minlength=3)
        assert counts.sum() == len(split)
        assert abs(counts[GROW] - 0.6 * len(split)) <= 1
        assert abs(counts[PRUNE] - 0.2 * len(split)) <= 1


def test_dataset_definitions(wall_data):
    _, q, _, E, scheme = wall_data
    D = scheme.discretize_batch(E.states)
    ds = build_datasets(E, q, 2, POS, scheme)
    assert len(ds.inc) == int((E.actions == 2).sum())
    assert len(ds.exc) == int((E.actions != 2).sum())
    ds = build_datasets(E, q, 0, NEG, scheme)
    amin = np.argmin(q.q_values(E.states), axis=1)
    assert np.array_equal(ds.inc, D[amin == 0])
    assert np.array_equal(ds.exc, D[E.actions == 0])
    with pytest.raises(ValueError):
        build_datasets(E, q, 0, "?", scheme)
    with pytest.raises(ValueError):
        build_datasets(Experience.empty(69, 5), q, 0, POS, scheme)


@pytest.fixture(scope="module")
def mined(wall_data):
    _, q, _, E, scheme = wall_data
    imp = aggregate_importance(q, E, scheme, n_feat=60, n_samples=300, seed=0)
    params = MineParams(seed=0)
    datasets = build_all_datasets(E, q, scheme, 5, params)
    rules = mine_rules(E, q, imp, scheme, params, datasets)
    return imp, datasets, rules


def test_running_example_rule_mined(mined):
    _, datasets, rules = mined
    target = Rule.make(NEG, 0, {62: 0})
    assert target in rules
    assert target in filter_rules(rules, datasets)


def test_mined_rules_cover_grow_examples(mined):
    _, datasets, rules = mined
    for r in rules:
        g_inc, _ = datasets[(r.action, r.polarity)].grow
        assert len(r) >= 1
        assert coverage_mask(r, g_inc).any()


def test_filter_contract(mined):
    _, datasets, rules = mined
    kept = filter_rules(rules, datasets)
    assert kept
    for r in kept:
        inc, exc = datasets[(r.action, r.polarity)].validation
        hi = sum(all(s[f] == v for f, v in r.body) for s in inc)
        he = sum(all(s[f] == v for f, v in r.body) for s in exc)
        assert hi / (hi + he) >= 0.9
        assert (hi + he) / (len(inc) + len(exc)) >= 0.01


def test_mining_deterministic(wall_data, mined):
    imp, _, rules = mined
    _, q, _, E, scheme = wall_data
    again = mine_rules(E, q, imp, scheme, MineParams(seed=0))
    assert [r.key for r in again] == [r.key for r in rules]


def _dataset(inc_hits, exc_hits, n_inc, n_exc):
    inc = np.zeros((n_inc, 1), int)
    exc = np.zeros((n_exc, 1), int)
    inc[:inc_hits] = 1
    exc[:exc_hits] = 1
    return LabeledDataset(0, POS, inc, exc, np.full(n_inc, VALID), np.full(n_exc, VALID))


def test_filter_arithmetic():
    r = Rule.make(POS, 0, {0: 1})
    assert filter_rules([r], {(0, POS): _dataset(8, 2, 20, 20)}) == []
    everywhere = Rule(POS, 0, ())
    kept = filter_rules([everywhere], {(0, POS): _dataset(0, 0, 20, 0)})
    assert kept == [everywhere] and kept[0].stats["accuracy"] == 1.0
    with pytest.raises(ValueError):
        filter_rules([r], {}, min_acc=1.5)


def test_mine_combination_separate_and_conquer():
    # two disjoint groups of inc examples need two rules
    inc = np.array([[1, 0]] * 6 + [[0, 1]] * 6)
    exc = np.array([[0, 0]] * 12)
    split = np.array([GROW, GROW, GROW, PRUNE, VALID, VALID] * 2)
    ds = LabeledDataset(0, POS, inc, exc, split, np.array([GROW, GROW, GROW, PRUNE, VALID, VALID] * 2))
    rules = mine_combination(ds, np.ones(2), MineParams())
    assert {r.body for r in rules} == {((0, 1),), ((1, 1),)}

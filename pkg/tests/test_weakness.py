import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruleguard.envs.gridpellets import GridPellets
from ruleguard.guided import EvalResult, evaluate_unguided, evaluate_with_guide
from ruleguard.metamorph import bundled_spec, parse_mr_spec
from ruleguard.rules import NEG, POS, Rule
from ruleguard.synthetic import east_blind_q
from ruleguard.weakness import (RT, RTConfig, RandomGuide, WeaknessReport, detect_weaknesses,
                                detection_ratio, read_reports_csv, reports_csv, rr_baseline,
                                rt_baseline, sample_random_rule_sets, state_bucket,
                                total_variation)

NORTH_WALL = Rule.make(NEG, 0, {62: 0})
IDLE_NEAR_CAPSULE = Rule.make(POS, 4, {0: 1})


@pytest.fixture(scope="module")
def planted(wall_data):
    _, _, _, _, scheme = wall_data
    env = GridPellets(layout="small")
    mrs = parse_mr_spec(bundled_spec("pacman_rotation"))
    return env, east_blind_q(), scheme, mrs


@pytest.fixture(scope="module")
def reports(planted):
    env, q, scheme, mrs = planted
    return detect_weaknesses(q, [NORTH_WALL, IDLE_NEAR_CAPSULE], mrs, env, scheme, n=30, seed=0)


def test_planted_weakness_found(reports):
    assert len(reports) == 2
    hit, miss = reports
    assert hit.weakness and hit.members == 4 and hit.guided.mean > hit.baseline.mean
    assert not miss.weakness and miss.p >= 0.5


def test_verdict_rederivable(reports):
    for r in reports:
        assert 0 <= r.p <= 1
        assert r.weakness == (r.guided.mean > r.baseline.mean and r.p < r.alpha)


def test_csv_roundtrip(reports):
    rows = read_reports_csv(reports_csv(reports))
    assert [int(r["weakness"]) for r in rows] == [int(r.weakness) for r in reports]
    assert [float(r["p"]) for r in rows] == [r.p for r in reports]
    assert rows[0]["origin"] == NORTH_WALL.text()
    assert detection_ratio(reports) == 0.5 and detection_ratio([]) == 0.0


def test_identical_behaviour_is_no_weakness():
    res = EvalResult.from_rewards([1.0, 2.0, 3.0])
    r = WeaknessReport.compare(RT, "x", None, [], res, res, 0.05)
    assert not r.weakness and r.p == pytest.approx(0.5)


class TestRandomTesting:
    def test_bucket_is_pure(self):
        d = np.array([0, 3, 1, 2])
        assert state_bucket(d, 7) == state_bucket(d.copy(), 7)
        assert 0 <= state_bucket(d, 7, 10) < 10
        buckets = {state_bucket(d, s) for s in range(50)}
        assert len(buckets) > 10

    def test_k_zero_equals_unguided(self, planted):
        env, q, scheme, _ = planted
        guide = RandomGuide(scheme, 5, 11, 0, "block")
        assert evaluate_with_guide(q, guide, 5, env, 0).rewards == evaluate_unguided(q, 5, env, 0).rewards

    def test_same_run_seed_same_map(self, planted):
        _, _, scheme, _ = planted
        a, b = RandomGuide(scheme, 5, 3, 3, "enforce"), RandomGuide(scheme, 5, 3, 3, "enforce")
        assert a.mapping == b.mapping and len(a.mapping) == 3

    def test_report_count(self, planted):
        env, q, scheme, _ = planted
        reps = rt_baseline(q, env, scheme, RTConfig(k=3, runs=4), n=3, seed=0)
        assert len(reps) == 8
        assert [r.label for r in reps[:2]] == ["rt-block-0", "rt-block-1"]
        again = rt_baseline(q, env, scheme, RTConfig(k=3, runs=4), n=3, seed=0)
        assert [r.guided.rewards for r in reps] == [r.guided.rewards for r in again]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RTConfig(k=101)
        with pytest.raises(ValueError):
            RTConfig(modes=("shuffle",))


MINED = [Rule.make(NEG, 0, {62: 0}), Rule.make(NEG, 2, {64: 0, 9: 1}),
         Rule.make(POS, 3, {12: 1, 65: 1, 0: 0}), Rule.make(POS, 1, {10: 1})]


class TestRandomRules:
    def test_unit_length(self):
        rules = [Rule.make(NEG, a, {62 + a: 0}) for a in range(4)]
        sets = sample_random_rule_sets(rules, [4], 20, seed=0)
        assert all(len(r) == 1 for s in sets for r in s)
        assert all(len(s) == 4 for s in sets)

    def test_conditions_from_pool(self):
        pool = {c for r in MINED for c in r.body}
        for s in sample_random_rule_sets(MINED, [1, 4], 50, seed=1):
            for r in s:
                assert set(r.body) <= pool
                assert r.provenance["kind"] == "random"

    def test_distributions_match(self):
        sets = sample_random_rule_sets(MINED, [4, 4, 1], 4000, seed=2)
        gen = [r for s in sets for r in s]
        assert len(gen) >= 10_000
        assert total_variation([len(r) for r in gen], [len(r) for r in MINED]) <= 0.05
        assert total_variation([r.polarity for r in gen], [r.polarity for r in MINED]) <= 0.05
        sizes = [len(s) for s in sets]
        assert total_variation(sizes, [4, 4, 1]) <= 0.05

    def test_needs_rules(self):
        with pytest.raises(ValueError):
            sample_random_rule_sets([], [1], 1, seed=0)

    def test_baseline_runs(self, planted):
        env, q, scheme, _ = planted
        reps = rr_baseline(q, env, scheme, MINED, [4], 3, n=3, seed=0)
        assert len(reps) == 3 and all(r.members == 4 for r in reps)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_total_variation_properties(a):
    assert total_variation(a, a) == 0
    assert total_variation(a, [9]) == pytest.approx(1)
    b = list(reversed(a))
    assert total_variation(a, b) == 0

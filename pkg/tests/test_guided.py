import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleguard.agent import FunctionQ
from ruleguard.envs.gridpellets import GridPellets
from ruleguard.featurespace import build_decile_scheme
from ruleguard.guided import (ENFORCE, FALLBACK, GREEDY, MASKED, EvalResult, RuleGuide,
                              evaluate_guided, evaluate_unguided, guided_choice)
from ruleguard.rules import NEG, POS, Rule
from ruleguard.synthetic import wall_avoidance_q


@pytest.fixture(scope="module")
def setup():
    env = GridPellets(layout="tiny")
    q = wall_avoidance_q()
    X = [env.reset(s) for s in range(5)]
    for _ in range(60):
        obs, _, done = env.step(int(np.random.default_rng(len(X)).integers(5)))
        X.append(obs)
        if done:
            X.append(env.reset(len(X)))
    return env, q, build_decile_scheme(np.array(X), env.schema)


def _b(*acts, n=5):
    m = np.zeros(n, bool)
    m[list(acts)] = True
    return m


class TestChoice:
    qv = np.array([0.0, 3.0, 1.0, 2.0, -1.0])

    def test_single_positive_enforced(self):
        assert guided_choice(self.qv, _b(4), _b(), np.random.default_rng(0)) == (4, ENFORCE)

    def test_two_positives_fall_to_masking(self):
        assert guided_choice(self.qv, _b(0, 2), _b(), np.random.default_rng(0)) == (1, GREEDY)
        assert guided_choice(self.qv, _b(0, 2), _b(1), np.random.default_rng(0)) == (3, MASKED)

    def test_conflict_blocks(self):
        a, kind = guided_choice(self.qv, _b(1), _b(1), np.random.default_rng(0))
        assert kind == MASKED and a == 3

    def test_all_blocked(self):
        draws = {guided_choice(self.qv, _b(), _b(0, 1, 2, 3, 4), np.random.default_rng(s))
                 for s in range(40)}
        assert {k for _, k in draws} == {FALLBACK}
        assert {a for a, _ in draws} == set(range(5))

    def test_epsilon_respects_mask(self):
        rng = np.random.default_rng(0)
        picks = {guided_choice(self.qv, _b(), _b(1, 3), rng, epsilon=1.0)[0] for _ in range(200)}
        assert picks == {0, 2, 4}


def test_empty_rule_set_equals_unguided(setup):
    env, q, scheme = setup
    g = evaluate_guided(q, [], 8, env, scheme, seed=3)
    u = evaluate_unguided(q, 8, env, seed=3)
    assert g.rewards == u.rewards and g.enforced == g.blocked == g.fallback == 0


def test_always_enforced(setup):
    env, q, scheme = setup
    res = evaluate_guided(q, [Rule(POS, 1, ())], 3, env, scheme, seed=0, record_events=True)
    assert res.events and all(e.kind == ENFORCE and e.action == 1 for e in res.events)
    assert res.enforced == len(res.events)


def test_everything_blocked_falls_back(setup):
    env, q, scheme = setup
    rules = [Rule(NEG, a, ()) for a in range(5)]
    res = evaluate_guided(q, rules, 3, env, scheme, seed=0, record_events=True)
    assert all(e.kind == FALLBACK for e in res.events)
    assert res.fallback == len(res.events) == res.blocked


def test_statistics_recomputed(setup):
    env, q, scheme = setup
    res = evaluate_unguided(q, 12, env, seed=1)
    assert res.mean == pytest.approx(np.mean(res.rewards))
    assert res.stderr == pytest.approx(np.std(res.rewards, ddof=1) / np.sqrt(12))
    assert res.n == 12 == len(res.rewards)


def test_deterministic_env_zero_stderr():
    env = GridPellets(layout="corridor")
    q = FunctionQ(lambda X: np.tile([0, 0, 1.0, 0, 0], (len(X), 1)), 5)
    res = evaluate_unguided(q, 5, env, seed=0)
    assert res.stderr == 0.0 and len(set(res.rewards)) == 1


def test_determinism_and_workers(setup):
    env, q, scheme = setup
    rules = [Rule.make(NEG, 2, {64: 1}), Rule.make(POS, 0, {62: 1, 63: 1})]
    a = evaluate_guided(q, rules, 6, env, scheme, seed=5)
    b = evaluate_guided(q, rules, 6, env, scheme, seed=5)
    c = evaluate_guided(q, rules, 6, env, scheme, seed=5, workers=2)
    assert a == b == c


def test_rule_arity_mismatch(setup):
    env, q, scheme = setup
    with pytest.raises(ValueError):
        evaluate_guided(q, [Rule.make(NEG, 0, {500: 0})], 1, env, scheme, seed=0)
    with pytest.raises(ValueError):
        RuleGuide([Rule.make(NEG, 7, {1: 0})], scheme, 5)
    with pytest.raises(ValueError):
        evaluate_unguided(q, 0, env, seed=0)


def test_serialization(setup):
    env, q, _ = setup
    res = evaluate_unguided(q, 3, env, seed=0)
    assert "events" not in res.to_json()
    assert res.rewards_csv().splitlines()[0] == "episode,reward"
    assert EvalResult(**{**res.to_json()}) == res


@settings(max_examples=30)
@given(st.lists(st.tuples(st.sampled_from([POS, NEG]), st.integers(0, 4),
                          st.dictionaries(st.sampled_from([62, 63, 64, 65, 9, 10, 11, 12]),
                                          st.integers(0, 1), max_size=2)),
                min_size=1, max_size=8), st.integers(0, 1000))
def test_blocked_actions_never_taken(setup, specs, seed):
    env, q, scheme = setup
    rules = [Rule.make(p, a, b) for p, a, b in specs]
    res = evaluate_guided(q, rules, 2, env, scheme, seed=seed, record_events=True)
    for e in res.events:
        if e.kind != FALLBACK:
            assert e.action not in e.blocked
        if len(e.enforced) == 1 and e.enforced[0] not in e.blocked:
            assert e.kind == ENFORCE and e.action == e.enforced[0]

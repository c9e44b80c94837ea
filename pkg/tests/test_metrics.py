import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowswitch import rng as rngmod
from lowswitch.mdp import make_hard_instance, make_random_mdp, policy_values
from lowswitch.metrics import (PolicyValueCache, RegretLedger, SwitchLedger, global_switch_cost,
                               local_switch_cost, switching_bound, total_local_switch_cost)

import oracles

policies = st.integers(1, 3).flatmap(
    lambda H: st.integers(1, 4).flatmap(
        lambda S: st.lists(st.lists(st.lists(st.integers(0, 2), min_size=S, max_size=S), min_size=H, max_size=H),
                           min_size=3, max_size=3)))


def test_local_switch_examples():
    assert local_switch_cost([[0, 1], [1, 1]], [[0, 1], [1, 1]]) == 0
    assert local_switch_cost([[0, 1], [1, 1]], [[1, 0], [0, 0]]) == 4
    assert local_switch_cost([[0, 1]], [[0, 2]]) == 1
    with pytest.raises(ValueError):
        local_switch_cost([[0, 1]], [[0, 1, 2]])


def test_global_switch_examples():
    a, b = [[0, 0]], [[1, 0]]
    assert global_switch_cost([a, a, b, b, a]) == 2
    assert global_switch_cost([a]) == 0 and global_switch_cost([]) == 0
    assert total_local_switch_cost([a, b, [[0, 1]]]) == 3


@settings(max_examples=100)
@given(policies)
def test_local_cost_is_a_metric(pols):
    p, q, r = pols
    assert local_switch_cost(p, q) == local_switch_cost(q, p)
    assert (local_switch_cost(p, q) == 0) == (np.asarray(p) == np.asarray(q)).all()
    assert local_switch_cost(p, r) <= local_switch_cost(p, q) + local_switch_cost(q, r)
    assert global_switch_cost(pols) <= total_local_switch_cost(pols)


@settings(max_examples=50)
@given(policies)
def test_ledger_matches_batch_counts(pols):
    H, S = len(pols[0]), len(pols[0][0])
    ledger = SwitchLedger(H, S)
    tables = [tuple(map(tuple, p)) for p in pols]
    for p in tables:
        ledger.record(p)
    assert ledger.local == total_local_switch_cost(tables) == ledger.per_pair.sum()
    assert ledger.global_ == global_switch_cost(tables)


def test_regret_ledger_on_hard_instance():
    H, S, A = 2, 3, 2
    a_star = np.array([[0, 1, 1], [1, 0, 0]])
    mdp = make_hard_instance(H, S, A, a_star)
    ledger = RegretLedger(mdp)
    wrong = 1 - a_star
    assert ledger.record(tuple(map(tuple, a_star.tolist())), 0) == pytest.approx(0.0)
    assert ledger.record(tuple(map(tuple, wrong.tolist())), 2) == pytest.approx(H)
    half = wrong.copy()
    half[0] = a_star[0]  # matches on S of the H S pairs
    assert ledger.record(half, 1) == pytest.approx(H - S / S)
    assert ledger.total == pytest.approx(sum(ledger.increments))


def test_value_cache_hits_are_identical():
    mdp = make_random_mdp(3, 4, 2, rngmod.generator(1))
    cache = PolicyValueCache(mdp)
    pol = rngmod.generator(2).integers(0, 2, size=(3, 4))
    first = cache.initial_values(pol)
    again = cache.initial_values(tuple(map(tuple, pol.tolist())))
    assert first is again and cache.hits == 1 and cache.misses == 1 and len(cache) == 1
    assert first == policy_values(mdp, pol).v[0].tolist()
    assert np.allclose(first, oracles.forward_values(mdp.transitions, mdp.rewards, pol[None])[0], atol=1e-12)


def test_switching_bound_formula():
    H, S, A, eta, r_star = 2, 3, 2, 1 / 12, 47
    tau = oracles.tau_mp(eta, r_star)
    for K in (1, 10, 10_000, 10**6):
        extra = max(0.0, math.log((K + H) / A) / math.log1p(eta) - r_star + 1)
        assert switching_bound(H, S, A, K, eta, r_star) == math.ceil(H * S * A * (tau + extra))
    # Small K: stage II contributes nothing and the bound is HSA tau(r*).
    assert switching_bound(1, 1, 2, 3, 1.0, 2) == 2 * 4
    assert switching_bound(1, 1, 1, 1, 1.0, 0) == 1 + (1 + 1)

"""Switching cost, exact regret accounting, and the deterministic switching bound."""

from __future__ import annotations

import math
import threading

import numpy as np

from lowswitch.mdp import MdpSpec, optimal_values, policy_values
from lowswitch.schedule import ceil_power


def _table(policy) -> np.ndarray:
    return np.asarray(policy, dtype=np.int64)


def local_switch_cost(p1, p2) -> int:
    """Number of ``(h, x)`` pairs on which two deterministic policies differ."""
    a, b = _table(p1), _table(p2)
    if a.shape != b.shape:
        raise ValueError(f"policy shapes differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def global_switch_cost(policies) -> int:
    """Number of consecutive pairs in ``policies`` that differ anywhere."""
    policies = list(policies)
    return sum(local_switch_cost(p, q) > 0 for p, q in zip(policies, policies[1:]))


def total_local_switch_cost(policies) -> int:
    policies = list(policies)
    return sum(local_switch_cost(p, q) for p, q in zip(policies, policies[1:]))


class SwitchLedger:
    """Running local and global switching cost over a sequence of episode policies."""

    def __init__(self, H: int, S: int):
        self.per_pair = np.zeros((H, S), dtype=np.int64)
        self.local = 0
        self.global_ = 0
        self._last = None

    def record(self, policy) -> int:
        """Register the policy of the next episode; returns the switches it adds."""
        last, self._last = self._last, policy
        if last is None or last is policy:
            return 0
        added = 0
        for h, (old_row, new_row) in enumerate(zip(last, policy)):
            if old_row != new_row:
                for x, (u, v) in enumerate(zip(old_row, new_row)):
                    if u != v:
                        self.per_pair[h, x] += 1
                        added += 1
        if added:
            self.local += added
            self.global_ += 1
        return added


class PolicyValueCache:
    """Exact initial-step values of deterministic policies, keyed by action table.

    Keys are tuples of tuples, so hashing is by content and equal hashes are
    resolved by full comparison. Inserts are serialized; lookups are lock-free.
    """

    def __init__(self, mdp: MdpSpec):
        self.mdp = mdp
        self._values: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._values)

    def initial_values(self, policy) -> list[float]:
        key = policy if isinstance(policy, tuple) else tuple(map(tuple, _table(policy).tolist()))
        values = self._values.get(key)
        if values is not None:
            self.hits += 1
            return values
        values = policy_values(self.mdp, key).v[0].tolist()
        with self._lock:
            self._values.setdefault(key, values)
        self.misses += 1
        return values

    def expected_value(self, policy) -> float:
        return float(np.dot(self.mdp.initial_dist, self.initial_values(policy)))


class RegretLedger:
    """Cumulative expected regret ``sum_k V*_1(x_1^k) - V^{pi_k}_1(x_1^k)``."""

    def __init__(self, mdp: MdpSpec, cache: PolicyValueCache | None = None):
        self.mdp = mdp
        self.optimal = optimal_values(mdp)
        self._v_star = self.optimal.v[0].tolist()
        self.cache = cache if cache is not None else PolicyValueCache(mdp)
        self.increments: list[float] = []
        self.total = 0.0

    def record(self, policy, x1: int) -> float:
        inc = self._v_star[x1] - self.cache.initial_values(policy)[x1]
        self.increments.append(inc)
        self.total += inc
        return inc


def switching_bound(H: int, S: int, A: int, K: int, eta: float, r_star: int) -> int:
    """Deterministic upper bound on the local switching cost of a UCB2-scheduled run.

    Each ``(h, x, a)`` triggers at most ``tau(r*)`` times in stage I and at most
    once per epoch index ``r`` in ``(r*, log_{1+eta}(K + H)]`` afterwards; one
    extra trigger per ``(h, x, a)`` covers the epoch straddling ``K``.
    """
    stage_one = ceil_power(eta, r_star)
    stage_two = max(0.0, math.log((K + H) / A) / math.log1p(eta) - r_star + 1)
    return math.ceil(H * S * A * (stage_one + stage_two))

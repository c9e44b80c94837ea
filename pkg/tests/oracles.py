"""Independent reference computations used by the tests.

Nothing here calls into the package's DP, schedule or learner code: values
come from forward propagation of state distributions over every policy,
trigger sets from high-precision powers, and the learner from a direct
array transcription of the update rule.
"""

from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np

mpmath.mp.dps = 60


def all_policies(H: int, S: int, A: int) -> np.ndarray:
    """Every deterministic policy, shape ``(A^(H S), H, S)``."""
    grid = np.array(list(itertools.product(range(A), repeat=H * S)), dtype=np.int64)
    return grid.reshape(-1, H, S)


def forward_values(transitions, rewards, policies) -> np.ndarray:
    """``V_1^pi(x1)`` for a stack of policies by pushing the state distribution forward.

    Returns shape ``(n_policies, S)``.
    """
    P, R = np.asarray(transitions), np.asarray(rewards)
    H, S, A = R.shape
    pols = np.asarray(policies).reshape(-1, H, S)
    n = len(pols)
    xs = np.arange(S)
    out = np.zeros((n, S))
    for x1 in range(S):
        dist = np.zeros((n, S))
        dist[:, x1] = 1.0
        for h in range(H):
            acts = pols[:, h, :]  # (n, S)
            out[:, x1] += np.sum(dist * R[h][xs, acts], axis=1)
            dist = np.einsum("ns,nsy->ny", dist, P[h][xs, acts])
    return out


def brute_force_optimal(transitions, rewards) -> np.ndarray:
    R = np.asarray(rewards)
    H, S, A = R.shape
    return forward_values(transitions, rewards, all_policies(H, S, A)).max(axis=0)


def mc_returns(transitions, rewards, initial_dist, policy, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Monte-Carlo episode returns."""
    P, R = np.asarray(transitions), np.asarray(rewards)
    H, S, A = R.shape
    pol = np.asarray(policy)
    x = rng.choice(S, size=n, p=np.asarray(initial_dist))
    total = np.zeros(n)
    for h in range(H):
        a = pol[h, x]
        total += R[h, x, a]
        cdf = np.cumsum(P[h, x, a], axis=1)
        u = rng.random(n)[:, None]
        x = np.minimum((u >= cdf).sum(axis=1), S - 1)
    return total


def tau_mp(eta, r: int) -> int:
    return int(mpmath.ceil(mpmath.power(1 + mpmath.mpf(eta), r)))


def default_params_mp(H: int) -> tuple[float, int]:
    eta = mpmath.mpf(1) / (2 * H * (H + 1))
    r_star = int(mpmath.ceil(mpmath.log(10 * H * H) / mpmath.log(1 + eta)))
    return float(eta), r_star


def trigger_set(eta: float, r_star: int, t_max: int) -> set[int]:
    """``{1..tau(r*)} U {tau(r) : r > r*}`` up to ``t_max``, from exact powers."""
    first = tau_mp(eta, r_star)
    out = set(range(1, min(first, t_max) + 1))
    r = r_star + 1
    while True:
        v = tau_mp(eta, r)
        if v > t_max:
            return out
        out.add(v)
        r += 1


def direct_q_learning(P, R, init, K, uniforms, c, ell, triggers=None):
    """Plain array transcription of optimistic Q-learning with delayed syncs.

    ``triggers=None`` syncs on every visit. Returns the per-episode policies,
    the trajectories, and the final tables.
    """
    P, R = np.asarray(P), np.asarray(R)
    H, S, A = R.shape
    q_run = np.full((H, S, A), float(H))
    q_pol = np.full((H, S, A), float(H))
    v = np.zeros((H + 1, S))
    v[:H] = H
    n = np.zeros((H, S, A), dtype=np.int64)
    cdf0 = np.cumsum(init)
    last0 = int(np.flatnonzero(np.asarray(init) > 0)[-1])
    scale = c * math.sqrt(H**3 * ell)
    policies, trajs = [], []
    for k in range(K):
        u = uniforms[k]
        policies.append(np.argmax(q_pol, axis=-1))
        x = min(int(np.searchsorted(cdf0, u[0], side="right")), last0)
        states, actions = [x], []
        for h in range(H):
            a = int(np.argmax(q_pol[h, x]))
            cdf = np.cumsum(P[h, x, a])
            last = int(np.flatnonzero(P[h, x, a] > 0)[-1])
            y = min(int(np.searchsorted(cdf, u[h + 1], side="right")), last)
            n[h, x, a] += 1
            t = n[h, x, a]
            alpha = (H + 1) / (H + t)
            b = scale / math.sqrt(t)
            q_run[h, x, a] = (1 - alpha) * q_run[h, x, a] + alpha * (R[h, x, a] + v[h + 1, y] + b)
            v[h, x] = min(float(H), q_run[h, x].max())
            if triggers is None or t in triggers:
                q_pol[h, x] = q_run[h, x]
            actions.append(a)
            x = y
            states.append(x)
        trajs.append((tuple(states), tuple(actions)))
    return policies, trajs, q_run, q_pol

"""Finite-horizon tabular MDPs: representation, simulation, exact evaluation.

Steps, states and actions are 0-based internally. Arrays follow the layout

* ``transitions[h, x, a, x']`` with shape ``(H, S, A, S)``
* ``rewards[h, x, a]`` with shape ``(H, S, A)``, deterministic, in ``[0, 1]``
* ``initial_dist[x]`` with shape ``(S,)``

Value tables carry an extra terminal row: ``v[H] == 0``.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12


class InvalidMdpError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid MDP: " + "; ".join(errors[:5]) + (" ..." if len(errors) > 5 else ""))


@dataclass(frozen=True)
class MdpSpec:
    transitions: np.ndarray
    rewards: np.ndarray
    initial_dist: np.ndarray

    def __post_init__(self):
        for name in ("transitions", "rewards", "initial_dist"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def H(self) -> int:
        return self.rewards.shape[0]

    @property
    def S(self) -> int:
        return self.rewards.shape[1]

    @property
    def A(self) -> int:
        return self.rewards.shape[2]

    def with_initial_state(self, x: int) -> "MdpSpec":
        """Same dynamics with a point-mass initial state."""
        dist = np.zeros(self.S)
        dist[x] = 1.0
        return MdpSpec(self.transitions, self.rewards, dist)

    def to_json(self) -> dict:
        return {
            "H": self.H,
            "S": self.S,
            "A": self.A,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MdpSpec":
        try:
            H, S, A = int(doc["H"]), int(doc["S"]), int(doc["A"])
            mdp = cls(
                np.asarray(doc["transitions"], dtype=float),
                np.asarray(doc["rewards"], dtype=float),
                np.asarray(doc["initial_dist"], dtype=float),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidMdpError([f"malformed MDP document: {exc}"]) from exc
        errors = validate(mdp)
        if mdp.rewards.ndim == 3 and (mdp.H, mdp.S, mdp.A) != (H, S, A):
            errors.insert(0, f"declared (H,S,A)=({H},{S},{A}) but arrays have {mdp.rewards.shape}")
        if errors:
            raise InvalidMdpError(errors)
        return mdp


def load_mdp(path: str | Path) -> MdpSpec:
    with open(path, encoding="utf-8") as fh:
        return MdpSpec.from_json(json.load(fh))


def save_mdp(mdp: MdpSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mdp.to_json(), fh)


def validate(mdp: MdpSpec) -> list[str]:
    """Every invariant violation, with indices. An empty list means the MDP is valid."""
    P, R, mu = mdp.transitions, mdp.rewards, mdp.initial_dist
    if R.ndim != 3 or min(R.shape, default=0) < 1:
        return [f"rewards must have shape (H, S, A) with positive sizes, got {R.shape}"]
    H, S, A = R.shape
    errors = []
    if P.shape != (H, S, A, S):
        errors.append(f"transitions must have shape {(H, S, A, S)}, got {P.shape}")
    if mu.shape != (S,):
        errors.append(f"initial_dist must have shape {(S,)}, got {mu.shape}")
    if errors:
        return errors

    for h, x, a in zip(*np.nonzero(~np.isfinite(R) | (R < 0.0) | (R > 1.0))):
        errors.append(f"reward at (h={h}, x={x}, a={a}) is {R[h, x, a]!r}, outside [0, 1]")
    row_sums = P.sum(axis=-1)
    bad_rows = (np.abs(row_sums - 1.0) > STOCHASTIC_TOL) | ~np.isfinite(row_sums)
    bad_rows |= (P < 0.0).any(axis=-1)
    for h, x, a in zip(*np.nonzero(bad_rows)):
        errors.append(
            f"transition row (h={h}, x={x}, a={a}) is not a probability vector "
            f"(sum={row_sums[h, x, a]!r}, min={P[h, x, a].min()!r})"
        )
    if abs(mu.sum() - 1.0) > STOCHASTIC_TOL or (mu < 0.0).any() or not np.isfinite(mu).all():
        errors.append(f"initial_dist is not a probability vector (sum={mu.sum()!r})")
    return errors


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]  # x_1 .. x_{H+1}
    actions: tuple[int, ...]
    rewards: tuple[float, ...]

    @property
    def H(self) -> int:
        return len(self.actions)

    @property
    def realized_return(self) -> float:
        return float(sum(self.rewards))

    def steps(self):
        """Yield ``(h, x, a, r, x_next)`` for each step."""
        s = self.states
        for h, (a, r) in enumerate(zip(self.actions, self.rewards)):
            yield h, s[h], a, r, s[h + 1]


@dataclass(frozen=True)
class ValueTables:
    v: np.ndarray  # (H + 1, S)
    q: np.ndarray | None = None  # (H, S, A)

    def greedy_policy(self) -> np.ndarray:
        if self.q is None:
            raise ValueError("greedy policy needs q tables")
        return np.argmax(self.q, axis=-1)


def _as_policy(mdp: MdpSpec, policy) -> np.ndarray:
    pol = np.asarray(policy, dtype=np.int64)
    if pol.shape != (mdp.H, mdp.S):
        raise ValueError(f"policy shape {pol.shape} does not match (H, S) = {(mdp.H, mdp.S)}")
    if pol.size and (pol.min() < 0 or pol.max() >= mdp.A):
        raise ValueError(f"policy actions must lie in [0, {mdp.A})")
    return pol


def optimal_values(mdp: MdpSpec) -> ValueTables:
    """Backward induction for V* and Q*."""
    H, S, A = mdp.H, mdp.S, mdp.A
    v = np.zeros((H + 1, S))
    q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        q[h] = mdp.rewards[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = q[h].max(axis=-1)
    return ValueTables(v, q)


def policy_values(mdp: MdpSpec, policy) -> ValueTables:
    """Exact V^pi and Q^pi of a deterministic policy."""
    pol = _as_policy(mdp, policy)
    H, S = mdp.H, mdp.S
    xs = np.arange(S)
    v = np.zeros((H + 1, S))
    q = np.zeros((H, S, mdp.A))
    for h in range(H - 1, -1, -1):
        q[h] = mdp.rewards[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = q[h][xs, pol[h]]
    return ValueTables(v, q)


def expected_initial_value(mdp: MdpSpec, values: ValueTables) -> float:
    return float(mdp.initial_dist @ values.v[0])


def make_random_mdp(H: int, S: int, A: int, rng: np.random.Generator) -> MdpSpec:
    """Dense random instance: normalized uniform transition weights, uniform rewards."""
    if min(H, S, A) < 1:
        raise ValueError("H, S, A must be positive")
    weights = rng.random((H, S, A, S))
    transitions = weights / weights.sum(axis=-1, keepdims=True)
    rewards = rng.random((H, S, A))
    return MdpSpec(transitions, rewards, np.full(S, 1.0 / S))


def make_hard_instance(H: int, S: int, A: int, a_star) -> MdpSpec:
    """Uniform transitions, reward 1 exactly on the hidden action table ``a_star``."""
    a_star = np.asarray(a_star, dtype=np.int64)
    if a_star.shape != (H, S):
        raise ValueError(f"a_star shape {a_star.shape} does not match (H, S) = {(H, S)}")
    if a_star.size and (a_star.min() < 0 or a_star.max() >= A):
        raise ValueError(f"a_star entries must lie in [0, {A})")
    transitions = np.full((H, S, A, S), 1.0 / S)
    rewards = np.zeros((H, S, A))
    hs = np.indices((H, S))
    rewards[hs[0], hs[1], a_star] = 1.0
    return MdpSpec(transitions, rewards, np.full(S, 1.0 / S))


def _inverse_cdf(p: np.ndarray) -> tuple[list[float], int]:
    cdf = np.cumsum(p).tolist()
    last = int(np.flatnonzero(p > 0)[-1])
    return cdf, last


class EpisodeSampler:
    """Simulates episodes from pre-drawn uniforms.

    ``u[0]`` picks x_1 and ``u[h + 1]`` picks x_{h+2}. Sampling uses inverse
    CDFs, so a point-mass row consumes its uniform without being affected by it.
    """

    def __init__(self, mdp: MdpSpec):
        self.mdp = mdp
        H, S, A = mdp.H, mdp.S, mdp.A
        self._init = _inverse_cdf(mdp.initial_dist)
        self._rows = [
            [[_inverse_cdf(mdp.transitions[h, x, a]) for a in range(A)] for x in range(S)]
            for h in range(H)
        ]
        self._rewards = mdp.rewards.tolist()

    @staticmethod
    def _draw(table: tuple[list[float], int], u: float) -> int:
        cdf, last = table
        return min(bisect.bisect_right(cdf, u), last)

    def initial_state(self, u: float) -> int:
        return self._draw(self._init, u)

    def sample(self, policy: Sequence[Sequence[int]], u: Sequence[float]) -> Trajectory:
        draw, rows, rew = self._draw, self._rows, self._rewards
        x = draw(self._init, u[0])
        states, actions, rewards = [x], [], []
        for h in range(self.mdp.H):
            a = policy[h][x]
            actions.append(a)
            rewards.append(rew[h][x][a])
            x = draw(rows[h][x][a], u[h + 1])
            states.append(x)
        return Trajectory(tuple(states), tuple(actions), tuple(rewards))


def sample_episode(mdp: MdpSpec, policy, rng: np.random.Generator) -> Trajectory:
    pol = _as_policy(mdp, policy).tolist()
    return EpisodeSampler(mdp).sample(pol, rng.random(mdp.H + 1))

"""Switch-budget experiment on the hard instance family.

Each draw picks a uniformly random optimal action table, builds the hard
instance, and runs a learner that may change its deployed action at a
``(h, x)`` pair only to an action never deployed there before, and only while
the cumulative local switching cost stays within a budget. The per-episode
value of the deployed policy is evaluated exactly and compared with the
counting bound ``H/A + N_switch^k / (S A)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lowswitch import rng as rngmod
from lowswitch.agents import AgentConfig, QLearner, run
from lowswitch.mdp import make_hard_instance
from lowswitch.metrics import PolicyValueCache


class BudgetedLearner(QLearner):
    """UCB2-scheduled learner whose action table only moves to untried actions, within a switch budget."""

    def __init__(self, config: AgentConfig, H: int, S: int, A: int, budget: int, **kwargs):
        super().__init__(config, H, S, A, **kwargs)
        self.budget = budget
        self.switches_used = 0
        self.suppressed = 0
        self._tried = [[{0} for _ in range(S)] for _ in range(H)]

    def _sync_row(self, h: int, x: int) -> None:
        row = self._q[h][x]
        self._q_policy[h][x] = row[:]
        tried = self._tried[h][x]
        untried = [a for a in range(self.A) if a not in tried]
        if not untried:
            return
        best = max(untried, key=row.__getitem__)  # first maximum among untried actions
        if row[best] <= row[self._actions[h][x]]:
            return
        if self.switches_used >= self.budget:
            self.suppressed += 1
            return
        self.switches_used += 1
        tried.add(best)
        self._actions[h][x] = best
        self._policy = tuple(tuple(r) for r in self._actions)


@dataclass(frozen=True)
class LowerBoundReport:
    H: int
    S: int
    A: int
    budget: int
    draws: int
    K: int
    mean_value: float  # mean over draws and episodes of E_x1[V_1^{pi_k}]
    mean_switch_term: float  # mean over draws and episodes of N_switch^k / (S A)
    counting_bound: float  # H/A + mean_switch_term
    std_error: float  # standard error of the per-draw mean of value - switch term
    max_switches: int
    initial_policy_value: float  # mean value of the first episode (no switch yet)

    @property
    def three_quarter_limit(self) -> float:
        return 0.75 * self.H + 0.05 * self.H

    @property
    def counting_margin(self) -> float:
        """``counting_bound + 3 SE - mean_value``; negative means the counting bound is exceeded."""
        return self.counting_bound + 3.0 * self.std_error - self.mean_value

    def as_dict(self) -> dict:
        return {
            "H": self.H, "S": self.S, "A": self.A, "budget": self.budget, "draws": self.draws, "K": self.K,
            "mean_value": self.mean_value,
            "mean_switch_term": self.mean_switch_term,
            "counting_bound": self.counting_bound,
            "std_error": self.std_error,
            "three_quarter_limit": self.three_quarter_limit,
            "counting_margin": self.counting_margin,
            "max_switches": self.max_switches,
            "initial_policy_value": self.initial_policy_value,
        }


def default_budget(H: int, S: int, A: int) -> int:
    return (H * S * A) // 2


def lower_bound_experiment(H: int, S: int, A: int, budget: int | None = None, draws: int = 200, K: int = 200,
                           seed: int = 0, config: AgentConfig | None = None) -> LowerBoundReport:
    budget = default_budget(H, S, A) if budget is None else budget
    if budget < 0 or draws < 1 or K < 1:
        raise ValueError("budget must be nonnegative, draws and K positive")
    config = config or AgentConfig(K=K)
    if config.K != K:
        config = AgentConfig(**{**config.__dict__, "K": K})

    values = np.empty((draws, K))
    switch_terms = np.empty((draws, K))
    max_switches = 0
    for d in range(draws):
        a_star = rngmod.generator(seed, (rngmod.LOWER_BOUND, d)).integers(0, A, size=(H, S))
        mdp = make_hard_instance(H, S, A, a_star)
        cache = PolicyValueCache(mdp)
        learner = BudgetedLearner(config, H, S, A, budget)
        uniforms = rngmod.episode_uniforms(seed, (rngmod.LOWER_BOUND, d, 1), 0, K, H)
        result = run(config, mdp, K, uniforms=uniforms, cache=cache, learner=learner)
        per_policy = {}
        for pol in result.episode_policies():
            if pol not in per_policy:
                per_policy[pol] = cache.expected_value(pol)
        values[d] = [per_policy[p] for p in result.episode_policies()]
        switch_terms[d] = result.n_switch / (S * A)
        max_switches = max(max_switches, result.total_switches)

    diff = (values - switch_terms).mean(axis=1)
    mean_switch = float(switch_terms.mean())
    return LowerBoundReport(
        H=H, S=S, A=A, budget=budget, draws=draws, K=K,
        mean_value=float(values.mean()),
        mean_switch_term=mean_switch,
        counting_bound=H / A + mean_switch,
        std_error=float(diff.std(ddof=1) / math.sqrt(draws)) if draws > 1 else math.inf,
        max_switches=max_switches,
        initial_policy_value=float(values[:, 0].mean()),
    )

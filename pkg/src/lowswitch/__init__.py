"""Tabular episodic Q-learning with low local switching cost.

Q-learning with UCB2-style delayed policy updates (Hoeffding and Bernstein
bonuses), the UCB2 bandit algorithm, a concurrent parallelization, and exact
dynamic-programming oracles for measuring regret and switching cost.
"""

from lowswitch.agents import AgentConfig, QLearner, RunResult, run
from lowswitch.mdp import (
    MdpSpec,
    make_hard_instance,
    make_random_mdp,
    optimal_values,
    policy_values,
)
from lowswitch.schedule import TriggerSchedule, default_params

__all__ = [
    "AgentConfig",
    "MdpSpec",
    "QLearner",
    "RunResult",
    "TriggerSchedule",
    "default_params",
    "make_hard_instance",
    "make_random_mdp",
    "optimal_values",
    "policy_values",
    "run",
]

__version__ = "0.1.0"

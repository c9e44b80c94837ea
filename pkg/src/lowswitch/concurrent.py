"""Concurrent Q-learning: M machines play the deployed policy in lockstep rounds.

A phase lasts while the deployed action table stays fixed. Every round, each
machine plays one episode under that table with its own substream keyed by
``(seed, phase, round)`` and row ``machine``. The round's trajectories are fed
to the learner in machine order; if episode ``m`` changes the deployed table,
episodes ``m+1..M`` are discarded and the next phase starts. Because a kept
episode was sampled under exactly the table the sequential learner would have
used, the kept trajectories replayed through a fresh learner reproduce the
run step for step.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from lowswitch import rng as rngmod
from lowswitch.agents import AgentConfig, EpisodeLog, QLearner, RunResult, extract_mixture_policy
from lowswitch.mdp import EpisodeSampler, MdpSpec, Trajectory, optimal_values
from lowswitch.metrics import PolicyValueCache


@dataclass(frozen=True)
class ConcurrentConfig:
    machines: int
    agent: AgentConfig
    total_episodes: int | None = None  # stop once this many episodes are kept
    max_rounds: int | None = None

    def __post_init__(self):
        if self.machines < 1:
            raise ValueError("need at least one machine")
        if self.total_episodes is None and self.max_rounds is None:
            raise ValueError("a stopping criterion is required: total_episodes or max_rounds")
        if self.total_episodes is not None and self.total_episodes < 0:
            raise ValueError("total_episodes must be nonnegative")
        if self.max_rounds is not None and self.max_rounds < 0:
            raise ValueError("max_rounds must be nonnegative")


@dataclass
class ConcurrentResult:
    machines: int
    rounds: int
    kept: int
    discarded: int
    trajectories: list  # kept trajectories in processing order
    uniforms: np.ndarray  # the substream rows that produced them
    episode_policies: list  # policy each kept episode was played with
    episode_triggers: list  # triggers fired while processing each kept episode
    switch_events: list  # (kept episode index, round) of every policy change
    phases: list = field(default_factory=list)  # (rounds, kept) per phase
    run: RunResult | None = None  # sequential-style log of the kept episodes

    @property
    def n_switch(self) -> int:
        return self.run.total_switches if self.run is not None else 0

    @property
    def final_policy(self):
        return self.run.learner.policy

    @property
    def speedup(self) -> float:
        return self.kept / self.rounds if self.rounds else 0.0

    def rounds_bound(self) -> int:
        """``N_switch + ceil(kept / M) + 1``."""
        return self.n_switch + math.ceil(self.kept / self.machines) + 1

    def summary(self) -> dict:
        return {
            "machines": self.machines,
            "rounds": self.rounds,
            "kept": self.kept,
            "discarded": self.discarded,
            "n_switch": self.n_switch,
            "speedup": self.speedup,
        }


def _play(sampler: EpisodeSampler, policy, rows) -> list[Trajectory]:
    return [sampler.sample(policy, u) for u in rows]


def run_concurrent(
    mdp: MdpSpec,
    config: ConcurrentConfig,
    seed: int = 0,
    *,
    executor: Executor | None = None,
    cache: PolicyValueCache | None = None,
) -> ConcurrentResult:
    """Simulate concurrent Q-learning; bit-identical with or without ``executor``.

    With an executor the machines of a round are split into chunks and sampled
    on workers; aggregation in machine order is the only synchronization point.
    """
    M, H = config.machines, mdp.H
    agent_cfg = config.agent
    log = EpisodeLog(mdp, cache)
    learner = QLearner(agent_cfg, H, mdp.S, mdp.A, q_star=log.regret.optimal.q)
    sampler = EpisodeSampler(mdp)

    trajectories, kept_rows, policies, triggers, switches, phases = [], [], [], [], [], []
    rounds = discarded = 0
    phase = 0
    phase_rounds = phase_kept = 0

    def done() -> bool:
        return (config.total_episodes is not None and len(trajectories) >= config.total_episodes) or (
            config.max_rounds is not None and rounds >= config.max_rounds
        )

    while not done():
        policy = learner.policy
        rows = rngmod.episode_uniforms(seed, (rngmod.CONCURRENT, phase, phase_rounds), 0, M, H)
        row_lists = rows.tolist()
        if executor is None or M == 1:
            batch = _play(sampler, policy, row_lists)
        else:
            chunk = -(-M // 4)
            parts = [row_lists[i : i + chunk] for i in range(0, M, chunk)]
            batch = [t for part in executor.map(_play, [sampler] * len(parts), [policy] * len(parts), parts)
                     for t in part]
        rounds += 1
        phase_rounds += 1

        switched = False
        for m, traj in enumerate(batch):
            fired = learner.observe_episode(traj)
            log.add(policy, traj, fired)
            trajectories.append(traj)
            kept_rows.append(rows[m])
            policies.append(policy)
            triggers.append(fired)
            phase_kept += 1
            switched = learner.policy is not policy
            if switched or (config.total_episodes is not None and len(trajectories) >= config.total_episodes):
                discarded += M - m - 1
                break
        if switched:
            switches.append((len(trajectories) - 1, rounds))
        if switched or done():
            phases.append((phase_rounds, phase_kept))
            phase += 1
            phase_rounds = phase_kept = 0

    run = log.result(agent_cfg, learner)
    return ConcurrentResult(
        machines=M,
        rounds=rounds,
        kept=len(trajectories),
        discarded=discarded,
        trajectories=trajectories,
        uniforms=np.asarray(kept_rows).reshape(-1, H + 1),
        episode_policies=policies,
        episode_triggers=triggers,
        switch_events=switches,
        phases=phases,
        run=run,
    )


def replay_equivalence_check(result: ConcurrentResult, agent_config: AgentConfig, mdp: MdpSpec) -> bool:
    """Replay the kept trajectories through a fresh sequential learner.

    True iff every kept trajectory acts according to the replayed learner's
    policy, and the policy snapshots and per-episode trigger counts match the
    concurrent run's records exactly.
    """
    learner = QLearner(agent_config, mdp.H, mdp.S, mdp.A)
    if not (len(result.trajectories) == len(result.episode_policies) == len(result.episode_triggers)):
        return False
    for traj, policy, fired in zip(result.trajectories, result.episode_policies, result.episode_triggers):
        current = learner.policy
        if current != policy:
            return False
        if any(current[h][x] != a for h, (x, a) in enumerate(zip(traj.states, traj.actions))):
            return False
        if learner.observe_episode(traj) != fired:
            return False
    return learner.policy == result.final_policy


@dataclass(frozen=True)
class MistakeReport:
    epsilon: float
    exploration_actions: int  # rounds * H * M, counting idle machines in partial rounds
    suboptimal_episodes: int  # kept episodes whose policy is worse than V* - epsilon
    mixture_gap: float
    mixture_is_optimal: bool
    post_exploration_mistakes: int | None  # 0 once the output mixture is epsilon-optimal


def mistake_bound_report(result: ConcurrentResult, mdp: MdpSpec, epsilon: float,
                         cache: PolicyValueCache | None = None) -> MistakeReport:
    """Mistake accounting of the exploration phase, values averaged over the initial distribution."""
    cache = cache or PolicyValueCache(mdp)
    v_star = float(mdp.initial_dist @ optimal_values(mdp).v[0])
    suboptimal = sum(cache.expected_value(p) < v_star - epsilon for p in result.episode_policies)
    mixture = extract_mixture_policy(result.run)
    gap = v_star - sum(w * cache.expected_value(p) for p, w in zip(mixture.policies, mixture.weights))
    ok = gap <= epsilon
    return MistakeReport(
        epsilon=epsilon,
        exploration_actions=result.rounds * mdp.H * result.machines,
        suboptimal_episodes=int(suboptimal),
        mixture_gap=float(gap),
        mixture_is_optimal=ok,
        post_exploration_mistakes=0 if ok else None,
    )


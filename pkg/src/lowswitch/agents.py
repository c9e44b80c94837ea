"""Q-learning with UCB2-scheduled policy updates.

Two value tables are kept per learner: the running estimate, updated on every
visit with the ``(H+1)/(H+t)`` stepsize and an optimism bonus, and the delayed
copy that actually picks actions. A row of the delayed copy is refreshed only
when the visit count of the action just taken hits the triggering sequence,
so the deployed policy changes rarely. The vanilla variant refreshes on every
visit.

Tables are nested Python lists on the hot path; numpy views are exposed as
properties.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from lowswitch import rng as rngmod
from lowswitch.mdp import EpisodeSampler, MdpSpec, Trajectory, optimal_values
from lowswitch.metrics import PolicyValueCache, RegretLedger, SwitchLedger
from lowswitch.schedule import AlwaysTrigger, TriggerSchedule, default_params

VARIANTS = ("ucb2-hoeffding", "ucb2-bernstein", "vanilla-hoeffding")
OPTIMISM_TOL = 1e-9


@dataclass(frozen=True)
class AgentConfig:
    variant: str = "ucb2-hoeffding"
    eta: float | None = None  # None: 1 / (2H(H+1))
    r_star: int | None = None  # None: ceil(ln(10 H^2) / ln(1 + eta))
    c: float = 1.0
    c1: float = 1.0
    c2: float = 2.0
    p: float = 0.1
    K: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if min(self.c, self.c1, self.c2) <= 0:
            raise ValueError("bonus constants must be positive")
        if not 0.0 < self.p < 1.0:
            raise ValueError("failure probability p must lie in (0, 1)")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.r_star is not None and self.r_star < 0:
            raise ValueError("r_star must be nonnegative")

    def resolved(self, H: int) -> "AgentConfig":
        """Copy with ``eta`` and ``r_star`` filled in from the horizon defaults."""
        eta, r_star = default_params(H)
        return AgentConfig(**{**asdict(self), "eta": self.eta or eta,
                              "r_star": self.r_star if self.r_star is not None else r_star})

    def schedule(self, H: int):
        if self.variant == "vanilla-hoeffding":
            return AlwaysTrigger()
        cfg = self.resolved(H)
        return TriggerSchedule(cfg.eta, cfg.r_star)

    def log_factor(self, H: int, S: int, A: int) -> float:
        """``ell = ln(S A T / p)`` with ``T = K H``."""
        return math.log(S * A * max(self.K, 1) * H / self.p)


def argmax_first(row) -> int:
    best, arg = row[0], 0
    for i in range(1, len(row)):
        if row[i] > best:
            best, arg = row[i], i
    return arg


def bonus_hoeffding(t: int, H: int, ell: float, c: float) -> float:
    return c * math.sqrt(H**3 * ell / t)


def sample_variance_w(t: int, mu_acc: float, sigma_acc: float) -> float:
    """Empirical variance ``sigma/t - (mu/t)^2`` of the accumulated next-step values."""
    mean = mu_acc / t
    return max(0.0, sigma_acc / t - mean * mean)


def beta_bernstein(t: int, w: float, H: int, S: int, A: int, ell: float, c1: float, c2: float) -> float:
    variance_term = c1 * (math.sqrt(H / t * (w + H) * ell) + math.sqrt(H**7 * S * A) * ell / t)
    return min(variance_term, c2 * math.sqrt(H**3 * ell / t))


def bonus_bernstein(beta_t: float, beta_prev: float, alpha_t: float) -> float:
    """Per-step bonus whose alpha-weighted sum telescopes to ``beta_t / 2``. Not clamped."""
    if alpha_t == 0:
        raise ValueError("alpha_t must be positive")
    return (beta_t - (1.0 - alpha_t) * beta_prev) / (2.0 * alpha_t)


class QLearner:
    """Learner state and the per-step update.

    ``policy`` is the greedy action table of the delayed copy, as a tuple of
    tuples; it is a new object exactly when some action changed, which makes
    switch detection an identity check.
    """

    def __init__(self, config: AgentConfig, H: int, S: int, A: int, *, q_star=None, trace_bonuses=False):
        self.config = config.resolved(H) if config.variant != "vanilla-hoeffding" else config
        self.H, self.S, self.A = H, S, A
        self.schedule = config.schedule(H)
        self.bernstein = config.variant == "ucb2-bernstein"
        self.ell = config.log_factor(H, S, A)
        self._hoeffding_scale = config.c * math.sqrt(H**3 * self.ell)

        self._q = [[[float(H)] * A for _ in range(S)] for _ in range(H)]
        self._q_policy = [[[float(H)] * A for _ in range(S)] for _ in range(H)]
        self._v = [[float(H)] * S for _ in range(H)] + [[0.0] * S]
        self._n = [[[0] * A for _ in range(S)] for _ in range(H)]
        self._mu = [[[0.0] * A for _ in range(S)] for _ in range(H)]
        self._sigma = [[[0.0] * A for _ in range(S)] for _ in range(H)]
        self._beta = [[[0.0] * A for _ in range(S)] for _ in range(H)]
        self._actions = [[0] * S for _ in range(H)]
        self._policy = tuple(tuple(row) for row in self._actions)

        self._q_star = None if q_star is None else np.asarray(q_star).tolist()
        self.optimism_violations = 0
        self.bonus_trace = {} if trace_bonuses else None
        self.triggers_fired = 0

    # -- views -------------------------------------------------------------
    @property
    def policy(self) -> tuple[tuple[int, ...], ...]:
        return self._policy

    @property
    def q_running(self) -> np.ndarray:
        return np.array(self._q)

    @property
    def q_policy(self) -> np.ndarray:
        return np.array(self._q_policy)

    @property
    def v_running(self) -> np.ndarray:
        return np.array(self._v)

    @property
    def visits(self) -> np.ndarray:
        return np.array(self._n, dtype=np.int64)

    # -- acting and learning -----------------------------------------------
    def act(self, h: int, x: int) -> int:
        return self._actions[h][x]

    def _sync_row(self, h: int, x: int) -> None:
        row = self._q[h][x]
        self._q_policy[h][x] = row[:]
        a = argmax_first(row)
        if a != self._actions[h][x]:
            self._actions[h][x] = a
            self._policy = tuple(tuple(r) for r in self._actions)

    def observe(self, h: int, x: int, a: int, r: float, x_next: int) -> bool:
        """One update of the running estimate; returns whether the policy row was synced."""
        H = self.H
        n_row = self._n[h][x]
        t = n_row[a] + 1
        n_row[a] = t
        alpha = (H + 1) / (H + t)
        v_next = self._v[h + 1][x_next]
        if self.bernstein:
            mu = self._mu[h][x]
            sigma = self._sigma[h][x]
            mu[a] += v_next
            sigma[a] += v_next * v_next
            w = sample_variance_w(t, mu[a], sigma[a])
            cfg = self.config
            beta = beta_bernstein(t, w, H, self.S, self.A, self.ell, cfg.c1, cfg.c2)
            beta_row = self._beta[h][x]
            b = (beta - (1.0 - alpha) * beta_row[a]) / (2.0 * alpha)
            beta_row[a] = beta
        else:
            b = self._hoeffding_scale / math.sqrt(t)
        if self.bonus_trace is not None:
            self.bonus_trace.setdefault((h, x, a), []).append((b, beta if self.bernstein else None))

        row = self._q[h][x]
        q = (1.0 - alpha) * row[a] + alpha * (r + v_next + b)
        row[a] = q
        best = max(row)
        self._v[h][x] = best if best < H else float(H)
        if self._q_star is not None and q + OPTIMISM_TOL < self._q_star[h][x][a]:
            self.optimism_violations += 1

        if self.schedule.is_trigger(t):
            self._sync_row(h, x)
            self.triggers_fired += 1
            return True
        return False

    def observe_episode(self, traj: Trajectory) -> int:
        """Feed a whole trajectory; returns the number of triggers fired."""
        fired = 0
        s = traj.states
        observe = self.observe
        for h, (a, r) in enumerate(zip(traj.actions, traj.rewards)):
            fired += observe(h, s[h], a, r, s[h + 1])
        return fired


@dataclass
class RunResult:
    """Per-episode log of a run, in columns.

    ``n_switch[k]`` and ``n_switch_gl[k]`` count the switches among the
    policies of episodes ``0..k``, i.e. the cost accrued before episode ``k``
    is played; the last entries are the run's totals.
    """

    H: int
    S: int
    A: int
    config: AgentConfig
    initial_states: np.ndarray
    regret: np.ndarray  # expected regret increment of each episode
    returns: np.ndarray  # realized return of each episode
    n_switch: np.ndarray
    n_switch_gl: np.ndarray
    triggers: np.ndarray  # triggers fired during each episode
    snapshots: list = field(default_factory=list)  # (first episode, policy) at every change
    switch_per_pair: np.ndarray | None = None
    optimism_violations: int = 0
    learner: QLearner | None = None

    @property
    def K(self) -> int:
        return len(self.regret)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def total_regret(self) -> float:
        return float(self.regret.sum())

    @property
    def total_switches(self) -> int:
        return int(self.n_switch[-1]) if self.K else 0

    @property
    def total_global_switches(self) -> int:
        return int(self.n_switch_gl[-1]) if self.K else 0

    def episode_policies(self):
        """Policy of every episode, expanded from the snapshots."""
        out = []
        for (start, pol), nxt in zip(self.snapshots, self.snapshots[1:] + [(self.K, None)]):
            out.extend([pol] * (nxt[0] - start))
        return out

    def records(self):
        """One dict per episode in the documented JSONL field order."""
        cum = self.cumulative_regret
        for k in range(self.K):
            yield {
                "episode": k + 1,
                "initial_state": int(self.initial_states[k]),
                "regret_increment": float(self.regret[k]),
                "cumulative_regret": float(cum[k]),
                "n_switch": int(self.n_switch[k]),
                "n_switch_gl": int(self.n_switch_gl[k]),
                "triggers": int(self.triggers[k]),
                "realized_return": float(self.returns[k]),
            }


class EpisodeLog:
    """Accumulates per-episode bookkeeping shared by sequential and concurrent runs."""

    def __init__(self, mdp: MdpSpec, cache: PolicyValueCache | None = None):
        self.mdp = mdp
        self.regret = RegretLedger(mdp, cache)
        self.switches = SwitchLedger(mdp.H, mdp.S)
        self.x1, self.returns, self.n_switch, self.n_switch_gl, self.triggers = [], [], [], [], []
        self.snapshots = []
        self._last = None

    def add(self, policy, traj: Trajectory, fired: int) -> None:
        if policy is not self._last:
            self.switches.record(policy)
            self.snapshots.append((len(self.x1), policy))
            self._last = policy
        x1 = traj.states[0]
        self.regret.record(policy, x1)
        self.x1.append(x1)
        self.returns.append(sum(traj.rewards))
        self.n_switch.append(self.switches.local)
        self.n_switch_gl.append(self.switches.global_)
        self.triggers.append(fired)

    def result(self, config: AgentConfig, learner: QLearner) -> RunResult:
        mdp = self.mdp
        return RunResult(
            H=mdp.H, S=mdp.S, A=mdp.A, config=config,
            initial_states=np.asarray(self.x1, dtype=np.int64),
            regret=np.asarray(self.regret.increments, dtype=float),
            returns=np.asarray(self.returns, dtype=float),
            n_switch=np.asarray(self.n_switch, dtype=np.int64),
            n_switch_gl=np.asarray(self.n_switch_gl, dtype=np.int64),
            triggers=np.asarray(self.triggers, dtype=np.int64),
            snapshots=self.snapshots,
            switch_per_pair=self.switches.per_pair.copy(),
            optimism_violations=learner.optimism_violations,
            learner=learner,
        )


def run(
    config: AgentConfig,
    mdp: MdpSpec,
    K: int | None = None,
    seed: int = 0,
    *,
    uniforms=None,
    cache: PolicyValueCache | None = None,
    trace_bonuses: bool = False,
    learner: QLearner | None = None,
) -> RunResult:
    """Play ``K`` episodes and log exact regret and switching cost.

    Episode ``k`` draws its randomness from row ``k`` of the sequential
    substream of ``seed``, unless ``uniforms`` (one row of ``H + 1`` uniforms per
    episode) is given. Within an episode the row for step ``h`` is read before
    it can be written, so the trajectory equals one sampled under the policy
    in force at the start of the episode.
    """
    K = config.K if K is None else K
    if K != config.K:
        raise ValueError(f"config declares K={config.K} but {K} episodes were requested")
    H = mdp.H
    log = EpisodeLog(mdp, cache)
    if learner is None:
        learner = QLearner(config, H, mdp.S, mdp.A, q_star=log.regret.optimal.q, trace_bonuses=trace_bonuses)
    if uniforms is None:
        uniforms = rngmod.episode_uniforms(seed, (rngmod.SEQUENTIAL,), 0, K, H)
    rows = np.asarray(uniforms, dtype=float).reshape(-1, H + 1).tolist()
    if len(rows) < K:
        raise ValueError(f"{len(rows)} uniform rows supplied for {K} episodes")
    sampler = EpisodeSampler(mdp)
    for k in range(K):
        policy = learner.policy
        traj = sampler.sample(policy, rows[k])
        log.add(policy, traj, learner.observe_episode(traj))
    return log.result(config, learner)


@dataclass(frozen=True)
class MixturePolicy:
    policies: tuple  # distinct action tables
    weights: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.policies)


def extract_mixture_policy(result: RunResult) -> MixturePolicy:
    """Uniform mixture over the episode policies, with duplicates merged."""
    if result.K == 0:
        raise ValueError("cannot extract a mixture from an empty run")
    counts: dict = {}
    ends = [s for s, _ in result.snapshots[1:]] + [result.K]
    for (start, pol), end in zip(result.snapshots, ends):
        counts[pol] = counts.get(pol, 0) + (end - start)
    total = float(result.K)
    return MixturePolicy(tuple(counts), tuple(c / total for c in counts.values()))


def pac_gap(mdp: MdpSpec, mixture: MixturePolicy, x1: int, cache: PolicyValueCache | None = None) -> float:
    """``V*_1(x1) - sum_j w_j V^{pi_j}_1(x1)``."""
    cache = cache or PolicyValueCache(mdp)
    v_star = optimal_values(mdp).v[0][x1]
    mixed = sum(w * cache.initial_values(p)[x1] for p, w in zip(mixture.policies, mixture.weights))
    return float(v_star - mixed)

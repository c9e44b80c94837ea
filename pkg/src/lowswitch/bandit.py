"""UCB2 for stochastic multi-armed bandits, with a UCB1 baseline.

UCB2 plays the arm maximizing ``mean + confidence_radius`` for a whole epoch
of ``tau(r + 1) - tau(r)`` pulls, so the number of arm changes grows only
logarithmically in the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lowswitch.schedule import ceil_power


@dataclass(frozen=True)
class BanditInstance:
    means: tuple[float, ...]

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        if not means:
            raise ValueError("a bandit needs at least one arm")
        if any(not 0.0 <= m <= 1.0 for m in means):
            raise ValueError(f"arm means must lie in [0, 1], got {means}")
        object.__setattr__(self, "means", means)

    @property
    def A(self) -> int:
        return len(self.means)

    @property
    def gaps(self) -> np.ndarray:
        mu = np.asarray(self.means)
        return mu.max() - mu


@dataclass
class BanditRunResult:
    arms: np.ndarray  # arm chosen at every pull
    pseudo_regret: np.ndarray  # cumulative sum of gaps
    epochs: list = field(default_factory=list)  # (arm, epoch index before the epoch, pulls played)
    epoch_counts: np.ndarray | None = None  # completed epochs r_j per arm (UCB2 only)

    @property
    def T(self) -> int:
        return len(self.arms)

    @property
    def switches(self) -> int:
        return int(np.count_nonzero(self.arms[1:] != self.arms[:-1]))

    @property
    def regret(self) -> float:
        return float(self.pseudo_regret[-1]) if len(self.pseudo_regret) else 0.0


def confidence_radius(t: float, r: int, eta: float) -> float:
    """``sqrt((1 + eta) ln(e t / tau(r)) / (2 tau(r)))``, clamped at zero."""
    tau = ceil_power(eta, r)
    arg = (1.0 + eta) * (1.0 + math.log(t / tau)) / (2.0 * tau)
    return math.sqrt(max(arg, 0.0))


def _bernoulli_block(rng: np.random.Generator, mean: float, n: int) -> float:
    return float(np.count_nonzero(rng.random(n) < mean))


def run_ucb2(instance: BanditInstance, T: int, eta: float, rng: np.random.Generator) -> BanditRunResult:
    A = instance.A
    if T < A:
        raise ValueError(f"horizon T={T} is shorter than the number of arms A={A}")
    means, gaps = instance.means, instance.gaps
    arms = np.empty(T, dtype=np.int64)
    sums = [0.0] * A
    pulls = [0] * A
    epoch = [0] * A
    epochs = []

    for j in range(A):
        sums[j] += _bernoulli_block(rng, means[j], 1)
        pulls[j] = 1
        arms[j] = j
    t = A
    while t < T:
        index = [sums[j] / pulls[j] + confidence_radius(t, epoch[j], eta) for j in range(A)]
        j = max(range(A), key=index.__getitem__)  # first maximum: lowest index on ties
        full = max(1, ceil_power(eta, epoch[j] + 1) - ceil_power(eta, epoch[j]))
        length = min(full, T - t)
        sums[j] += _bernoulli_block(rng, means[j], length)
        pulls[j] += length
        arms[t : t + length] = j
        epochs.append((j, epoch[j], length))
        if length == full:  # a final epoch cut off at T does not advance r_j
            epoch[j] += 1
        t += length
    return BanditRunResult(arms, np.cumsum(gaps[arms]), epochs, np.asarray(epoch))


def run_ucb1_baseline(instance: BanditInstance, T: int, rng: np.random.Generator) -> BanditRunResult:
    """Classical index ``mean + sqrt(2 ln t / n_j)``, one pull per selection."""
    A = instance.A
    if T < A:
        raise ValueError(f"horizon T={T} is shorter than the number of arms A={A}")
    means, gaps = instance.means, instance.gaps
    u = rng.random(T).tolist()
    arms = np.empty(T, dtype=np.int64)
    sums = [0.0] * A
    pulls = [0] * A
    log, sqrt = math.log, math.sqrt
    for t in range(T):
        if t < A:
            j = t
        else:
            two_log = 2.0 * log(t)
            best, j = -1.0, 0
            for i in range(A):
                value = sums[i] / pulls[i] + sqrt(two_log / pulls[i])
                if value > best:
                    best, j = value, i
        sums[j] += 1.0 if u[t] < means[j] else 0.0
        pulls[j] += 1
        arms[t] = j
    return BanditRunResult(arms, np.cumsum(gaps[arms]))


def ucb2_switch_bound(A: int, T: int, eta: float) -> float:
    """``A (1 + ln((T + A)/A) / ln(1 + eta)) + A``: epochs per arm by convexity, plus initialization."""
    return A * (1.0 + math.log((T + A) / A) / math.log1p(eta)) + A

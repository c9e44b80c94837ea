"""UCB2 triggering sequence and the Q-learning stepsize machinery.

The delayed policy table of a state-action pair is synced on visit counts in
the triggering sequence ``{1, ..., tau(r*)} U {tau(r* + 1), tau(r* + 2), ...}``
with ``tau(r) = ceil((1 + eta) ** r)``. The learning rate is
``alpha_t = (H + 1) / (H + t)``; ``alpha_weights`` gives the weight of the
i-th update inside the t-th estimate.

Besides the schedule itself this module carries the numeric checks of the
stepsize properties and of the error-accumulation bound under delayed updates.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass, field

import numpy as np

_SNAP = 1e-9


def default_params(H: int) -> tuple[float, int]:
    """``eta = 1 / (2H(H+1))`` and ``r* = ceil(ln(10 H^2) / ln(1 + eta))``."""
    if H < 1:
        raise ValueError("H must be positive")
    eta = 1.0 / (2 * H * (H + 1))
    r_star = math.ceil(math.log(10 * H * H) / math.log1p(eta))
    return eta, r_star


def ceil_power(eta: float, r: int) -> int:
    """``ceil((1 + eta) ** r)`` with exact integer powers left untouched."""
    x = (1.0 + eta) ** r
    nearest = round(x)
    if abs(x - nearest) < _SNAP * max(1.0, x):
        return int(nearest)
    return math.ceil(x)


class TriggerSchedule:
    """The two-stage UCB2 triggering sequence for one ``(eta, r*)`` pair.

    Stage-II triggers are generated lazily; the cache only ever grows and is
    extended under a lock, so concurrent readers see a consistent prefix.
    """

    always = False

    def __init__(self, eta: float, r_star: int):
        if not 0.0 < eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {eta}")
        if r_star < 0:
            raise ValueError(f"r_star must be nonnegative, got {r_star}")
        self.eta = float(eta)
        self.r_star = int(r_star)
        self.stage_one_end = ceil_power(self.eta, self.r_star)
        self._stage_two: list[int] = []  # strictly increasing, all > stage_one_end
        self._next_r = self.r_star + 1
        self._lock = threading.Lock()

    @classmethod
    def for_horizon(cls, H: int) -> "TriggerSchedule":
        return cls(*default_params(H))

    def __repr__(self) -> str:
        return f"TriggerSchedule(eta={self.eta!r}, r_star={self.r_star})"

    def tau(self, r: int) -> int:
        if r < 0:
            raise ValueError("r must be nonnegative")
        return ceil_power(self.eta, r)

    def _extend(self, t: int) -> None:
        with self._lock:
            stage_two = self._stage_two
            while not stage_two or stage_two[-1] < t:
                value = ceil_power(self.eta, self._next_r)
                self._next_r += 1
                if value > self.stage_one_end and (not stage_two or value > stage_two[-1]):
                    stage_two.append(value)

    def is_trigger(self, t: int) -> bool:
        if t <= self.stage_one_end:
            return t >= 1
        stage_two = self._stage_two
        if not stage_two or stage_two[-1] < t:
            self._extend(t)
        i = bisect.bisect_left(stage_two, t)
        return stage_two[i] == t

    def tau_last(self, t: int) -> int:
        """Largest trigger ``<= t``; 0 for ``t = 0``."""
        if t <= self.stage_one_end:
            return max(t, 0)
        self._extend(t)
        i = bisect.bisect_right(self._stage_two, t)
        return self._stage_two[i - 1] if i else self.stage_one_end

    def next_trigger(self, t: int) -> int:
        """Smallest trigger ``>= t``."""
        if t <= self.stage_one_end:
            return max(t, 1)
        self._extend(t)
        return self._stage_two[bisect.bisect_left(self._stage_two, t)]

    def triggers(self, t_max: int) -> np.ndarray:
        """All triggers ``<= t_max`` in increasing order."""
        first = np.arange(1, min(t_max, self.stage_one_end) + 1)
        if t_max <= self.stage_one_end:
            return first
        self._extend(t_max)
        i = bisect.bisect_right(self._stage_two, t_max)
        return np.concatenate([first, np.asarray(self._stage_two[:i], dtype=np.int64)])


class AlwaysTrigger:
    """Schedule of the vanilla learner: every visit syncs the policy."""

    always = True
    eta = None
    r_star = None

    def is_trigger(self, t: int) -> bool:
        return t >= 1

    def tau_last(self, t: int) -> int:
        return max(t, 0)

    def next_trigger(self, t: int) -> int:
        return max(t, 1)

    def triggers(self, t_max: int) -> np.ndarray:
        return np.arange(1, t_max + 1)


def alpha(H: int, t: int) -> float:
    if t < 1:
        raise ValueError("alpha_t is defined for t >= 1")
    return (H + 1) / (H + t)


@dataclass
class StepSizeTable:
    """Forward-recursive weights ``alpha_t^i`` for ``i = 0..t``, cached by ``t``."""

    H: int
    _rows: list = field(default_factory=lambda: [np.ones(1)], repr=False)

    def weights(self, t: int) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        rows = self._rows
        while len(rows) <= t:
            s = len(rows)
            a = alpha(self.H, s)
            rows.append(np.append(rows[-1] * (1.0 - a), a))
        return rows[t]


def alpha_weights(H: int, t: int) -> np.ndarray:
    """``(alpha_t^0, alpha_t^1, ..., alpha_t^t)`` by forward recursion."""
    w = np.ones(1)
    for s in range(1, t + 1):
        a = alpha(H, s)
        w = np.append(w * (1.0 - a), a)
    return w


def alpha_weight(H: int, t, i: int):
    """Closed form ``alpha_t^i = alpha_i * prod_m (i+m)/(t+m)`` over ``m = 0..H``, for ``t >= i >= 1``.

    Vectorized over ``t``.
    """
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, alpha(H, i))
    for m in range(H + 1):
        out = out * ((i + m) / (t + m))
    return out


def alpha_tail(H: int, i: int, start) -> np.ndarray:
    """``sum_{t >= start} alpha_t^i`` in closed form (telescoping), for ``start >= i >= 1``."""
    start = np.asarray(start, dtype=float)
    out = np.full(start.shape, alpha(H, i) / H)
    for m in range(H):
        out = out * ((i + m) / (start + m))
    return out * (i + H)


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    margin: float  # worst slack over the checked range; negative means violated
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst margin {self.margin:.3e}{' ' + self.detail if self.detail else ''}"


def check_stepsize_properties(H: int, t_max: int = 10_000, i_max: int = 200) -> list[PropertyCheck]:
    """Numeric verification of the stepsize weight properties.

    For every ``1 <= t <= t_max`` the weights are built by forward recursion and
    checked for normalization, ``max_i alpha_t^i <= 2H/t``,
    ``sum_i (alpha_t^i)^2 <= 2H/t`` and ``1/sqrt(t) <= sum_i alpha_t^i/sqrt(i) <= 2/sqrt(t)``.
    For every ``1 <= i <= i_max`` the partial sums ``sum_{t=i}^T alpha_t^i`` are
    checked to be nondecreasing, to stay below ``1 + 1/H`` and to come within
    ``1e-3`` of it.
    """
    w = np.zeros(t_max + 1)
    w[0] = 1.0
    inv_sqrt = np.zeros(t_max + 1)
    inv_sqrt[1:] = 1.0 / np.sqrt(np.arange(1, t_max + 1))
    sum_err = 0.0
    max_gap = sq_gap = low_gap = high_gap = np.inf
    for t in range(1, t_max + 1):
        a = alpha(H, t)
        w[:t] *= 1.0 - a
        w[t] = a
        row = w[1 : t + 1]
        sum_err = max(sum_err, abs(row.sum() - 1.0))
        bound = 2.0 * H / t
        max_gap = min(max_gap, bound - row.max())
        sq_gap = min(sq_gap, bound - float(row @ row))
        weighted = float(row @ inv_sqrt[1 : t + 1])
        low_gap = min(low_gap, weighted - 1.0 / math.sqrt(t))
        high_gap = min(high_gap, 2.0 / math.sqrt(t) - weighted)

    checks = [
        PropertyCheck(f"H={H} sum_i alpha_t^i = 1 (t<={t_max})", sum_err <= 1e-9, 1e-9 - sum_err),
        PropertyCheck(f"H={H} max_i alpha_t^i <= 2H/t", max_gap >= 0.0, max_gap),
        PropertyCheck(f"H={H} sum_i (alpha_t^i)^2 <= 2H/t", sq_gap >= 0.0, sq_gap),
        PropertyCheck(f"H={H} sum_i alpha_t^i/sqrt(i) >= 1/sqrt(t)", low_gap >= -1e-12, low_gap),
        PropertyCheck(f"H={H} sum_i alpha_t^i/sqrt(i) <= 2/sqrt(t)", high_gap >= -1e-12, high_gap),
    ]

    limit = 1.0 + 1.0 / H
    mono_ok, over_gap, reach_gap = True, np.inf, np.inf
    for i in range(1, i_max + 1):
        # Horizon where the exact remaining tail drops below 5e-4.
        T = i
        while alpha_tail(H, i, T + 1) > 5e-4:
            T *= 2
        terms = alpha_weight(H, np.arange(i, T + 1), i)
        partial = np.cumsum(terms)
        mono_ok &= bool(np.all(np.diff(partial) >= 0.0))
        over_gap = min(over_gap, limit + 1e-9 - partial.max())
        reach_gap = min(reach_gap, partial[-1] - (limit - 1e-3))
    checks += [
        PropertyCheck(f"H={H} partial sums over t nondecreasing (i<={i_max})", mono_ok, 0.0),
        PropertyCheck(f"H={H} sum_(t>=i) alpha_t^i <= 1+1/H", over_gap >= 0.0, over_gap),
        PropertyCheck(f"H={H} sum_(t>=i) alpha_t^i reaches 1+1/H-1e-3", reach_gap >= 0.0, reach_gap),
    ]
    return checks


@dataclass(frozen=True)
class AccumulationResult:
    i: int
    value: float  # truncated sum
    tail_bound: float  # rigorous bound on the dropped terms
    truncated_at: int  # first visit count not included

    @property
    def upper(self) -> float:
        return self.value + self.tail_bound


def error_accumulation(schedule: TriggerSchedule, H: int, i: int, tol: float = 1e-9) -> AccumulationResult:
    """Weight accumulated by the i-th update under delayed policy syncs.

    Computes ``sum_{t >= i, tau_last(t) <= i-1} alpha_t^i + sum_{t: tau_last(t) >= i} alpha_{tau_last(t)}^i``.
    Visit counts sharing a ``tau_last`` are grouped, so only triggers are
    enumerated. Enumeration stops at the first trigger ``g`` where the bound
    ``(1 + eta)^(H+1) * sum_{t >= g} alpha_t^i`` on the remaining terms is below
    ``tol``; that bound is returned alongside the truncated sum.
    """
    if i < 1:
        raise ValueError("i must be >= 1")
    eta = schedule.eta if schedule.eta is not None else 0.0
    growth = (1.0 + eta) ** (H + 1)
    g = schedule.next_trigger(i)
    # t in [i, g): the last trigger is still below i, so the live weight counts.
    value = float(alpha_tail(H, i, i) - alpha_tail(H, i, g))
    while True:
        tail = growth * float(alpha_tail(H, i, g))
        if tail < tol:
            return AccumulationResult(i, value, tail, g)
        g_next = schedule.next_trigger(g + 1)
        value += float(alpha_weight(H, g, i)) * (g_next - g)
        g = g_next


def check_error_accumulation(
    H: int, i_max: int = 500, schedule: TriggerSchedule | None = None, slack: float = 1e-6
) -> PropertyCheck:
    schedule = schedule or TriggerSchedule.for_horizon(H)
    limit = 1.0 + 3.0 / H + slack
    worst = min((limit - error_accumulation(schedule, H, i).upper, i) for i in range(1, i_max + 1))
    return PropertyCheck(
        f"H={H} delayed-update accumulation <= 1+3/H (eta={schedule.eta:.4g}, r*={schedule.r_star}, i<={i_max})",
        worst[0] >= 0.0,
        worst[0],
        f"(tightest at i={worst[1]})",
    )


def check_schedule_properties(schedule: TriggerSchedule, t_max: int = 100_000) -> list[PropertyCheck]:
    """Epoch-gap and ``tau_last`` growth properties of a schedule."""
    eta = schedule.eta
    # Stop while tau(r+1) is still exactly representable.
    r, gap_margin = schedule.r_star, math.inf
    while schedule.tau(r + 1) < 2**50:
        gap_margin = min(gap_margin, eta * schedule.tau(r) - (schedule.tau(r + 1) - 1 - schedule.tau(r)))
        r += 1
    trig = schedule.triggers(t_max)
    ts = np.arange(1, t_max + 1)
    last = trig[np.searchsorted(trig, ts, side="right") - 1]
    last_margin = float(np.min(last - ts / (1.0 + eta)))
    return [
        PropertyCheck("tau(r+1)-1-tau(r) <= eta*tau(r) for r >= r*", gap_margin >= 0.0, gap_margin),
        PropertyCheck(f"tau_last(t) >= t/(1+eta) for t <= {t_max}", last_margin >= 0.0, last_margin),
    ]

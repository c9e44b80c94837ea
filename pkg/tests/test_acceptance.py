"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` to see the report lines.
"""

import math
import time

import numpy as np
import pytest

from lowswitch import rng as rngmod
from lowswitch.agents import AgentConfig, extract_mixture_policy, pac_gap, run
from lowswitch.bandit import BanditInstance, run_ucb1_baseline, run_ucb2, ucb2_switch_bound
from lowswitch.concurrent import ConcurrentConfig, replay_equivalence_check, run_concurrent
from lowswitch.harness import InvariantViolation, check_run
from lowswitch.lowerbound import lower_bound_experiment
from lowswitch.mdp import make_hard_instance, make_random_mdp, optimal_values
from lowswitch.metrics import PolicyValueCache, switching_bound
from lowswitch.schedule import alpha_weights, check_error_accumulation, check_stepsize_properties

import oracles

SEEDS = range(10)


@pytest.fixture
def report(capsys):
    def emit(number, name, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {name}: {detail}")
        return passed

    return emit


def hard_instance(H, S, A, seed=0):
    a_star = rngmod.generator(seed, (rngmod.INSTANCE,)).integers(0, A, size=(H, S))
    return make_hard_instance(H, S, A, a_star)


def random_instance(H, S, A, seed=0):
    return make_random_mdp(H, S, A, rngmod.generator(seed, (rngmod.INSTANCE,)))


@pytest.fixture(scope="module")
def scaling_runs():
    """UCB2-Hoeffding on the H=3, S=4, A=3 hard instance at three horizons, plus vanilla at the largest."""
    mdp = hard_instance(3, 4, 3)
    cache = PolicyValueCache(mdp)
    start = time.perf_counter()
    out = {}
    for K in (4000, 16000, 64000):
        out[K] = [run(AgentConfig(K=K), mdp, K, seed=s, cache=cache) for s in SEEDS]
    out["vanilla"] = [run(AgentConfig(K=64000, variant="vanilla-hoeffding"), mdp, 64000, seed=s, cache=cache)
                      for s in SEEDS]
    out["elapsed"] = time.perf_counter() - start
    return out


@pytest.fixture(scope="module")
def scheduled_suite():
    """At least 100 UCB2 runs over a spread of sizes and horizons, Bernstein runs traced."""
    g = rngmod.generator(2024)
    cells = []
    for i in range(96):
        H, S, A = int(g.integers(1, 5)), int(g.integers(1, 7)), int(g.integers(1, 5))
        K = int((100, 1000, 10_000)[i % 3])
        cells.append((H, S, A, K))
    cells += [(1, 2, 2, 100_000), (2, 2, 2, 100_000), (4, 6, 4, 100_000), (3, 4, 3, 100_000)]
    runs = []
    for i, (H, S, A, K) in enumerate(cells):
        variant = "ucb2-hoeffding" if i % 2 == 0 else "ucb2-bernstein"
        mdp = random_instance(H, S, A, seed=i)
        res = run(AgentConfig(K=K, variant=variant), mdp, K, seed=i, trace_bonuses=variant == "ucb2-bernstein")
        runs.append(res)
    return runs


def test_criterion_01_stepsize_properties(report):
    start = time.perf_counter()
    checks = [c for H in (1, 2, 3, 5) for c in check_stepsize_properties(H, t_max=10_000, i_max=200)]
    elapsed = time.perf_counter() - start
    failed = [c.line() for c in checks if not c.passed]
    worst = min(c.margin for c in checks)
    ok = report(1, "stepsize properties", not failed and elapsed < 30,
                f"{len(checks)} checks, {len(failed)} failed, worst margin {worst:.3g}, {elapsed:.1f}s")
    assert ok, failed


def test_criterion_02_error_accumulation(report):
    start = time.perf_counter()
    checks = [check_error_accumulation(H, i_max=500) for H in (2, 3)]
    elapsed = time.perf_counter() - start
    ok = report(2, "delayed-update accumulation", all(c.passed for c in checks) and elapsed < 60,
                "; ".join(f"{c.name} margin {c.margin:.4g}" for c in checks) + f", {elapsed:.1f}s")
    assert ok


def test_criterion_03_switching_bound(report, scheduled_suite):
    violations = []
    for res in scheduled_suite:
        try:
            check_run(res)
        except InvariantViolation as exc:
            violations.append(str(exc))
        cfg = res.config.resolved(res.H)
        if res.total_switches > switching_bound(res.H, res.S, res.A, res.K, cfg.eta, cfg.r_star):
            violations.append(f"bound exceeded H={res.H} S={res.S} A={res.A} K={res.K}")
    shapes = {(r.H, r.S, r.A) for r in scheduled_suite}
    ok = report(3, "deterministic switching bound", not violations and len(scheduled_suite) >= 100,
                f"{len(scheduled_suite)} runs, {len(shapes)} shapes, max K {max(r.K for r in scheduled_suite)}, "
                f"{len(violations)} violations")
    assert ok, violations[:5]


def test_criterion_04_logarithmic_switching(report, scaling_runs):
    med = {K: float(np.median([r.total_switches for r in scaling_runs[K]])) for K in (4000, 16000, 64000)}
    late, early = med[64000] - med[16000], med[16000] - med[4000]
    slack = 2 * 3 * 4 * 3
    ok = report(4, "logarithmic switching growth", late <= early + slack and scaling_runs["elapsed"] < 300,
                f"medians {med[4000]:.0f}/{med[16000]:.0f}/{med[64000]:.0f}, increments {early:.0f} -> {late:.0f} "
                f"(slack {slack}), {scaling_runs['elapsed']:.1f}s")
    assert ok


def test_criterion_05_sublinear_regret(report, scaling_runs):
    med16 = float(np.median([r.total_regret for r in scaling_runs[16000]]))
    med64 = float(np.median([r.total_regret for r in scaling_runs[64000]]))
    vanilla = float(np.median([r.total_regret for r in scaling_runs["vanilla"]]))
    ratio, vs = med64 / med16, med64 / vanilla
    ok = report(5, "sublinear regret", ratio <= 3.0 and vs <= 2.0,
                f"regret ratio 64k/16k {ratio:.3f} (limit 3.0), UCB2H/vanilla {vs:.3f} (limit 2.0)")
    assert ok


def test_criterion_06_optimism(report):
    mdp = random_instance(2, 3, 2)
    cfg = AgentConfig(K=5000)
    flagged = sum(run(cfg, mdp, 5000, seed=s).optimism_violations > 0 for s in range(20))
    limit = max(cfg.p, 0.1)
    ok = report(6, "optimism", flagged / 20 <= limit, f"{flagged}/20 runs with a violation (limit {limit:.2f})")
    assert ok


def test_criterion_07_bernstein_telescoping(report, scheduled_suite):
    g = rngmod.generator(7)
    checked = violations = 0
    worst = 0.0
    for res in scheduled_suite:
        if res.config.variant != "ucb2-bernstein":
            continue
        trace = res.learner.bonus_trace
        keys = list(trace)
        for idx in g.choice(len(keys), size=min(5, len(keys)), replace=False):
            entries = trace[keys[idx]]
            b = np.array([e[0] for e in entries])
            n = len(entries)
            ts = sorted({min(t, n) for t in (1, 2, 3, 10, n // 2 or 1, n)})
            for t in ts:
                lhs = 2.0 * float(alpha_weights(res.H, t)[1:] @ b[:t])
                err = abs(lhs - entries[t - 1][1])
                worst = max(worst, err)
                checked += 1
                violations += err > 1e-8
    ok = report(7, "Bernstein bonus telescoping", violations == 0 and checked > 0,
                f"{checked} (h,x,a,t) checks, worst error {worst:.2e}, {violations} violations")
    assert ok


def test_criterion_08_pac_decay(report):
    mdp = random_instance(2, 3, 2).with_initial_state(0)
    cache = PolicyValueCache(mdp)
    gaps = {}
    for K in (10_000, 40_000):
        gaps[K] = [pac_gap(mdp, extract_mixture_policy(run(AgentConfig(K=K), mdp, K, seed=s, cache=cache)), 0, cache)
                   for s in SEEDS]
    m10, m40 = float(np.median(gaps[10_000])), float(np.median(gaps[40_000]))
    ok = report(8, "PAC gap decay", m40 <= 0.75 * m10,
                f"median gap {m10:.4f} -> {m40:.4f}, ratio {m40 / m10:.3f} (limit 0.75)")
    assert ok


def test_criterion_09_concurrent(report):
    mdp = hard_instance(3, 4, 3)
    K = 8000
    agent = AgentConfig(K=K)
    cache = PolicyValueCache(mdp)
    rounds, failures = {}, []
    for M in (1, 2, 4, 8, 16):
        rounds[M] = []
        for s in range(5):
            res = run_concurrent(mdp, ConcurrentConfig(M, agent, total_episodes=K), seed=s, cache=cache)
            if not replay_equivalence_check(res, agent, mdp):
                failures.append(f"replay M={M} seed={s}")
            if res.rounds > res.rounds_bound():
                failures.append(f"rounds M={M} seed={s}: {res.rounds} > {res.rounds_bound()}")
            rounds[M].append(res.rounds)
    med = {M: float(np.median(v)) for M, v in rounds.items()}
    ok = report(9, "concurrent correctness", not failures and med[8] < med[4],
                f"median rounds {', '.join(f'M={M}: {v:.0f}' for M, v in med.items())}; {len(failures)} failures")
    assert ok, failures


def test_criterion_10_lower_bound(report):
    H, S, A = 2, 3, 4
    start = time.perf_counter()
    rep = lower_bound_experiment(H, S, A, budget=(H * S * A) // 2, draws=200, K=1000, seed=0)
    elapsed = time.perf_counter() - start
    first = rep.mean_value <= 0.75 * H + 0.05 * H
    second = rep.mean_value <= rep.counting_bound + 3 * rep.std_error
    ok = report(10, "switch-budget lower bound", first and second and elapsed < 300,
                f"mean value {rep.mean_value:.4f} (<= {0.8 * H:.2f}), counting bound {rep.counting_bound:.4f} "
                f"+ 3 SE {3 * rep.std_error:.4f}, max switches {rep.max_switches}, {elapsed:.1f}s")
    assert ok


def test_criterion_11_bandit(report):
    inst, eta = BanditInstance((0.9, 0.5)), 0.25
    bound = ucb2_switch_bound(inst.A, 100_000, eta)
    ucb2, ucb1, short = [], [], []
    for s in range(20):
        ucb2.append(run_ucb2(inst, 100_000, eta, rngmod.generator(s, (rngmod.BANDIT, 0))))
        ucb1.append(run_ucb1_baseline(inst, 100_000, rngmod.generator(s, (rngmod.BANDIT, 1))))
        short.append(run_ucb2(inst, 1000, eta, rngmod.generator(s, (rngmod.BANDIT, 0))).regret)
    over = [r.switches for r in ucb2 if r.switches > bound]
    m2, m1 = float(np.median([r.regret for r in ucb2])), float(np.median([r.regret for r in ucb1]))
    per_round_ratio = (m2 / 100_000) / (float(np.median(short)) / 1000)
    ok = report(11, "bandit UCB2", not over and m2 <= 1.5 * m1 and per_round_ratio < 0.2,
                f"max switches {max(r.switches for r in ucb2)} (bound {bound:.1f}), median regret UCB2 {m2:.1f} "
                f"vs UCB1 {m1:.1f}, regret/T ratio {per_round_ratio:.3f} (limit 0.2)")
    assert ok


def test_criterion_12_oracle_equivalence(report):
    g = rngmod.generator(12)
    shapes = []
    while len(shapes) < 50:
        H, S, A = int(g.integers(1, 5)), int(g.integers(1, 5)), int(g.integers(1, 5))
        if H * S * math.log2(A) <= 16:
            shapes.append((H, S, A))
    worst = 0.0
    for i, (H, S, A) in enumerate(shapes):
        mdp = random_instance(H, S, A, seed=100 + i)
        ref = oracles.brute_force_optimal(mdp.transitions, mdp.rewards)
        worst = max(worst, float(np.max(np.abs(optimal_values(mdp).v[0] - ref))))
    ok = report(12, "optimal values vs enumeration", worst <= 1e-12,
                f"50 instances, largest policy space {max(A ** (H * S) for H, S, A in shapes)}, max error {worst:.2e}")
    assert ok

"""Experiment configuration, seeded runs, output files and invariant re-checks.

A config is one JSON document; unknown fields are rejected. Every run executed
here is re-checked against the deterministic switching bound, the ordering
``N_gl <= N_switch <= HS(K-1)`` and, for concurrent runs, the rounds bound and
replay equivalence. A failed check raises ``InvariantViolation``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from lowswitch import rng as rngmod
from lowswitch.agents import VARIANTS, AgentConfig, RunResult, extract_mixture_policy, run
from lowswitch.bandit import BanditInstance, run_ucb1_baseline, run_ucb2, ucb2_switch_bound
from lowswitch.concurrent import ConcurrentConfig, replay_equivalence_check, run_concurrent
from lowswitch.mdp import (InvalidMdpError, MdpSpec, load_mdp, make_hard_instance, make_random_mdp,
                           optimal_values)
from lowswitch.metrics import PolicyValueCache, switching_bound

SUMMARY_FIELDS = ("seed", "K", "final_regret", "n_switch", "n_switch_gl", "distinct_policies", "wall_time")
RECORD_FIELDS = (
    "episode", "initial_state", "regret_increment", "cumulative_regret",
    "n_switch", "n_switch_gl", "triggers", "realized_return",
)


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RandomSource(_Strict):
    kind: Literal["random"]
    H: int = Field(ge=1)
    S: int = Field(ge=1)
    A: int = Field(ge=1)
    seed: int = Field(default=0, ge=0)


class HardSource(_Strict):
    kind: Literal["hard"]
    H: int = Field(ge=1)
    S: int = Field(ge=1)
    A: int = Field(ge=1)
    a_star_seed: int = Field(default=0, ge=0)


class FileSource(_Strict):
    kind: Literal["file"]
    path: str


MdpSource = Annotated[Union[RandomSource, HardSource, FileSource], Field(discriminator="kind")]


class AgentSection(_Strict):
    variant: Literal[VARIANTS] = "ucb2-hoeffding"  # type: ignore[valid-type]
    eta: float | None = Field(default=None, gt=0.0, le=1.0)
    r_star: int | None = Field(default=None, ge=0)
    c: float = Field(default=1.0, gt=0.0)
    c1: float = Field(default=1.0, gt=0.0)
    c2: float = Field(default=2.0, gt=0.0)
    p: float = Field(default=0.1, gt=0.0, lt=1.0)

    def build(self, K: int) -> AgentConfig:
        return AgentConfig(K=K, **self.model_dump())


class ExperimentConfig(_Strict):
    mdp: MdpSource
    agent: AgentSection = AgentSection()
    K: int = Field(default=1000, ge=0)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    initial_state: int | None = Field(default=None, ge=0)  # point-mass x1 instead of initial_dist
    machines: list[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    out_dir: str = "out"
    workers: int = Field(default=1, ge=1)


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file and apply flag overrides (top-level or ``agent.*``/``mdp.*`` keys)."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = doc
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def build_mdp(source, initial_state: int | None = None) -> MdpSpec:
    if isinstance(source, RandomSource):
        mdp = make_random_mdp(source.H, source.S, source.A, rngmod.generator(source.seed, (rngmod.INSTANCE,)))
    elif isinstance(source, HardSource):
        a_star = rngmod.generator(source.a_star_seed, (rngmod.INSTANCE,)).integers(0, source.A, size=(source.H, source.S))
        mdp = make_hard_instance(source.H, source.S, source.A, a_star)
    else:
        try:
            mdp = load_mdp(source.path)
        except (OSError, json.JSONDecodeError, InvalidMdpError) as exc:
            raise ConfigError(f"cannot load MDP from {source.path}: {exc}") from exc
    if initial_state is not None:
        if initial_state >= mdp.S:
            raise ConfigError(f"initial_state {initial_state} out of range for S={mdp.S}")
        mdp = mdp.with_initial_state(initial_state)
    return mdp


# -- invariant re-checks ------------------------------------------------------

def check_run(result: RunResult) -> None:
    H, S, A, K = result.H, result.S, result.A, result.K
    n, n_gl = result.total_switches, result.total_global_switches
    if K and not n_gl <= n <= H * S * (K - 1):
        raise InvariantViolation(f"switch ordering violated: N_gl={n_gl}, N={n}, HS(K-1)={H * S * (K - 1)}")
    if K and (np.any(np.diff(result.n_switch) < 0) or np.any(np.diff(result.n_switch_gl) < 0)):
        raise InvariantViolation("cumulative switching cost decreased")
    if result.config.variant != "vanilla-hoeffding":
        cfg = result.config.resolved(H)
        bound = switching_bound(H, S, A, max(K, 1), cfg.eta, cfg.r_star)
        if n > bound:
            raise InvariantViolation(f"N_switch={n} exceeds the deterministic bound {bound}")


def check_concurrent(result, agent: AgentConfig, mdp: MdpSpec) -> None:
    check_run(result.run)
    if result.rounds > result.rounds_bound():
        raise InvariantViolation(f"rounds {result.rounds} exceed N_switch + ceil(kept/M) + 1 = {result.rounds_bound()}")
    if not replay_equivalence_check(result, agent, mdp):
        raise InvariantViolation("concurrent run is not replay-equivalent to the sequential learner")


# -- output ---------------------------------------------------------------------

def dump_record(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dump_record(rec))
            fh.write("\n")


def write_csv(path: str | Path, rows: list[dict], fields) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def summary_row(seed: int, result: RunResult, wall_time: float) -> dict:
    return {
        "seed": seed,
        "K": result.K,
        "final_regret": result.total_regret if result.K else 0.0,
        "n_switch": result.total_switches,
        "n_switch_gl": result.total_global_switches,
        "distinct_policies": len({p for _, p in result.snapshots}),
        "wall_time": round(wall_time, 6),
    }


# -- runners --------------------------------------------------------------------

def _run_seed(config: ExperimentConfig, seed: int) -> tuple[dict, list[str]]:
    mdp = build_mdp(config.mdp, config.initial_state)
    agent = config.agent.build(config.K)
    start = time.perf_counter()
    result = run(agent, mdp, config.K, seed=seed)
    wall = time.perf_counter() - start
    check_run(result)
    return summary_row(seed, result, wall), [dump_record(r) for r in result.records()]


def run_experiment(config: ExperimentConfig, tag: str = "run") -> list[dict]:
    """One JSONL per seed plus ``summary.csv`` under ``out_dir``; returns the summary rows."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    build_mdp(config.mdp, config.initial_state)  # fail fast on a bad source
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            outputs = list(pool.map(_run_seed, [config] * len(config.seeds), config.seeds))
    else:
        outputs = [_run_seed(config, s) for s in config.seeds]
    rows = []
    for seed, (row, lines) in zip(config.seeds, outputs):
        with open(out / f"{tag}_seed{seed}.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(line + "\n" for line in lines)
        rows.append(row)
    write_csv(out / f"{tag}_summary.csv", rows, SUMMARY_FIELDS)
    return rows


def run_sweep(config: ExperimentConfig, K_values: list[int], variants: list[str]) -> list[dict]:
    """Grid over horizons and variants; one subdirectory per cell, one combined CSV."""
    rows = []
    for variant in variants:
        for K in K_values:
            cell = config.model_copy(update={
                "K": K,
                "agent": config.agent.model_copy(update={"variant": variant}),
                "out_dir": str(Path(config.out_dir) / f"{variant}_K{K}"),
            })
            for row in run_experiment(cell):
                rows.append({"variant": variant, **row})
    write_csv(Path(config.out_dir) / "sweep_summary.csv", rows, ("variant",) + SUMMARY_FIELDS)
    return rows


def mixture_gap(mdp: MdpSpec, result: RunResult, cache: PolicyValueCache | None = None) -> float:
    """Initial-distribution average of the PAC gap of the uniform mixture of episode policies."""
    cache = cache or PolicyValueCache(mdp)
    mixture = extract_mixture_policy(result)
    v_star = float(mdp.initial_dist @ optimal_values(mdp).v[0])
    return v_star - sum(w * cache.expected_value(p) for p, w in zip(mixture.policies, mixture.weights))


CONCURRENT_FIELDS = ("M", "seed", "rounds", "kept", "discarded", "n_switch", "speedup", "pac_gap")


def run_concurrent_sweep(config: ExperimentConfig) -> list[dict]:
    mdp = build_mdp(config.mdp, config.initial_state)
    agent = config.agent.build(config.K)
    cache = PolicyValueCache(mdp)
    rows = []
    for M in config.machines:
        for seed in config.seeds:
            result = run_concurrent(mdp, ConcurrentConfig(M, agent, total_episodes=config.K), seed, cache=cache)
            check_concurrent(result, agent, mdp)
            summary = result.summary()
            rows.append({
                "M": M, "seed": seed, "rounds": summary["rounds"], "kept": summary["kept"],
                "discarded": summary["discarded"], "n_switch": summary["n_switch"],
                "speedup": summary["speedup"],
                "pac_gap": mixture_gap(mdp, result.run, cache) if result.kept else math.nan,
            })
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "concurrent_summary.csv", rows, CONCURRENT_FIELDS)
    return rows


BANDIT_FIELDS = ("seed", "algorithm", "regret", "switches", "switch_bound")


def run_bandit(arms: list[float], T: int, eta: float, seeds: list[int]) -> list[dict]:
    instance = BanditInstance(tuple(arms))
    if T < instance.A:
        raise ConfigError(f"horizon T={T} is shorter than the number of arms A={instance.A}")
    bound = ucb2_switch_bound(instance.A, T, eta)
    rows = []
    for seed in seeds:
        ucb2 = run_ucb2(instance, T, eta, rngmod.generator(seed, (rngmod.BANDIT, 0)))
        if ucb2.switches > bound:
            raise InvariantViolation(f"UCB2 switched {ucb2.switches} times, bound {bound:.2f}")
        ucb1 = run_ucb1_baseline(instance, T, rngmod.generator(seed, (rngmod.BANDIT, 1)))
        rows.append({"seed": seed, "algorithm": "ucb2", "regret": ucb2.regret, "switches": ucb2.switches,
                     "switch_bound": bound})
        rows.append({"seed": seed, "algorithm": "ucb1", "regret": ucb1.regret, "switches": ucb1.switches,
                     "switch_bound": ""})
    return rows

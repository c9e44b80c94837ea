"""Command-line entry point: ``lowswitch <subcommand> ...``.

Exit codes: 0 success, 1 a verified property failed, 2 bad configuration,
3 a runtime invariant was violated.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

from lowswitch import harness
from lowswitch.harness import ConfigError, InvariantViolation
from lowswitch.mdp import InvalidMdpError, MdpSpec

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


def _int_list(raw: str) -> list[int]:
    try:
        return [int(s) for s in raw.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {raw!r}") from exc


def _float_list(raw: str) -> list[float]:
    try:
        return [float(s) for s in raw.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {raw!r}") from exc


def _str_list(raw: str) -> list[str]:
    return [s.strip() for s in raw.split(",") if s.strip()]


def _add_experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags below override its fields")
    p.add_argument("--K", type=int, help="episodes per run")
    p.add_argument("--seed", type=_int_list, help="seed or comma list of seeds")
    p.add_argument("--variant", help="ucb2-hoeffding, ucb2-bernstein or vanilla-hoeffding")
    p.add_argument("--eta", type=float)
    p.add_argument("--r-star", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--initial-state", type=int, help="fix x1 to this state (0-based)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--mdp", help='MDP source as JSON, e.g. \'{"kind":"random","H":3,"S":4,"A":3}\'')


def _experiment_config(args) -> harness.ExperimentConfig:
    mdp = None
    if args.mdp is not None:
        try:
            mdp = json.loads(args.mdp)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--mdp is not valid JSON: {exc}") from exc
    overrides = {
        "K": args.K, "seeds": args.seed, "initial_state": args.initial_state,
        "out_dir": args.out, "workers": args.workers, "mdp": mdp,
        "agent.variant": args.variant, "agent.eta": args.eta, "agent.r_star": args.r_star,
        "agent.c": args.c, "agent.p": args.p,
    }
    if getattr(args, "machines", None) is not None:
        overrides["machines"] = args.machines
    return harness.load_config(args.config, overrides)


def cmd_run(args) -> int:
    rows = harness.run_experiment(_experiment_config(args))
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _experiment_config(args)
    variants = args.variants or [config.agent.variant]
    rows = harness.run_sweep(config, args.K_values or [config.K], variants)
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK


def cmd_concurrent(args) -> int:
    rows = harness.run_concurrent_sweep(_experiment_config(args))
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK


def cmd_bandit(args) -> int:
    rows = harness.run_bandit(args.arms, args.T, args.eta, args.seed)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        harness.write_csv(args.out, rows, harness.BANDIT_FIELDS)
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK


def cmd_lowerbound(args) -> int:
    from lowswitch.lowerbound import lower_bound_experiment

    if args.A < 4:
        warnings.warn("the 3H/4 value limit assumes A >= 4", stacklevel=1)
    start = time.perf_counter()
    report = lower_bound_experiment(args.H, args.S, args.A, args.budget, args.draws, args.K, args.seed)
    doc = report.as_dict()
    doc["wall_time"] = round(time.perf_counter() - start, 3)
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_verify_lemmas(args) -> int:
    from lowswitch.schedule import (TriggerSchedule, check_error_accumulation, check_schedule_properties,
                                    check_stepsize_properties)

    checks = []
    for H in args.H:
        checks += check_stepsize_properties(H, args.t_max, args.i_max)
    for H in args.accumulation_H:
        schedule = TriggerSchedule.for_horizon(H)
        checks.append(check_error_accumulation(H, args.accumulation_i_max, schedule))
        checks += check_schedule_properties(schedule)
    for check in checks:
        print(check.line())
    if args.negative_control:
        eta, r_star = args.negative_control
        control = check_error_accumulation(2, args.accumulation_i_max, TriggerSchedule(eta, int(r_star)))
        print(f"NEGATIVE CONTROL (not asserted) {control.line()}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


def cmd_validate_mdp(args) -> int:
    try:
        doc = json.loads(Path(args.path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read {args.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        mdp = MdpSpec.from_json(doc)
    except InvalidMdpError as exc:
        for err in exc.errors:
            print(err)
        return EXIT_FAILED
    print(f"ok: H={mdp.H} S={mdp.S} A={mdp.A}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowswitch", description="Low-switching Q-learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="seeded runs of one configuration")
    _add_experiment_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over episode counts and variants")
    _add_experiment_args(p)
    p.add_argument("--K-values", type=_int_list)
    p.add_argument("--variants", type=_str_list)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("concurrent", help="concurrent runs over a sweep of machine counts")
    _add_experiment_args(p)
    p.add_argument("--machines", type=_int_list)
    p.set_defaults(func=cmd_concurrent)

    p = sub.add_parser("bandit", help="UCB2 vs UCB1 on Bernoulli arms")
    p.add_argument("--arms", type=_float_list, default=[0.9, 0.5])
    p.add_argument("--T", type=int, default=100_000)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--seed", type=_int_list, default=[0])
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_bandit)

    p = sub.add_parser("lowerbound", help="switch-budget experiment on the hard instance family")
    p.add_argument("--H", type=int, default=2)
    p.add_argument("--S", type=int, default=3)
    p.add_argument("--A", type=int, default=4)
    p.add_argument("--budget", type=int, help="default floor(HSA/2)")
    p.add_argument("--draws", type=int, default=200)
    p.add_argument("--K", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("verify-lemmas", help="numeric checks of the stepsize and delayed-update properties")
    p.add_argument("--H", type=_int_list, default=[1, 2, 3, 5])
    p.add_argument("--t-max", type=int, default=10_000)
    p.add_argument("--i-max", type=int, default=200)
    p.add_argument("--accumulation-H", type=_int_list, default=[2, 3])
    p.add_argument("--accumulation-i-max", type=int, default=500)
    p.add_argument("--negative-control", type=float, nargs=2, metavar=("ETA", "R_STAR"),
                   help="also report the accumulation check for H=2 under these parameters")
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("validate-mdp", help="check an MDP JSON file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate_mdp)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``localbreakout {solve,simulate,sweep,threshold}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (ExperimentConfig, emit_csv, emit_plot, run_sweep, sweep_metadata,
                      atomic_write)
from .policies import PolicySpec, bind
from .simulator import run
from .solver import Model, policy_gain, relative_value_iteration, threshold_of


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_(sim=replace(cfg.sim, seed=args.seed))
    if args.workers is not None:
        cfg = cfg.with_(workers=args.workers)
    if args.out is not None:
        cfg = cfg.with_(out=args.out)
    if args.svg:
        cfg = cfg.with_(svg=True)
    return cfg


def _emit_json(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def cmd_solve(cfg: ExperimentConfig) -> None:
    result = relative_value_iteration(Model.build(cfg.params, cfg.delay))
    _emit_json({"params": cfg.params.to_dict(), **result.to_dict()}, cfg.out)


def cmd_threshold(cfg: ExperimentConfig, policy: str | None) -> None:
    spec = PolicySpec.parse(policy) if policy else PolicySpec("mdp")
    bound = bind(spec, cfg.params, cfg.delay)
    shape = threshold_of(bound.table)
    _emit_json({
        "policy": spec.name,
        "table": ["breakout" if a else "core" for a in bound.table],
        "threshold": shape.threshold,
        "threshold_is_clean": shape.clean,
        "violations": shape.violations,
    }, cfg.out)


def cmd_simulate(cfg: ExperimentConfig, policy: str | None) -> None:
    spec = PolicySpec.parse(policy) if policy else cfg.policies[0]
    bound = bind(spec, cfg.params, cfg.delay)
    report = run(cfg.params, cfg.delay, bound.table, cfg.sim)
    _emit_json({
        "policy": spec.name,
        "analytic_gain": policy_gain(cfg.params, cfg.delay, bound.table),
        **report.to_dict(),
    }, cfg.out)


def cmd_sweep(cfg: ExperimentConfig) -> None:
    if not cfg.out:
        raise ValueError("sweep needs an output path (--out or config 'out')")
    rows = run_sweep(cfg)
    out = Path(cfg.out)
    emit_csv(rows, out)
    atomic_write(out.with_name(out.name + ".meta.json"),
                 json.dumps(sweep_metadata(cfg), indent=2) + "\n")
    if cfg.svg:
        emit_plot(rows, out.with_suffix(".reward.svg"), "reward")
        emit_plot(rows, out.with_suffix(".threshold.svg"), "threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="localbreakout", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("solve", "solve the routing MDP at the configured parameters"),
        ("simulate", "simulate one policy and report its empirical success rate"),
        ("sweep", "sweep p or q; write CSV (and SVG charts with --svg)"),
        ("threshold", "print a policy table and its threshold"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON experiment config; omitted fields use defaults")
        cmd.add_argument("--out", help="output path (stdout for JSON commands if omitted)")
        cmd.add_argument("--svg", action="store_true", help="also write SVG charts (sweep)")
        cmd.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        cmd.add_argument("--workers", type=int, help="worker processes for sweep")
        if name in ("simulate", "threshold"):
            cmd.add_argument("--policy", help="mdp, myopic, always_breakout, always_core "
                                              "or threshold_<k>")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "solve":
            cmd_solve(cfg)
        elif args.command == "simulate":
            cmd_simulate(cfg, args.policy)
        elif args.command == "threshold":
            cmd_threshold(cfg, args.policy)
        else:
            cmd_sweep(cfg)
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands:
  gen     write the network/problem JSON records built from a config
  run     execute one experiment (curves.csv + summary.json)
  sweep   steady-state MSD versus step-size (sweep.csv)
  verify  print combiner and problem validation reports

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from subdiff import combiner as combiner_mod, harness, netgraph, problem as problem_mod
from subdiff.errors import OutputUnwritable, SubdiffError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subdiff",
        description="Decentralized subspace-diffusion experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("gen", "emit network/problem JSON from a config"),
        ("run", "run one experiment"),
        ("sweep", "steady-state MSD versus step-size"),
        ("verify", "run combiner and problem validation reports"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument(
            "--deterministic", action="store_true", help="use exact gradients instead of samples"
        )
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        if name == "sweep":
            p.add_argument(
                "--mu-list",
                default=None,
                help="comma-separated step-sizes (default: 2mu, mu, mu/2 around the config mu)",
            )
    return parser


def _apply_overrides(config: harness.ExperimentConfig, args) -> harness.ExperimentConfig:
    run = config.run
    if args.seed is not None:
        run = dataclasses.replace(run, master_seed=args.seed)
    if args.deterministic:
        run = dataclasses.replace(run, deterministic=True)
    outputs = config.outputs
    if args.out is not None:
        outputs = dataclasses.replace(outputs, directory=args.out)
    return dataclasses.replace(config, run=run, outputs=outputs)


def _say(args, message: str):
    if not args.quiet:
        print(message)


def _cmd_gen(config: harness.ExperimentConfig, args) -> int:
    instance = harness.build_instance(config)
    out_dir = config.outputs.directory
    try:
        os.makedirs(out_dir, exist_ok=True)
        network_doc = netgraph.network_to_json(
            instance.topology, instance.subspace, instance.problem.w_o
        )
        with open(os.path.join(out_dir, "network.json"), "w") as f:
            json.dump(network_doc, f, sort_keys=True)
            f.write("\n")
        problem_doc = problem_mod.problem_to_json(instance.problem)
        problem_doc["seeds"] = {
            "network_seed_used": instance.network_seed_used,
            "targets_seed": instance.targets_seed,
            "problem_seed": config.problem.seed,
        }
        with open(os.path.join(out_dir, "problem.json"), "w") as f:
            json.dump(problem_doc, f, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise OutputUnwritable(f"cannot write under {out_dir}: {exc}") from exc
    _say(args, f"wrote network.json and problem.json to {out_dir}")
    return EXIT_OK


def _cmd_run(config: harness.ExperimentConfig, args) -> int:
    result = harness.run_experiment(config)
    for name, curve in result.curves.items():
        _say(
            args,
            f"{name}: steady-state {curve.steady_state_msd_db:.2f} dB "
            f"(stderr {curve.stderr_db:.3f} dB, {curve.n_runs} runs)",
        )
    _say(
        args,
        f"theory: exact {result.theory['msd_exact_db']:.2f} dB, "
        f"small-mu {result.theory['msd_small_mu_db']:.2f} dB",
    )
    _say(args, f"outputs in {config.outputs.directory}")
    return EXIT_OK


def _cmd_sweep(config: harness.ExperimentConfig, args) -> int:
    if args.mu_list:
        try:
            mu_list = [float(tok) for tok in args.mu_list.split(",") if tok.strip()]
        except ValueError as exc:
            raise ValueError(f"invalid --mu-list: {exc}") from exc
    else:
        mu = config.run.mu
        mu_list = [2 * mu, mu, mu / 2]
    rows = harness.sweep_mu(config, mu_list)
    for row in rows:
        if "error" in row:
            _say(args, f"mu={row['mu']:g}: {row['error']}")
        else:
            _say(
                args,
                f"mu={row['mu']:g} {row['algorithm']}: {row['msd_db']:.2f} dB "
                f"(theory exact {row['msd_theory_exact_db']:.2f} dB)",
            )
    _say(args, f"sweep.csv in {config.outputs.directory}")
    return EXIT_OK


def _cmd_verify(config: harness.ExperimentConfig, args) -> int:
    instance = harness.build_instance(config)
    report = combiner_mod.verify_combiner(
        instance.combiner, instance.subspace, instance.topology, tol=1e-8
    )
    print("combiner residuals (tol 1e-8):")
    for line in report.lines():
        print("  " + line)
    w_star = instance.w_star
    off_subspace = float(
        np.linalg.norm(w_star - instance.subspace.projector @ w_star)
    )
    h_diag = np.repeat(instance.problem.sigma_h2, instance.problem.M)
    stationarity = float(
        np.linalg.norm(instance.subspace.U.T @ (h_diag * (w_star - instance.problem.w_o)))
    )
    print("problem report:")
    print(f"  optimum_off_subspace   {off_subspace:12.3e}  {'pass' if off_subspace <= 1e-9 else 'FAIL'}")
    print(f"  optimum_stationarity   {stationarity:12.3e}  {'pass' if stationarity <= 1e-9 else 'FAIL'}")
    ok = report.all_pass and off_subspace <= 1e-9 and stationarity <= 1e-9
    return EXIT_OK if ok else EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = harness.load_config(args.config)
        config = _apply_overrides(config, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "gen":
            return _cmd_gen(config, args)
        if args.command == "run":
            return _cmd_run(config, args)
        if args.command == "sweep":
            return _cmd_sweep(config, args)
        if args.command == "verify":
            return _cmd_verify(config, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SubdiffError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())

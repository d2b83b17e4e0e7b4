"""Command-line interface.

Subcommands::

    voltvar run       solve one scenario and print its voltage profile
    voltvar sweep     run the scheme x K x scale x realization study
    voltvar validate  cross-check the Newton solver against the fixed-point path

Configuration file (JSON).  Every block and key is optional; omitted values
take the defaults shown::

    {
      "feeder":   {"n_nodes": 250, "segment_length_km": 0.2,
                   "r_ohm_per_km": 0.33, "x_ohm_per_km": 0.38,
                   "v0_volts": 7200.0, "s_base_va": 100000.0},
      "scenario": {"under_load_max_w": 2500.0, "over_load_max_w": 1000.0,
                   "pv_output_w": 2000.0, "inverter_va": 2200.0,
                   "q_ratio_min": 0.2, "q_ratio_max": 0.3},
      "solver":   {"tolerance": 1e-8, "max_iter": 50, "damping": 0.5,
                   "damping_start": 10, "polish_below": 1e-4},
      "control":  {"delta": 0.04},
      "sweep":    {"schemes": ["NoControl", "SigmoidV", "LocalFlowK", "HybridKV"],
                   "k_grid": [0.0, 0.1, ..., 1.0], "limit_scales": [1.0, 0.5],
                   "realizations": 20, "master_seed": 2011,
                   "mean_load_mode": false, "penetration": 0.5, "workers": 1},
      "output":   {"out_dir": "results"}
    }

Unknown keys are rejected.  Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time

import numpy as np

from . import report
from .control import ControlConfig, Scheme
from .feeder import CaseKind, FeederConfig, build_feeder, sample_scenario
from .solver import PowerFlowError, fixed_point_reference, power_mismatch, solve_ac
from .sweep import SweepConfig, load_config, run_sweep

log = logging.getLogger("voltvar")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--mean-load", action="store_true", default=None,
                        help="set every load to its distribution mean")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="voltvar", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="solve a single scenario")
    run.add_argument("--scheme", default="NoControl")
    run.add_argument("--k", type=float, default=0.0)
    run.add_argument("--scale", type=float, default=1.0)
    run.add_argument("--case", default="under", choices=["under", "over"])
    run.add_argument("--linear", action="store_true", help="also report the LinDistFlow estimate")

    sweep = sub.add_parser("sweep", parents=[common], help="run the full study")
    sweep.add_argument("--realizations", type=int)
    sweep.add_argument("--scheme", action="append", help="restrict to scheme (repeatable)")
    sweep.add_argument("--k", type=float, action="append", help="K grid value (repeatable)")
    sweep.add_argument("--scale", type=float, action="append", help="limit scale (repeatable)")
    sweep.add_argument("--workers", type=int, help="parallel worker processes")
    sweep.add_argument("--no-figures", action="store_true")

    validate = sub.add_parser("validate", parents=[common], help="solver cross-checks")
    validate.add_argument("--tolerance", type=float, default=1e-6,
                          help="allowed voltage disagreement [pu]")
    return parser


def _config(args) -> SweepConfig:
    config = load_config(args.config) if args.config else SweepConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.mean_load:
        overrides["mean_load_mode"] = True
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if getattr(args, "realizations", None) is not None:
        overrides["realizations"] = args.realizations
    if args.command == "sweep":
        if args.scheme:
            overrides["schemes"] = tuple(args.scheme)
        if args.k:
            overrides["k_grid"] = tuple(args.k)
        if args.scale:
            overrides["limit_scales"] = tuple(args.scale)
        if args.workers:
            overrides["workers"] = args.workers
    return dataclasses.replace(config, **overrides)


def cmd_run(args, config: SweepConfig) -> int:
    model = build_feeder(config.feeder)
    try:
        control = ControlConfig(Scheme.parse(args.scheme), args.k, config.delta, args.scale)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    scenario = sample_scenario(model, CaseKind.parse(args.case), config.penetration,
                               config.master_seed, config.scenario, mean_load=config.mean_load_mode)
    try:
        state = solve_ac(model, scenario, control, config.solver)
    except PowerFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    w = sys.stdout
    w.write(",".join(report.profile_header()) + "\n")
    for row in report.profile_rows(state, model):
        w.write(",".join(row) + "\n")
    v = state.v_mag[1:]
    print(f"# {report.label(control.scheme.value, control.limit_scale)} case={args.case} "
          f"seed={config.master_seed} iterations={state.iterations} "
          f"min_v={v.min():.6f} max_v={v.max():.6f} loss_w={state.loss_w:.3f}", file=sys.stderr)
    if args.linear:
        from .solver import solve_lindistflow
        lin = solve_lindistflow(model, scenario, state.q_g)
        print(f"# LinDistFlow at same q_g: min_v={lin.v[1:].min():.6f} "
              f"max_v={lin.v[1:].max():.6f} loss_w={lin.loss_w:.3f}", file=sys.stderr)
    if args.out_dir:
        stem = f"profile_{control.scheme.value}_{args.case}"
        report.write_profile_csv(state, model, f"{args.out_dir}/{stem}.csv")
        report.emit_profile_svg(state, model, f"{args.out_dir}/{stem}.svg",
                                title=f"{report.label(control.scheme.value, control.limit_scale)}, "
                                      f"{args.case}generated")
    return 0


def cmd_sweep(args, config: SweepConfig) -> int:
    t0 = time.perf_counter()
    result = run_sweep(config)
    log.info("sweep finished in %.1f s (%d rows)", time.perf_counter() - t0, len(result.rows))
    for path in report.emit_csv(result, config.out_dir):
        print(path)
    if not args.no_figures and result.frontier:
        print(report.emit_frontier_svg(result.frontier, f"{config.out_dir}/frontier.svg"))
        print(report.emit_k_curves_svg(result.rows, f"{config.out_dir}/k_curves.svg"))
    if result.failures:
        print(f"{len(result.failures)} solve(s) failed; see failures.csv", file=sys.stderr)
        return 1
    return 0


def validation_feeders(config: SweepConfig):
    """Small feeders plus the configured one, for cross-checks."""
    small = FeederConfig(n_nodes=1, segment_length_km=1.0, r_ohm_per_km=5.0, x_ohm_per_km=6.0)
    yield dataclasses.replace(small, n_nodes=1)
    yield dataclasses.replace(small, n_nodes=2)
    yield dataclasses.replace(small, n_nodes=9)
    yield config.feeder


def cmd_validate(args, config: SweepConfig) -> int:
    failures = 0
    controls = [ControlConfig(delta=config.delta), ControlConfig(Scheme.SIGMOID_V, delta=config.delta)]
    controls += [ControlConfig(s, k, config.delta) for s in (Scheme.LOCAL_FLOW_K, Scheme.HYBRID_KV)
                 for k in (0.0, 0.5, 1.0)]
    for fcfg in validation_feeders(config):
        model = build_feeder(fcfg)
        for case in (CaseKind.UNDER, CaseKind.OVER):
            # small feeders get heavier loads so the controls are exercised
            scenario = sample_scenario(model, case, config.penetration, config.master_seed,
                                       config.scenario, mean_load=config.mean_load_mode)
            if model.n_nodes < 20:
                scenario = scenario.scaled(20.0)
            for control in controls:
                name = f"n={model.n_nodes:<3d} {case.short:5s} {control.scheme.value:10s} k={control.k:.1f}"
                try:
                    a = solve_ac(model, scenario, control, config.solver)
                    b = fixed_point_reference(model, scenario, control, config.solver)
                except PowerFlowError as exc:
                    print(f"FAIL {name}: {exc}")
                    failures += 1
                    continue
                dv = float(np.max(np.abs(a.v_mag - b.v_mag)))
                dp, dq = power_mismatch(model, scenario, a.v_mag, a.v_ang, a.q_g)
                resid = float(max(np.max(np.abs(dp)), np.max(np.abs(dq))))
                balance = abs(a.p_slack - float(np.sum(scenario.p_c - scenario.p_g)) / model.s_base - a.loss)
                ok = dv <= args.tolerance and resid <= config.solver.tolerance and balance <= 1e-8
                failures += not ok
                print(f"{'PASS' if ok else 'FAIL'} {name} dv={dv:.2e} residual={resid:.2e} "
                      f"balance={balance:.2e}")
    print(f"{failures} failure(s)")
    return 1 if failures else 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _config(args)
    except (ValueError, OSError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    handler = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}[args.command]
    return handler(args, config)


if __name__ == "__main__":
    sys.exit(main())

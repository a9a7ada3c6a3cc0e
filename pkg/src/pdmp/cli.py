"""Command-line front end: ``pdmp cfl|solve|simulate|compare|convergence --config FILE``.

Exit codes: 0 success, 2 config error, 3 CFL refusal, 4 check failure,
5 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import analysis
from .config import RunConfig, load_config, snapshot_filename, write_snapshot_csv
from .expr import DriftEvalError
from .model import ConfigurationError
from .montecarlo import run_ensemble, write_ensemble_csv
from .solver import CFLViolation, NumericalError, max_abs_drift, solve, switching_bound, total_cdf

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_CHECK = 4
EXIT_NUMERIC = 5

log = logging.getLogger("pdmp")


def _out_dir(cfg: RunConfig, override) -> Path:
    out = Path(override or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_cfl(cfg: RunConfig, args) -> int:
    M = max_abs_drift(cfg.model, cfg.grid)
    rate = switching_bound(cfg.model)
    dt_max = cfg.dt_max
    print(f"M = {M!r}")
    print(f"dx = {cfg.grid.dx!r}")
    print(f"K = {cfg.grid.K}")
    print(f"max_l mu_l(1-q_ll) = {rate!r}")
    if math.isinf(dt_max):
        print("dt_max = unbounded")
    else:
        print(f"dt_max = {dt_max:.6f} ({dt_max!r})")
    return EXIT_OK


def _run_solver(cfg: RunConfig):
    return solve(cfg.model, cfg.grid, cfg.initial, cfg.T, cfg.dt,
                 unsafe_override=cfg.allow_cfl_violation, snapshots=cfg.snapshots)


def cmd_solve(cfg: RunConfig, args) -> int:
    sol = _run_solver(cfg)
    out = _out_dir(cfg, args.out)
    for state in sol.states:
        path = out / snapshot_filename(cfg.name, state.t)
        write_snapshot_csv(state, path)
        print(f"wrote {path}")
    left_mass = sol.states[0].F[:, 0].sum()
    final, final_pi = sol.states[-1], sol.marginals[-1]
    reports = [
        analysis.check_monotone(final, 1e-12),
        analysis.check_conservation(final, 1e-9, left_mass=left_mass, pi=final_pi),
        analysis.check_bounded(final, 1e-9),
    ]
    for r in reports:
        print(r)
    print(f"steps = {sol.steps} dt = {cfg.dt!r}")
    return EXIT_OK if all(reports) else EXIT_CHECK


def cmd_simulate(cfg: RunConfig, args) -> int:
    ens = run_ensemble(cfg.model, cfg.path_config(), workers=args.workers or cfg.mc.get("workers", 1))
    out = _out_dir(cfg, args.out)
    path = out / f"{cfg.name}_ensemble.csv"
    write_ensemble_csv(ens, path)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    if cfg.mc is None:
        raise ConfigurationError("compare needs an 'mc' section")
    sol = _run_solver(cfg)
    tol = cfg.mc.get("ks_tol", 0.02)
    workers = args.workers or cfg.mc.get("workers", 1)
    ok = True
    print(f"{'t':>10} {'ks':>12} {'tol':>8}  result")
    for state in sol.states:
        if state.t == 0:
            continue
        ens = run_ensemble(cfg.model, cfg.path_config(state.t), workers=workers)
        ks = analysis.ks_distance(state.grid.x, total_cdf(state), ens.endpoints)
        passed = ks <= tol
        ok &= passed
        print(f"{state.t:>10g} {ks:>12.6f} {tol:>8g}  {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_convergence(cfg: RunConfig, args) -> int:
    conv = cfg.convergence
    res = analysis.convergence_order(cfg.model, cfg.initial, cfg.T, cfg.grid,
                                     levels=conv.get("levels", 4), ref_refine=conv.get("ref_refine", 4))
    for dx, err in zip(res.dx, res.errors):
        print(f"dx = {dx:.6g}  error = {err:.6e}")
    lo, hi = conv.get("order_band", (0.7, 1.3))
    report = analysis.CheckReport("convergence_order", bool(lo <= res.order <= hi), res.order,
                                  (hi - lo) / 2, f"band=[{lo},{hi}]")
    print(report)
    return EXIT_OK if report else EXIT_CHECK


COMMANDS = {
    "cfl": cmd_cfl,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdmp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True,
                        help="JSON config file, or the name of a bundled config (e.g. relax4_cfl)")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--workers", type=int, help="processes for Monte Carlo ensembles")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CFLViolation as exc:
        print(f"CFL refusal: {exc}", file=sys.stderr)
        return EXIT_CFL
    except (NumericalError, DriftEvalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Subcommands: ``run`` (full study), ``invert`` (one KMV inversion),
``prob`` (one CEV default probability), ``test`` (group tests on two DD
columns), ``simulate`` (synthetic input generation). Exit codes:
0 success, 2 validation failure, 3 exclusion threshold breached.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .cev_engine import CevParams, PdeGrid, cev_dd, cev_default_probability
from .errors import CevKmvError, ExclusionThresholdExceeded, ValidationError
from .market_model import FirmQuarterObservation, invert_kmv
from .pipeline import RunConfig, emit_study, load_raw_inputs, parse_config, run_study
from .stats_tests import make_test_report
from .synth import simulate_raw_inputs, write_raw_inputs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cevkmv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full study from CSV inputs")
    run.add_argument("--returns", required=True)
    run.add_argument("--fundamentals", required=True)
    run.add_argument("--rates", required=True)
    run.add_argument("--config")
    run.add_argument("--out", required=True)

    inv = sub.add_parser("invert", help="invert one firm-quarter observation")
    inv.add_argument("--equity-value", type=float, required=True)
    inv.add_argument("--equity-vol", type=float, required=True)
    inv.add_argument("--default-point", type=float, required=True)
    inv.add_argument("--rate", type=float, required=True)
    inv.add_argument("--horizon", type=float, default=1.0)

    prob = sub.add_parser("prob", help="one CEV default probability")
    prob.add_argument("--asset-value", type=float, required=True)
    prob.add_argument("--delta", type=float, required=True)
    prob.add_argument("--beta", type=float, required=True)
    prob.add_argument("--default-point", type=float, required=True)
    prob.add_argument("--rate", type=float, required=True)
    prob.add_argument("--horizon", type=float, default=1.0)
    prob.add_argument("--num-space", type=int, default=800)
    prob.add_argument("--num-time", type=int, default=400)

    test = sub.add_parser("test", help="group tests on two distance columns")
    test.add_argument("--st", required=True, help="CSV with the high-risk group")
    test.add_argument("--non-st", required=True, help="CSV with the reference group")
    test.add_argument("--column", default="distance")

    sim = sub.add_parser("simulate", help="write synthetic study inputs")
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--firms", type=int, default=60, help="firms per group")
    sim.add_argument("--quarters", type=int, default=6)
    sim.add_argument("--noise", type=float, default=0.03)
    sim.add_argument("--start", default="2019Q1")
    return parser


def _read_column(path: str, column: str) -> list[float]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if column not in header:
        raise ValidationError(f"{path}: no column {column!r} in {header}")
    idx = header.index(column)
    values = []
    for ln in lines[1:]:
        cells = ln.split(",")
        try:
            values.append(float(cells[idx]))
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"{path}: bad row {ln!r}") from exc
    finite = [v for v in values if math.isfinite(v)]
    if len(finite) < 2:
        raise ValidationError(f"{path}: fewer than two finite values")
    return finite


def _cmd_run(args) -> int:
    config = parse_config(args.config) if args.config else RunConfig()
    inputs = load_raw_inputs(args.returns, args.fundamentals, args.rates)
    bundle = run_study(inputs, config)
    written = emit_study(bundle, args.out)
    print(json.dumps({
        "out_dir": args.out,
        "files": written,
        "excluded": len(bundle.exclusions),
        "records": {k: len(v) for k, v in sorted(bundle.records.items())},
    }, indent=2, sort_keys=True))
    return 0


def _cmd_invert(args) -> int:
    obs = FirmQuarterObservation("cli", "Q", args.equity_value, args.equity_vol,
                                 args.default_point, args.rate, args.horizon)
    sol = invert_kmv(obs)
    print(json.dumps({
        "asset_value": sol.asset_value,
        "asset_vol": sol.asset_vol,
        "residual_norm": sol.residual_norm,
        "iterations": sol.iterations,
        "degenerate": sol.degenerate,
    }, indent=2, sort_keys=True))
    return 0


def _cmd_prob(args) -> int:
    grid = PdeGrid(num_space=args.num_space, num_time=args.num_time)
    p = cev_default_probability(args.asset_value, CevParams(args.delta, args.beta),
                                args.default_point, args.rate, args.horizon, grid)
    print(json.dumps({"probability": p, "distance": cev_dd(p)}, indent=2, sort_keys=True))
    return 0


def _cmd_test(args) -> int:
    st = _read_column(args.st, args.column)
    nst = _read_column(args.non_st, args.column)
    rep = make_test_report("cli", st, nst)
    print(json.dumps({
        "z1": rep.z1, "p1": rep.p1, "z2": rep.z2, "p2": rep.p2,
        "m": rep.m, "n": rep.n,
        "st_gamma": {"alpha": rep.st_fit.alpha, "beta": rep.st_fit.beta},
        "non_st_gamma": {"alpha": rep.nst_fit.alpha, "beta": rep.nst_fit.beta},
    }, indent=2, sort_keys=True))
    return 0


def _cmd_simulate(args) -> int:
    inputs = simulate_raw_inputs(args.firms, args.quarters, args.noise, args.seed,
                                 start=args.start)
    paths = write_raw_inputs(inputs, args.out)
    print(json.dumps({"seed": args.seed, "files": paths}, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "invert": _cmd_invert,
    "prob": _cmd_prob,
    "test": _cmd_test,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ExclusionThresholdExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CevKmvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

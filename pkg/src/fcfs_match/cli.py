"""Command-line front end.

Exit codes: 0 success, 2 invalid model or arguments, 3 unstable model or grid
point, 4 type-count cap exceeded, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from ._format import fmt12, round12
from .analytic import DEFAULT_TYPE_CAP, matching_rates
from .delays import delay_moments, wait_moments
from .errors import (
    FcfsMatchError,
    ModelValidationError,
    TooManyTypes,
    UnstableGridPoint,
    UnstableModel,
)
from .limits import sweep
from .model import check_crp, check_stability, load_model, max_stable_rho
from .simulator import compare_with_analytic, default_burn_in, run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNSTABLE = 3
EXIT_TOO_LARGE = 4
EXIT_VERIFY_FAILED = 5


def _write(args, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, payload: dict) -> None:
    _write(args, json.dumps(payload, indent=2) + "\n")


def _cap(args) -> int | None:
    return None if not args.allow_large else 10**9


def _rate_table(model, report) -> str:
    lines = []
    agents = model.agent_names
    lines.append("rates" + "".join(f"{a:>9}" for a in agents) + f"{'lost':>9}")
    for g in model.good_names:
        row = [f"{report.rates.get((g, a), 0.0):9.3f}" for a in agents]
        lines.append(f"{g:<5}" + "".join(row) + f"{report.loss[g]:9.3f}")
    return "\n".join(lines) + "\n"


def _moment_table(model, pair_mean, pair_var, agent_mean, agent_var, label: str) -> str:
    agents = model.agent_names
    lines = [f"{label} mean" + "".join(f"{a:>9}" for a in agents)]
    for g in model.good_names:
        row = [f"{pair_mean[(g, a)]:9.2f}" if (g, a) in pair_mean else f"{'-':>9}" for a in agents]
        lines.append(f"{g:<10}" + "".join(row))
    lines.append(f"{label} sd  " + "".join(f"{a:>9}" for a in agents))
    for g in model.good_names:
        row = [
            f"{pair_var[(g, a)] ** 0.5:9.2f}" if (g, a) in pair_var else f"{'-':>9}"
            for a in agents
        ]
        lines.append(f"{g:<10}" + "".join(row))
    lines.append(
        "agents     "
        + "  ".join(f"{a}: {agent_mean[a]:.2f} (sd {agent_var[a] ** 0.5:.2f})" for a in agents)
    )
    return "\n".join(lines) + "\n"


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model)
    except ModelValidationError as exc:
        _emit_json(args, {"valid": False, "errors": [str(i) for i in exc.issues]})
        return EXIT_INVALID
    stability = check_stability(model)
    rho = max_stable_rho(model)
    payload = {
        "valid": True,
        "errors": [],
        "agent_types": len(model.agent_types),
        "good_types": len(model.good_types),
        "rho": round12(model.rho),
        "stable": stability.stable,
        "witness": list(stability.witness.names) if stability.witness else None,
        "crp": check_crp(model),
        "max_stable_rho": round12(rho.value),
        "max_stable_rho_uncapped": None if rho.uncapped == float("inf") else round12(rho.uncapped),
    }
    _emit_json(args, payload)
    return EXIT_OK


def cmd_rates(args) -> int:
    model = load_model(args.model)
    report = matching_rates(model, cap=_cap(args))
    if args.table:
        _write(args, _rate_table(model, report))
    elif args.format == "csv":
        _write(args, report.to_csv())
    else:
        _emit_json(args, report.to_json_dict())
    return EXIT_OK


def _cmd_moments(args, kind: str) -> int:
    model = load_model(args.model)
    report = delay_moments(model, cap=_cap(args)) if kind == "delay" else wait_moments(model, cap=_cap(args))
    pm, pv, am, av = report._tables(kind)
    if args.table:
        _write(args, _moment_table(model, pm, pv, am, av, kind))
    elif args.format == "csv":
        _write(args, report.to_csv(kind))
    else:
        _emit_json(args, report.to_json_dict(kind))
    return EXIT_OK


def cmd_delays(args) -> int:
    return _cmd_moments(args, "delay")


def cmd_waits(args) -> int:
    return _cmd_moments(args, "wait")


def _grid(args) -> list[float]:
    if args.steps < 1:
        raise ModelValidationError([FcfsMatchError("steps must be >= 1")])
    if not 0.0 < args.rho_min <= args.rho_max < 1.0:
        raise ModelValidationError([FcfsMatchError("need 0 < rho-min <= rho-max < 1")])
    if args.steps == 1:
        return [args.rho_min]
    step = (args.rho_max - args.rho_min) / (args.steps - 1)
    return [args.rho_min + k * step for k in range(args.steps)]


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    series = sweep(model, _grid(args), cap=_cap(args))
    _write(args, series.to_csv())
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    burn_in = args.burn_in if args.burn_in >= 0 else default_burn_in(args.events)
    stats = run(model, args.events, args.seed, burn_in=burn_in)
    _emit_json(args, stats.to_json_dict())
    return EXIT_OK


def cmd_verify(args) -> int:
    model = load_model(args.model)
    burn_in = args.burn_in if args.burn_in >= 0 else default_burn_in(args.events)
    stats = run(model, args.events, args.seed, burn_in=burn_in)
    rows = compare_with_analytic(model, stats, cap=_cap(args))
    if args.corrupt:
        rows = [
            row._replace(analytic=row.analytic + 0.01, z=row.z - 0.01 / row.stderr)
            if row.quantity.startswith("rate[") and row.stderr > 0
            else row
            for row in rows
        ]
    lines = ["quantity,analytic,empirical,stderr,z_score"]
    worst = 0.0
    for row in rows:
        lines.append(
            f"{row.quantity},{fmt12(row.analytic)},{fmt12(row.empirical)},"
            f"{fmt12(row.stderr)},{fmt12(row.z)}"
        )
        if abs(row.z) > worst:
            worst = abs(row.z)
    _write(args, "\n".join(lines) + "\n")
    if worst > args.z_max:
        print(f"verification FAILED: max |z| = {worst:.2f} > {args.z_max:g}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcfs-match",
        description="Exact metrics and Monte Carlo verification for directed FCFS matching",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_rng=False):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--allow-large", action="store_true",
                       help=f"lift the {DEFAULT_TYPE_CAP}-agent-type enumeration cap")
        p.add_argument("--table", action="store_true", help="print a readable table instead")
        if needs_rng:
            p.add_argument("--events", type=int, default=1_000_000)
            p.add_argument("--seed", type=int, default=1)
            p.add_argument("--burn-in", type=int, default=-1,
                           help="events discarded before tallying (default: 1%% of run, min 1e4)")

    p = sub.add_parser("validate", help="check model invariants, stability, pooling")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("rates", help="matching and loss rates")
    common(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("delays", help="delay means and variances")
    common(p)
    p.set_defaults(func=cmd_delays)

    p = sub.add_parser("waits", help="waiting-time means and variances (Poisson arrivals)")
    common(p)
    p.set_defaults(func=cmd_waits)

    p = sub.add_parser("sweep", help="rates and delays over a traffic-intensity grid")
    common(p)
    p.add_argument("--rho-min", type=float, default=0.1)
    p.add_argument("--rho-max", type=float, default=0.9)
    p.add_argument("--steps", type=int, default=9)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo run; emits raw statistics as JSON")
    common(p, needs_rng=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="simulate and compare against the analytic results")
    common(p, needs_rng=True)
    p.add_argument("--z-max", type=float, default=4.0)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelValidationError as exc:
        for issue in exc.issues:
            print(f"invalid model: {issue}", file=sys.stderr)
        return EXIT_INVALID
    except (UnstableModel, UnstableGridPoint) as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except TooManyTypes as exc:
        print(f"too many types: {exc} (use --allow-large to override)", file=sys.stderr)
        return EXIT_TOO_LARGE
    except FcfsMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

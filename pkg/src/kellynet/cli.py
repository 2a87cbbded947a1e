"""Command-line front end.

Reports are written to ``--out``; stdout gets a one-line summary. Exit codes:
0 ok, 1 verification failed, 2 instability, 3 parse error, 4 validation
error, 5 reducible chain, 6 state-space cap, 64 usage error.
"""

from __future__ import annotations

import argparse
import secrets
import sys
from pathlib import Path

from . import __version__
from .closed_solver import DEFAULT_STATE_CAP, solve_traffic, stationary_distribution
from .errors import (
    InstabilityError,
    ModelParseError,
    ModelValidationError,
    ReducibleChainError,
    StateSpaceTooLargeError,
)
from .model import ClosedNetworkModel, OpenNetworkModel, load_model, validate_closed, validate_open
from .open_solver import analyze_open
from .reports import RunManifest, now_iso, sha256_file, to_csv, to_json, write_atomic
from .simulator import SimConfig, compare_to_analytic, simulate
from .verifier import (
    DEFAULT_ORACLE_CAP,
    balance_check,
    closed_oracle,
    independence_check,
    interior_states,
)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_UNSTABLE = 2
EXIT_PARSE = 3
EXIT_INVALID = 4
EXIT_REDUCIBLE = 5
EXIT_CAP = 6
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--model", required=True, type=Path, help="model JSON file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kellynet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kellynet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze-open", help="equilibrium report of an open network")
    _common(p)
    p.add_argument("--n-max", type=int, default=None, help="longest queue length reported")

    p = sub.add_parser("analyze-closed", help="stationary distribution of a closed network")
    _common(p)
    p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)

    p = sub.add_parser("simulate", help="simulate the network and collect occupancy statistics")
    _common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--horizon", type=float, default=1e5)
    p.add_argument("--warmup", type=float, default=1e3)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--compare", action="store_true", help="also compare with the analytic solution")
    p.add_argument("--trajectory", action="store_true", help="dump state changes as JSON lines")
    p.add_argument("--allow-unstable", action="store_true")
    p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)

    p = sub.add_parser("verify", help="brute-force checks of the analytic solution")
    _common(p)
    p.add_argument("--max-customers", type=int, default=4)
    p.add_argument("--interior-margin", type=int, default=1)
    p.add_argument("--oracle-cap", type=int, default=DEFAULT_ORACLE_CAP)
    p.add_argument("--n-bound", type=int, default=5, help="queue-length bound of the independence check")
    return parser


def _load(path: Path, kind: str | None):
    model = load_model(path)
    if kind is not None and model.kind != kind:
        raise ModelValidationError([f"kind: expected a {kind} model, got {model.kind}"])
    problems = validate_open(model) if isinstance(model, OpenNetworkModel) else validate_closed(model)
    if problems:
        raise ModelValidationError(problems)
    return model


class _Run:
    """Collects outputs of one command and writes the manifest last."""

    def __init__(self, args, argv, seed=None):
        self.args = args
        self.out: Path = args.out
        flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "command"}
        self.manifest = RunManifest(__version__, args.command, list(argv), flags, str(args.model),
                                    sha256_file(args.model), seed)

    def write(self, name: str, text: str):
        write_atomic(self.out / name, text)
        self.manifest.outputs.append(name)

    def wants(self, fmt: str) -> bool:
        return self.args.format in (fmt, "both")

    def finish(self):
        self.manifest.finished = now_iso()
        write_atomic(self.out / "manifest.json", to_json(self.manifest.to_dict()))


def cmd_analyze_open(args, argv) -> int:
    model = _load(args.model, "open")
    run = _Run(args, argv)
    report = analyze_open(model, n_max=args.n_max)
    if run.wants("json"):
        run.write("report.json", to_json(report.to_dict()))
    if run.wants("csv"):
        run.write("pmf.csv", to_csv(report.csv_rows()))
    run.finish()
    p0 = ", ".join(f"P[N{n.node}=0]={n.pmf[0]:.6g}" for n in report.nodes)
    print(f"analyze-open: {model.J} node(s), {p0}")
    return EXIT_OK


def cmd_analyze_closed(args, argv) -> int:
    model = _load(args.model, "closed")
    run = _Run(args, argv)
    eq = stationary_distribution(model, cap=args.state_cap)
    if run.wants("json"):
        run.write("report.json", to_json(eq.to_dict()))
    if run.wants("csv"):
        run.write("states.csv", to_csv(eq.csv_rows()))
        rows = [("node", "n", "p")] + [(j, n, p) for j in range(1, model.J + 1)
                                      for n, p in enumerate(eq.marginal(j).tolist())]
        run.write("marginals.csv", to_csv(rows))
    run.finish()
    print(f"analyze-closed: {len(eq.states)} states, B_N={eq.B_N:.6g}, traffic residual={eq.traffic.residual:.3g}")
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    if not args.horizon > args.warmup >= 0:
        raise UsageError(f"--horizon ({args.horizon}) must exceed --warmup ({args.warmup}) >= 0")
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    seed = args.seed if args.seed is not None else secrets.randbits(64)
    if not 0 <= seed < 2**64:
        raise UsageError("--seed must be an unsigned 64-bit integer")
    model = _load(args.model, None)
    run = _Run(args, argv, seed)
    config = SimConfig(seed=seed, horizon=args.horizon, warmup=args.warmup, replications=args.reps,
                       allow_unstable=args.allow_unstable)
    if args.trajectory:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "trajectory.jsonl", "w") as fh:
            stats = simulate(model, config, trajectory=fh)
        run.manifest.outputs.append("trajectory.jsonl")
    else:
        stats = simulate(model, config)
    if run.wants("json"):
        run.write("stats.json", to_json(stats.to_dict()))
    if run.wants("csv"):
        run.write("histograms.csv", to_csv(stats.csv_rows()))
    summary = f"simulate: {stats.kind} model, {args.reps} replication(s), seed {seed}"
    if args.compare:
        report = analyze_open(model) if isinstance(model, OpenNetworkModel) else \
            stationary_distribution(model, cap=args.state_cap)
        cmp = compare_to_analytic(stats, report)
        run.write("comparison.json", to_json(cmp.to_dict()))
        summary += f", max TV {cmp.max_tv:.4g}"
    run.finish()
    print(summary)
    return EXIT_OK


def cmd_verify(args, argv) -> int:
    model = _load(args.model, None)
    run = _Run(args, argv)
    if isinstance(model, OpenNetworkModel):
        states = interior_states(model, args.max_customers, args.interior_margin)
        balance = balance_check(model, states, interior_margin=args.interior_margin)
        indep = independence_check(model, n_bound=args.n_bound)
        doc = {"kind": "open", "balance": balance.to_dict(), "independence": indep.to_dict()}
        ok = balance.passed and indep.passed
        summary = (f"verify: {balance.states_checked} states, max balance residual "
                   f"{balance.max_relative_residual:.3g}, independence error {indep.max_error:.3g}")
    else:
        traffic = solve_traffic(model)
        oracle = closed_oracle(model, cap=args.oracle_cap)
        doc = {"kind": "closed", "traffic_residual": traffic.residual, "oracle": oracle.to_dict()}
        ok = oracle.passed and traffic.residual <= oracle.threshold
        summary = (f"verify: {oracle.ordered_state_count} ordered states, residual "
                   f"{oracle.stationary_residual:.3g}, max diff {oracle.max_abs_diff:.3g}")
    doc["passed"] = ok
    run.write("verify.json", to_json(doc))
    run.finish()
    print(summary + ("" if ok else " -- FAILED"))
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "analyze-open": cmd_analyze_open,
    "analyze-closed": cmd_analyze_closed,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"kellynet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelParseError as exc:
        print(f"kellynet: cannot parse model: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelValidationError as exc:
        print("kellynet: invalid model:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INVALID
    except InstabilityError as exc:
        nodes = ", ".join(map(str, exc.nodes)) or "?"
        print(f"kellynet: unstable node(s) {nodes}: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ReducibleChainError as exc:
        print(f"kellynet: reducible chain: {exc}", file=sys.stderr)
        return EXIT_REDUCIBLE
    except StateSpaceTooLargeError as exc:
        print(f"kellynet: state space too large ({exc.count} states): {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())

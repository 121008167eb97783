"""Command-line interface.

Exit codes: 0 on success (whatever the fit quality), 1 when ``mc-check``
finds a failing check, 2 for usage or validation errors, 3 for numerical
failures such as an undefined or boundary MLE when covariance is required.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from floret.design import ParameterVector, build_design_matrix
from floret.errors import BoundaryError, EstimationError, ModelError
from floret.estimation import fit_mle
from floret.report import (
    counts_to_csv,
    fit_report,
    format_checks,
    format_fit,
    format_matrix,
    format_structure,
    load_counts,
    structure_report,
)
from floret.simulate import (
    SAMPLERS,
    SimulationConfig,
    check_report,
    run_monte_carlo,
    sample_multinomial,
    sample_path,
)
from floret.tree import SequentialTree, load_model

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


def parse_theta(text: str, tree: SequentialTree) -> ParameterVector:
    """Parse ``floret:v1[:v2...],floret:...``; each floret may omit its last value."""
    values = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        fid, *nums = item.split(":")
        if not nums:
            raise ModelError(f"--theta item {item!r} must look like floret:value[:value...]")
        try:
            values[fid] = [float(v) for v in nums]
        except ValueError:
            raise ModelError(f"--theta item {item!r} has a non-numeric value") from None
    return ParameterVector.from_mapping(tree, values)


def default_seed() -> int:
    raw = os.environ.get("FLORET_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ModelError(f"FLORET_SEED must be an integer, got {raw!r}") from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def cmd_validate(args) -> int:
    tree = load_model(args.model)
    report = structure_report(tree, build_design_matrix(tree))
    sys.stdout.write(_dump(report) if args.format == "json" else format_structure(report))
    return EXIT_OK


def cmd_matrix(args) -> int:
    tree = load_model(args.model)
    m = build_design_matrix(tree)
    if args.format == "json":
        sys.stdout.write(_dump({"rows": m.row_labels(), "leaves": tree.leaf_labels(), "entries": m.entries.tolist()}))
    else:
        sys.stdout.write(format_matrix(tree, m))
    return EXIT_OK


def cmd_fit(args) -> int:
    tree = load_model(args.model)
    m = build_design_matrix(tree)
    y = load_counts(args.data, tree)
    fit = fit_mle(m, y)
    if fit.boundary_flag and args.require_covariance:
        raise BoundaryError("MLE lies on the simplex boundary; covariance is undefined")
    report = fit_report(tree, m, fit)
    sys.stdout.write(_dump(report) if args.format == "json" else format_fit(report))
    return EXIT_OK


def cmd_simulate(args) -> int:
    tree = load_model(args.model)
    theta = parse_theta(args.theta, tree)
    seed = default_seed() if args.seed is None else args.seed
    if args.sampler == "path":
        y = sample_path(tree, theta, args.n, seed)
    else:
        y = sample_multinomial(build_design_matrix(tree), theta, args.n, seed)
    sys.stdout.write(counts_to_csv(tree, y) if args.format == "csv" else json.dumps(y.y.tolist()) + "\n")
    return EXIT_OK


def cmd_mc_check(args) -> int:
    tree = load_model(args.model)
    theta = parse_theta(args.theta, tree) if args.theta else ParameterVector.uniform(tree)
    seed = default_seed() if args.seed is None else args.seed
    cfg = SimulationConfig(theta, args.n, args.reps, seed, args.sampler)
    report = run_monte_carlo(cfg, tree, workers=args.workers)
    checks = check_report(report, cov_tol=args.cov_tol, rate_tol=args.rate_tol)
    out = report.to_dict()
    out["checks"] = [c.__dict__ for c in checks]
    out["passed"] = all(c.passed for c in checks)
    sys.stdout.write(_dump(out))
    sys.stderr.write(format_checks(checks))
    return EXIT_OK if out["passed"] else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floret", description="Fit floret (staged-tree) models to sequential-design data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file and report its structure")
    p.add_argument("model")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("matrix", help="print the design matrix")
    p.add_argument("model")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("fit", help="fit the model to leaf counts")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--require-covariance", action="store_true",
                   help="exit with status 3 instead of warning when the MLE is on the boundary")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate leaf counts")
    p.add_argument("model")
    p.add_argument("--theta", required=True, help="floret:value[:value...],...")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="defaults to $FLORET_SEED, else 0")
    p.add_argument("--sampler", choices=SAMPLERS, default="path")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc-check", help="Monte Carlo check of the asymptotic covariance")
    p.add_argument("model")
    p.add_argument("--theta", default=None, help="true parameters; uniform within each floret if omitted")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=None, help="defaults to $FLORET_SEED, else 0")
    p.add_argument("--sampler", choices=SAMPLERS, default="multinomial")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cov-tol", type=float, default=0.10)
    p.add_argument("--rate-tol", type=float, default=0.02)
    p.set_defaults(func=cmd_mc_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"floret: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EstimationError, BoundaryError) as exc:
        print(f"floret: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

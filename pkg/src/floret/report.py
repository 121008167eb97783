"""Data-file parsing and fit reports (JSON and aligned text)."""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from floret.asymptotics import standard_errors
from floret.design import DesignMatrix, degrees_of_freedom, overall_effects
from floret.errors import ModelError
from floret.estimation import FitResult, ObservedCounts, sufficient_statistics
from floret.gof import goodness_of_fit
from floret.tree import SequentialTree


def parse_counts(text: str, tree: SequentialTree, source: str = "<data>") -> ObservedCounts:
    """Parse a JSON array of leaf counts or CSV rows ``leaf_path,count``.

    In the CSV form leaves that are not listed have count zero.
    """
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
            raise ModelError(f"{source}: counts must be integers")
        if len(raw) != tree.n_leaves:
            raise ModelError(f"{source}: model has {tree.n_leaves} leaves but {len(raw)} counts were given")
        return ObservedCounts(np.array(raw, dtype=np.int64))

    y = np.zeros(tree.n_leaves, dtype=np.int64)
    seen: set[int] = set()
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 2:
            raise ModelError(f"{source}:{lineno}: expected 'leaf_path,count'")
        path, count = row[0].strip(), row[1].strip()
        if lineno == 1 and path == "leaf_path":
            continue
        try:
            i = tree.leaf_index(path)
        except ModelError as exc:
            raise ModelError(f"{source}:{lineno}: {exc}") from None
        if i in seen:
            raise ModelError(f"{source}:{lineno}: leaf {path!r} listed twice")
        try:
            value = int(count)
        except ValueError:
            raise ModelError(f"{source}:{lineno}: count {count!r} is not an integer") from None
        if value < 0:
            raise ModelError(f"{source}:{lineno}: negative count")
        seen.add(i)
        y[i] = value
    return ObservedCounts(y)


def load_counts(path: str | Path, tree: SequentialTree) -> ObservedCounts:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read data file {path}: {exc.strerror}") from None
    return parse_counts(text, tree, str(path))


def counts_to_csv(tree: SequentialTree, y: ObservedCounts) -> str:
    lines = ["leaf_path,count"]
    lines += [f"{label},{int(v)}" for label, v in zip(tree.leaf_labels(), y.y)]
    return "\n".join(lines) + "\n"


def _rational(q: Fraction | tuple[int, int]) -> dict[str, int]:
    num, den = (q.numerator, q.denominator) if isinstance(q, Fraction) else q
    return {"numerator": int(num), "denominator": int(den)}


def _matrix(a: np.ndarray, labels: list[str]) -> dict[str, Any]:
    a = np.atleast_2d(a)
    return {"rows": a.shape[0], "cols": a.shape[1], "labels": labels, "data": a.ravel().tolist()}


def structure_report(tree: SequentialTree, m: DesignMatrix) -> dict[str, Any]:
    try:
        df: int | None = degrees_of_freedom(m)
    except ModelError:
        df = None
    members = tree.members()
    return {
        "I": tree.n_leaves,
        "K": tree.n_nodes,
        "F": tree.n_florets,
        "df": df,
        "leaves": tree.leaf_labels(),
        "florets": [
            {
                "id": f.id,
                "outcomes": list(f.outcomes),
                "nodes": ["/".join(tree.nodes[k].path) or "(root)" for k in members[f.id]],
                "overall_effect": oe,
            }
            for f, oe in zip(tree.florets, overall_effects(m).values())
        ],
    }


def fit_report(tree: SequentialTree, m: DesignMatrix, fit: FitResult) -> dict[str, Any]:
    """Everything reported by ``floret fit`` as a JSON-ready dict.

    Edge estimates carry their unreduced rational form: the floret's
    sufficient statistic over its exposure size.
    """
    stats = sufficient_statistics(m, fit.counts)
    integral = fit.counts.is_integral
    oe = overall_effects(m)
    warnings = []

    theta = {}
    for f in m.florets:
        entries = []
        for j, label in enumerate(f.outcomes):
            entry: dict[str, Any] = {"outcome": label, "value": float(fit.theta_hat.block(f.id)[j])}
            if integral:
                entry.update(_rational((stats.by_floret[f.id][j], stats.exposure[f.id])))
            entries.append(entry)
        theta[f.id] = entries

    exposure = {}
    for f in m.floret_ids:
        e = fit.exposure[f]
        item: dict[str, Any] = {
            "observed": e.observed,
            "expected": e.expected,
            "ratio": e.ratio,
            "rate": e.rate,
            "overall_effect": oe[f],
        }
        if e.ratio_exact is not None:
            item["expected_rational"] = _rational(e.expected_exact)
            item["ratio_rational"] = _rational(e.ratio_exact)
        exposure[f] = item

    out: dict[str, Any] = {
        "model": structure_report(tree, m),
        "N": fit.N,
        "counts": fit.counts.y.tolist(),
        "boundary": fit.boundary_flag,
        "theta_hat": theta,
        "p_hat": fit.p_hat.tolist(),
        "y_hat": fit.y_hat.tolist(),
        "log_likelihood": fit.log_likelihood,
        "exposure": exposure,
    }

    if fit.boundary_flag:
        warnings.append("MLE lies on the simplex boundary; covariance and p-values are not reported")
        out.update(phi_theta=None, phi_p=None, se_theta=None, se_p=None)
    else:
        se = standard_errors(fit, m)
        out["phi_theta"] = _matrix(se.covariance.phi_theta, se.covariance.theta_labels)
        out["phi_p"] = _matrix(se.covariance.phi_p, tree.leaf_labels())
        out["se_theta"] = {f: v.tolist() for f, v in se.theta.items()}
        out["se_p"] = se.p.tolist()

    gof = goodness_of_fit(m, fit)
    out["gof"] = {
        "x2": gof.x2,
        "g2": gof.g2,
        "df": gof.df,
        "p_x2": gof.p_x2,
        "p_g2": gof.p_g2,
        "small_expected": gof.small_expected,
        "p_values": "asymptotic chi-square at the plug-in estimate",
    }
    warnings.extend(gof.warnings)
    out["warnings"] = warnings
    return out


def rationals(report: dict[str, Any]) -> dict[str, Any]:
    """Recover the exact rationals from a (possibly re-parsed) fit report."""
    theta = {
        f: [Fraction(e["numerator"], e["denominator"]) for e in entries]
        for f, entries in report["theta_hat"].items()
        if all("numerator" in e for e in entries)
    }
    ratio = {
        f: Fraction(e["ratio_rational"]["numerator"], e["ratio_rational"]["denominator"])
        for f, e in report["exposure"].items()
        if "ratio_rational" in e
    }
    return {"theta_hat": theta, "exposure_ratio": ratio}


def _g(x: float | None) -> str:
    return "-" if x is None else f"{x:.6g}"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]

    def fmt(row: list[str]) -> str:
        # first column left-aligned, the rest right-aligned
        return "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(row, widths)))

    return [fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]


def format_structure(s: dict[str, Any]) -> str:
    lines = [f"leaves I = {s['I']}, nodes K = {s['K']}, florets F = {s['F']}, df = {s['df']}"]
    for f in s["florets"]:
        lines.append(
            f"floret {f['id']}: outcomes {', '.join(f['outcomes'])}; "
            f"{len(f['nodes'])} node(s); overall effect {'yes' if f['overall_effect'] else 'no'}"
        )
    return "\n".join(lines) + "\n"


def format_matrix(tree: SequentialTree, m: DesignMatrix) -> str:
    header = [""] + tree.leaf_labels()
    rows = [[label] + [str(v) for v in row] for label, row in zip(m.row_labels(), m.entries)]
    return "\n".join(_table(header, rows)) + "\n"


def format_fit(report: dict[str, Any]) -> str:
    lines = [format_structure(report["model"]).rstrip(), f"N = {report['N']}", ""]

    se = report.get("se_theta") or {}
    rows = []
    for f, entries in report["theta_hat"].items():
        for j, e in enumerate(entries):
            frac = f"{e['numerator']}/{e['denominator']}" if "numerator" in e else ""
            rows.append([f"{f}:{e['outcome']}", frac, _g(e["value"]), _g(se[f][j]) if f in se else "-"])
    lines += ["Edge probabilities"] + _table(["parameter", "rational", "estimate", "SE"], rows) + [""]

    se_p = report.get("se_p")
    rows = [
        [leaf, str(y), _g(p), _g(yh), _g(se_p[i]) if se_p else "-"]
        for i, (leaf, y, p, yh) in enumerate(
            zip(report["model"]["leaves"], report["counts"], report["p_hat"], report["y_hat"])
        )
    ]
    lines += ["Leaves"] + _table(["leaf", "observed", "p_hat", "fitted", "SE(p_hat)"], rows) + [""]

    rows = [
        [f, str(e["observed"]), _g(e["expected"]), _g(e["ratio"]), _g(e["rate"]), "yes" if e["overall_effect"] else "no"]
        for f, e in report["exposure"].items()
    ]
    lines += ["Exposure"] + _table(["floret", "observed", "expected", "ratio", "rate", "OE"], rows) + [""]

    g = report["gof"]
    lines.append(f"Pearson X2 = {_g(g['x2'])}  p = {_g(g['p_x2'])}")
    lines.append(f"Deviance G2 = {_g(g['g2'])}  p = {_g(g['p_g2'])}")
    lines.append(f"df = {g['df']}  (p-values: {g['p_values']})")
    lines.append(f"log-likelihood kernel = {_g(report['log_likelihood'])}")
    for w in report["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def format_checks(checks) -> str:
    rows = [
        [c.name, _g(c.value), _g(c.target), _g(c.tolerance), "PASS" if c.passed else "FAIL"]
        for c in checks
    ]
    return "\n".join(_table(["check", "value", "target", "tolerance", "verdict"], rows)) + "\n"

"""Pearson and deviance goodness-of-fit statistics with chi-square tail areas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from floret.design import DesignMatrix, degrees_of_freedom
from floret.errors import ModelError
from floret.estimation import FitResult

SMALL_EXPECTED = 5.0

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 10_000


def pearson_x2(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ModelError("observed and fitted counts differ in length")
    if (y_hat <= 0).any():
        raise ModelError("Pearson statistic needs strictly positive fitted counts")
    return float(np.sum((y - y_hat) ** 2 / y_hat))


def deviance_g2(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ModelError("observed and fitted counts differ in length")
    if (y_hat <= 0).any():
        raise ModelError("deviance needs strictly positive fitted counts")
    pos = y > 0
    g2 = 2.0 * float(np.sum(y[pos] * np.log(y[pos] / y_hat[pos])))
    # roundoff can leave a tiny negative value at a perfect fit
    return max(g2, 0.0)


def _lower_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    ap, term = a, 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"series for P({a}, {x}) did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_fraction(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by a Lentz continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"continued fraction for Q({a}, {x}) did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    if a <= 0 or x < 0 or math.isnan(x):
        raise ValueError(f"Q(a, x) needs a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _lower_series(a, x)))
    return min(1.0, max(0.0, _upper_fraction(a, x)))


def chisq_upper_tail(x: float, df: int) -> float:
    """``P(X >= x)`` for a chi-square variable with ``df`` degrees of freedom."""
    if isinstance(df, bool) or int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    if x < 0:
        raise ValueError(f"chi-square statistic must be non-negative, got {x}")
    return gamma_q(df / 2.0, x / 2.0)


@dataclass(frozen=True)
class GofSummary:
    """Goodness-of-fit statistics.

    The p-values are asymptotic chi-square approximations evaluated at the
    plug-in estimate; they are ``None`` for boundary fits and saturated models.
    """

    x2: float
    g2: float
    df: int
    p_x2: float | None
    p_g2: float | None
    small_expected: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def goodness_of_fit(m: DesignMatrix, fit: FitResult) -> GofSummary:
    """Pearson X^2 and deviance G^2 for a fitted model.

    For a boundary fit, leaves with zero fitted count necessarily have zero
    observed count and are left out of both sums.
    """
    df = degrees_of_freedom(m)
    y = fit.counts.y.astype(float)
    y_hat = fit.y_hat
    keep = y_hat > 0
    if (y[~keep] > 0).any():
        raise AssertionError("positive count on a leaf with zero fitted probability")
    x2 = pearson_x2(y[keep], y_hat[keep])
    g2 = deviance_g2(y[keep], y_hat[keep])

    notes = []
    small = np.flatnonzero(y_hat < SMALL_EXPECTED).tolist()
    if small:
        notes.append(
            f"{len(small)} fitted count(s) below {SMALL_EXPECTED:g}; "
            "the chi-square approximation may be poor"
        )
    if fit.boundary_flag:
        notes.append("MLE on the simplex boundary; p-values not reported")
        p_x2 = p_g2 = None
    elif df == 0:
        notes.append("saturated model (df = 0); p-values not reported")
        p_x2 = p_g2 = None
    else:
        p_x2 = chisq_upper_tail(x2, df)
        p_g2 = chisq_upper_tail(g2, df)
    return GofSummary(x2, g2, df, p_x2, p_g2, small, notes)


@dataclass(frozen=True)
class HomogeneityTest:
    statistic: float
    df: int
    p_value: float


def homogeneity_test(a, b) -> HomogeneityTest:
    """Pearson chi-square test that two count vectors share one multinomial distribution.

    Cells empty in both samples carry no information and are dropped.
    """
    table = np.vstack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    table = table[:, table.sum(axis=0) > 0]
    rows = table.sum(axis=1, keepdims=True)
    if (rows == 0).any():
        raise ModelError("both samples need at least one observation")
    df = table.shape[1] - 1
    if df < 1:
        return HomogeneityTest(0.0, 0, 1.0)
    expected = rows * table.sum(axis=0, keepdims=True) / table.sum()
    stat = float(np.sum((table - expected) ** 2 / expected))
    return HomogeneityTest(stat, df, chisq_upper_tail(stat, df))

"""Closed-form maximum likelihood for floret models.

Within floret ``f`` the estimate is the floret's sufficient statistic
``M_f y`` divided by its exposure size ``S_f(y) = 1' M_f y``. Leaf
probabilities follow by plugging the edge estimates back into the tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from floret.design import (
    DesignMatrix,
    ParameterVector,
    leaf_probabilities,
    leaf_probabilities_exact,
)
from floret.errors import EstimationError, ModelError


@dataclass(frozen=True, eq=False)
class ObservedCounts:
    """Leaf counts in leaf order.

    Counts are normally integers; fractional counts are accepted so that a
    model can be refitted to its own fitted values.
    """

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1:
            raise ModelError("counts must be a one-dimensional vector")
        if not np.issubdtype(y.dtype, np.number) or not np.all(np.isfinite(y)):
            raise ModelError("counts must be finite numbers")
        if (y < 0).any():
            raise ModelError("counts must be non-negative")
        if np.issubdtype(y.dtype, np.integer) or np.all(y == np.round(y)):
            y = y.astype(np.int64)
        else:
            y = y.astype(float)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def N(self):
        return self.y.sum().item()

    @property
    def is_integral(self) -> bool:
        return np.issubdtype(self.y.dtype, np.integer)

    def __len__(self) -> int:
        return self.y.size


def as_counts(y: ObservedCounts | Sequence[float] | np.ndarray) -> ObservedCounts:
    return y if isinstance(y, ObservedCounts) else ObservedCounts(np.asarray(y))


@dataclass(frozen=True)
class SufficientStatistics:
    by_floret: dict[str, np.ndarray]
    exposure: dict[str, int | float]


@dataclass(frozen=True)
class FloretExposure:
    observed: int | float
    expected: float
    ratio: float
    rate: float
    expected_exact: Fraction | None = None
    ratio_exact: Fraction | None = None


@dataclass(frozen=True)
class ExposureStats:
    """Per-floret exposure size, fitted exposure size, ratio and rate."""

    florets: dict[str, FloretExposure]

    def __getitem__(self, floret_id: str) -> FloretExposure:
        return self.florets[floret_id]

    def ratios(self) -> dict[str, float]:
        return {f: e.ratio for f, e in self.florets.items()}

    def rates(self) -> dict[str, float]:
        return {f: e.rate for f, e in self.florets.items()}


@dataclass(frozen=True, eq=False)
class FitResult:
    counts: ObservedCounts
    theta_hat: ParameterVector
    p_hat: np.ndarray
    y_hat: np.ndarray
    exposure: ExposureStats
    boundary_flag: bool
    log_likelihood: float
    theta_hat_exact: dict[str, tuple[Fraction, ...]] | None = None
    p_hat_exact: tuple[Fraction, ...] | None = field(default=None, repr=False)

    @property
    def N(self):
        return self.counts.N


def _check_dims(m: DesignMatrix, y: ObservedCounts) -> None:
    if len(y) != m.n_leaves:
        raise ModelError(f"model has {m.n_leaves} leaves but {len(y)} counts were given")


def log_likelihood(m: DesignMatrix, theta: ParameterVector, y) -> float:
    """Multinomial log-likelihood kernel ``sum_f (M_f y)' log theta_f``."""
    y = as_counts(y)
    _check_dims(m, y)
    theta.check_matches(m)
    if not theta.is_interior:
        raise ModelError("log-likelihood needs strictly positive edge probabilities")
    return float((m.entries @ y.y) @ np.log(theta.flat))


def _kernel_with_zeros(m: DesignMatrix, theta: ParameterVector, y: ObservedCounts) -> float:
    stats = m.entries @ y.y
    flat = theta.flat
    used = stats > 0
    return float(stats[used] @ np.log(flat[used]))


def sufficient_statistics(m: DesignMatrix, y) -> SufficientStatistics:
    y = as_counts(y)
    _check_dims(m, y)
    by_floret = {f: m.block(f) @ y.y for f in m.floret_ids}
    exposure = {f: v.sum().item() for f, v in by_floret.items()}
    return SufficientStatistics(by_floret, exposure)


def fit_mle(m: DesignMatrix, y, exact: bool = True) -> FitResult:
    """Closed-form MLE of edge and leaf probabilities.

    When some sufficient-statistic component is zero the estimate lies on the
    simplex boundary; it is still returned, with ``boundary_flag`` set.
    With integer counts and ``exact`` set, rational forms of the estimates and
    exposure ratios are attached as well.

    Raises:
        EstimationError: if a floret is never exposed (``S_f(y) == 0``) or the
            data are empty.
    """
    y = as_counts(y)
    _check_dims(m, y)
    if y.N <= 0:
        raise EstimationError("no observations")
    stats = sufficient_statistics(m, y)
    for f, s in stats.exposure.items():
        if s == 0:
            raise EstimationError(f"floret {f!r} is never exposed in the data; its MLE is undefined")

    blocks = tuple(stats.by_floret[f] / stats.exposure[f] for f in m.floret_ids)
    theta_hat = ParameterVector(m.floret_ids, blocks)
    p_hat = leaf_probabilities(m, theta_hat)
    y_hat = y.N * p_hat
    boundary = any((stats.by_floret[f] == 0).any() for f in m.floret_ids)

    theta_exact = p_exact = None
    if exact and y.is_integral:
        theta_exact = {
            f: tuple(Fraction(int(v), int(stats.exposure[f])) for v in stats.by_floret[f])
            for f in m.floret_ids
        }
        flat = [t for f in m.floret_ids for t in theta_exact[f]]
        p_exact = tuple(leaf_probabilities_exact(m, flat))

    partial = FitResult(
        counts=y,
        theta_hat=theta_hat,
        p_hat=p_hat,
        y_hat=y_hat,
        exposure=ExposureStats({}),
        boundary_flag=boundary,
        log_likelihood=_kernel_with_zeros(m, theta_hat, y),
        theta_hat_exact=theta_exact,
        p_hat_exact=p_exact,
    )
    exposure = exposure_statistics(m, partial, y)
    return replace(partial, exposure=exposure)


def exposure_statistics(m: DesignMatrix, fit: FitResult, y=None) -> ExposureStats:
    """Observed and fitted exposure sizes, exposure ratios and exposure rates."""
    y = fit.counts if y is None else as_counts(y)
    _check_dims(m, y)
    n = y.N
    out = {}
    for f in m.floret_ids:
        weights = m.block(f).sum(axis=0)
        observed = (weights @ y.y).item()
        expected = float(weights @ fit.y_hat)
        expected_exact = ratio_exact = None
        if fit.p_hat_exact is not None:
            expected_exact = n * sum(int(w) * p for w, p in zip(weights, fit.p_hat_exact))
            ratio_exact = expected_exact / observed
        out[f] = FloretExposure(
            observed=observed,
            expected=expected,
            ratio=expected / observed,
            rate=expected / n,
            expected_exact=expected_exact,
            ratio_exact=ratio_exact,
        )
    return ExposureStats(out)


@dataclass(frozen=True)
class ProportionalityReport:
    """Componentwise ratios ``(M_f y_hat)_j / (M_f y)_j`` against ``gamma_f``."""

    ratios: dict[str, np.ndarray]
    gamma: dict[str, float]
    max_deviation: dict[str, float]
    undefined: dict[str, list[int]]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(d < self.tolerance for d in self.max_deviation.values())


def check_proportionality(m: DesignMatrix, fit: FitResult, y=None, tol: float = 1e-9) -> ProportionalityReport:
    """Check that fitted sufficient statistics are proportional to the observed ones.

    Components with a zero observed statistic have no ratio; they are listed in
    ``undefined`` and skipped.
    """
    y = fit.counts if y is None else as_counts(y)
    ratios, gamma, dev, undefined = {}, {}, {}, {}
    for f in m.floret_ids:
        obs = (m.block(f) @ y.y).astype(float)
        fitted = m.block(f) @ fit.y_hat
        zero = obs == 0
        r = np.full(obs.shape, np.nan)
        r[~zero] = fitted[~zero] / obs[~zero]
        g = fit.exposure[f].ratio
        ratios[f] = r
        gamma[f] = g
        undefined[f] = np.flatnonzero(zero).tolist()
        dev[f] = float(np.max(np.abs(r[~zero] - g)) / g) if (~zero).any() else 0.0
    return ProportionalityReport(ratios, gamma, dev, undefined, tol)

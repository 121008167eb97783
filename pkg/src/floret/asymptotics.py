"""Asymptotic covariance of the edge- and leaf-probability estimates.

Parameters are reduced to the non-redundant set by dropping the last outcome
of every floret. With ``A = diag(p)^{-1/2} dp/dtheta``, the information
matrix ``A'A`` is block diagonal with floret blocks

    S_f(p) * (diag(1 / theta_f[:-1]) + 1 1' / theta_f[-1])

and its inverse has blocks ``(diag(t) - t t') / S_f(p)`` where
``t = theta_f[:-1]``, i.e. a multinomial covariance scaled down by the
floret's exposure rate ``S_f(p) = 1' M_f p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from floret.design import DesignMatrix, ParameterVector, leaf_probabilities
from floret.errors import BoundaryError
from floret.estimation import FitResult


def _require_interior(theta: ParameterVector) -> None:
    if not theta.is_interior:
        raise BoundaryError("asymptotic formulas need every edge probability strictly inside (0, 1)")


def exposure_rates(m: DesignMatrix, p: np.ndarray) -> dict[str, float]:
    """Expected floret applications per subject, ``1' M_f p``."""
    return {f: float(m.block(f).sum(axis=0) @ p) for f in m.floret_ids}


def jacobian(m: DesignMatrix, theta: ParameterVector) -> np.ndarray:
    """``I x (J - F)`` derivative of leaf probabilities w.r.t. the reduced parameters."""
    theta.check_matches(m)
    _require_interior(theta)
    p = leaf_probabilities(m, theta)
    flat = theta.flat
    cols = []
    for sl in m.row_blocks.values():
        last = sl.stop - 1
        for r in range(sl.start, last):
            cols.append(p * (m.entries[r] / flat[r] - m.entries[last] / flat[last]))
    return np.column_stack(cols)


def _blocks(m: DesignMatrix, theta: ParameterVector, inverse: bool) -> np.ndarray:
    theta.check_matches(m)
    _require_interior(theta)
    rates = exposure_rates(m, leaf_probabilities(m, theta))
    d = m.n_params - m.n_florets
    out = np.zeros((d, d))
    start = 0
    for f in m.floret_ids:
        t = theta.block(f)
        head, last = t[:-1], t[-1]
        k = head.size
        if inverse:
            block = (np.diag(head) - np.outer(head, head)) / rates[f]
        else:
            block = rates[f] * (np.diag(1.0 / head) + 1.0 / last)
        out[start : start + k, start : start + k] = block
        start += k
    return out


def ata_matrix(m: DesignMatrix, theta: ParameterVector) -> np.ndarray:
    """Closed-form ``A'A`` (per-subject Fisher information of the reduced parameters)."""
    return _blocks(m, theta, inverse=False)


def covariance_theta(m: DesignMatrix, theta: ParameterVector) -> np.ndarray:
    """Asymptotic covariance of ``sqrt(N) * (reduced theta_hat - theta)``."""
    return _blocks(m, theta, inverse=True)


def covariance_p(m: DesignMatrix, theta: ParameterVector) -> np.ndarray:
    """Asymptotic covariance of ``sqrt(N) * (p_hat - p)``."""
    jac = jacobian(m, theta)
    phi = jac @ covariance_theta(m, theta) @ jac.T
    return (phi + phi.T) / 2


@dataclass(frozen=True, eq=False)
class CovarianceResult:
    phi_theta: np.ndarray
    phi_p: np.ndarray
    exposure: dict[str, float]
    theta_labels: list[str]


def asymptotic_covariance(m: DesignMatrix, theta: ParameterVector) -> CovarianceResult:
    return CovarianceResult(
        phi_theta=covariance_theta(m, theta),
        phi_p=covariance_p(m, theta),
        exposure=exposure_rates(m, leaf_probabilities(m, theta)),
        theta_labels=m.reduced_labels(),
    )


@dataclass(frozen=True, eq=False)
class StandardErrors:
    theta: dict[str, np.ndarray]  # one entry per outcome, including the dropped one
    p: np.ndarray
    covariance: CovarianceResult


def standard_errors(fit: FitResult, m: DesignMatrix) -> StandardErrors:
    """Plug-in Wald standard errors at the fitted parameters.

    The last component of each floret is one minus the others, so its
    variance is the sum of all entries of that floret's covariance block.

    Raises:
        BoundaryError: if the fit lies on the simplex boundary.
    """
    if fit.boundary_flag:
        raise BoundaryError("standard errors are undefined for a boundary MLE")
    cov = asymptotic_covariance(m, fit.theta_hat)
    n = fit.N
    se_theta, start = {}, 0
    for f in m.florets:
        k = f.arity - 1
        block = cov.phi_theta[start : start + k, start : start + k]
        var = np.append(np.diag(block), block.sum())
        se_theta[f.id] = np.sqrt(var / n)
        start += k
    se_p = np.sqrt(np.clip(np.diag(cov.phi_p), 0.0, None) / n)
    return StandardErrors(se_theta, se_p, cov)

"""Data generation from floret models and Monte Carlo checks of the asymptotics.

Random streams come from numpy's PCG64 generator. Replicate ``k`` of a study
with seed ``s`` draws from ``SeedSequence(s, spawn_key=(k,))``, so each
replicate is a pure function of ``(s, k)`` and results do not depend on the
order in which replicates run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from floret.asymptotics import covariance_theta, exposure_rates
from floret.design import DesignMatrix, ParameterVector, build_design_matrix, leaf_probabilities
from floret.errors import BoundaryError, EstimationError, ModelError
from floret.estimation import ObservedCounts, fit_mle
from floret.gof import goodness_of_fit
from floret.tree import SequentialTree

SAMPLERS = ("path", "multinomial")

SeedLike = int | np.random.Generator | None


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def replicate_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def sample_path(tree: SequentialTree, theta0: ParameterVector, n: int, seed: SeedLike = None) -> ObservedCounts:
    """Walk ``n`` subjects from the root, drawing every edge from its floret's distribution.

    Boundary parameter vectors are allowed; zero-probability edges are never taken.
    """
    if n < 0:
        raise ModelError("sample size must be non-negative")
    if theta0.floret_ids != tree.floret_ids:
        raise ModelError("parameter vector does not match the tree's florets")
    rng = make_rng(seed)
    cums = {}
    for f, block in zip(theta0.floret_ids, theta0.blocks):
        c = np.cumsum(block)
        c[-1] = 1.0
        cums[f] = c

    # nodes are numbered in preorder, so every child index exceeds its parent's
    at = np.zeros(n, dtype=np.int64)  # >= 0: node index, < 0: -(leaf + 1)
    for k, node in enumerate(tree.nodes):
        here = np.flatnonzero(at == k)
        if here.size == 0:
            continue
        outcome = np.searchsorted(cums[node.floret], rng.random(here.size), side="right")
        dest = np.array([-(c.index + 1) if c.is_leaf else c.index for c in node.children])
        at[here] = dest[outcome]
    counts = np.bincount(-at - 1, minlength=tree.n_leaves)
    return ObservedCounts(counts.astype(np.int64))


def sample_multinomial(m: DesignMatrix, theta0: ParameterVector, n: int, seed: SeedLike = None) -> ObservedCounts:
    """Draw leaf counts directly from ``Mult(n, p(theta0))``."""
    if n < 0:
        raise ModelError("sample size must be non-negative")
    theta0.check_matches(m)
    if not theta0.is_interior:
        raise BoundaryError("multinomial sampler needs an interior parameter vector")
    p = leaf_probabilities(m, theta0)
    return ObservedCounts(make_rng(seed).multinomial(n, p).astype(np.int64))


@dataclass(frozen=True)
class SimulationConfig:
    theta0: ParameterVector
    n: int
    reps: int
    seed: int
    sampler: str = "multinomial"

    def __post_init__(self):
        if self.n < 1 or self.reps < 1:
            raise ModelError("n and reps must both be at least 1")
        if self.sampler not in SAMPLERS:
            raise ModelError(f"sampler must be one of {SAMPLERS}")
        if self.sampler == "multinomial" and not self.theta0.is_interior:
            raise BoundaryError("multinomial sampler needs an interior parameter vector")


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    """Summary of a Monte Carlo study; "scaled error" is ``sqrt(N) * (theta_hat - theta0)``."""

    n: int
    reps: int
    seed: int
    sampler: str
    labels: list[str]
    theta0: np.ndarray
    n_boundary: int
    n_undefined: int
    mean_scaled_error: np.ndarray
    cov_scaled_error: np.ndarray
    phi_theta: np.ndarray
    frobenius_rel: float
    mean_abs_error: float
    mean_gamma: dict[str, float]
    max_gamma_deviation: dict[str, float]
    mean_rate: dict[str, float]
    mean_observed_rate: dict[str, float]
    target_rate: dict[str, float]
    df: int
    mean_x2: float
    mean_g2: float
    sd_x2: float
    sd_g2: float

    @property
    def n_used(self) -> int:
        return self.reps - self.n_boundary - self.n_undefined

    def to_dict(self) -> dict[str, Any]:
        def mat(a: np.ndarray) -> dict[str, Any]:
            a = np.atleast_2d(a)
            return {"rows": a.shape[0], "cols": a.shape[1], "data": a.ravel().tolist()}

        return {
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "sampler": self.sampler,
            "labels": self.labels,
            "theta0": self.theta0.tolist(),
            "n_boundary": self.n_boundary,
            "n_undefined": self.n_undefined,
            "n_used": self.n_used,
            "mean_scaled_error": self.mean_scaled_error.tolist(),
            "cov_scaled_error": mat(self.cov_scaled_error),
            "phi_theta": mat(self.phi_theta),
            "frobenius_rel": self.frobenius_rel,
            "mean_abs_error": self.mean_abs_error,
            "mean_gamma": self.mean_gamma,
            "max_gamma_deviation": self.max_gamma_deviation,
            "mean_rate": self.mean_rate,
            "mean_observed_rate": self.mean_observed_rate,
            "target_rate": self.target_rate,
            "df": self.df,
            "mean_x2": self.mean_x2,
            "mean_g2": self.mean_g2,
            "sd_x2": self.sd_x2,
            "sd_g2": self.sd_g2,
        }


def _one_replicate(cfg: SimulationConfig, tree: SequentialTree, m: DesignMatrix, k: int):
    rng = replicate_rng(cfg.seed, k)
    if cfg.sampler == "path":
        y = sample_path(tree, cfg.theta0, cfg.n, rng)
    else:
        y = sample_multinomial(m, cfg.theta0, cfg.n, rng)
    try:
        fit = fit_mle(m, y, exact=False)
    except EstimationError:
        return None
    gof = goodness_of_fit(m, fit)
    obs_rate = [fit.exposure[f].observed / cfg.n for f in m.floret_ids]
    return (
        fit.boundary_flag,
        fit.theta_hat.reduced,
        [fit.exposure[f].ratio for f in m.floret_ids],
        [fit.exposure[f].rate for f in m.floret_ids],
        obs_rate,
        gof.x2,
        gof.g2,
    )


def run_monte_carlo(cfg: SimulationConfig, tree: SequentialTree, workers: int = 1) -> MonteCarloReport:
    """Fit ``cfg.reps`` simulated datasets and summarise them against the asymptotic theory.

    Replicates whose MLE is undefined (a floret never exposed) or on the
    boundary are counted and left out of every aggregate.
    """
    m = build_design_matrix(tree)
    cfg.theta0.check_matches(m)
    if not cfg.theta0.is_interior:
        raise BoundaryError("Monte Carlo study needs an interior true parameter vector")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: _one_replicate(cfg, tree, m, k), range(cfg.reps)))
    else:
        results = [_one_replicate(cfg, tree, m, k) for k in range(cfg.reps)]

    n_undefined = sum(r is None for r in results)
    fitted = [r for r in results if r is not None]
    n_boundary = sum(r[0] for r in fitted)
    good = [r for r in fitted if not r[0]]
    if len(good) < 2:
        raise EstimationError("fewer than two replicates produced interior estimates")

    theta0 = cfg.theta0.reduced
    est = np.array([r[1] for r in good])
    gam = np.array([r[2] for r in good])
    rate = np.array([r[3] for r in good])
    obs_rate = np.array([r[4] for r in good])
    x2 = np.array([r[5] for r in good])
    g2 = np.array([r[6] for r in good])

    scaled = np.sqrt(cfg.n) * (est - theta0)
    cov = np.atleast_2d(np.cov(scaled, rowvar=False))
    phi = covariance_theta(m, cfg.theta0)
    ids = m.floret_ids
    p0 = leaf_probabilities(m, cfg.theta0)
    return MonteCarloReport(
        n=cfg.n,
        reps=cfg.reps,
        seed=cfg.seed,
        sampler=cfg.sampler,
        labels=m.reduced_labels(),
        theta0=theta0,
        n_boundary=int(n_boundary),
        n_undefined=int(n_undefined),
        mean_scaled_error=scaled.mean(axis=0),
        cov_scaled_error=cov,
        phi_theta=phi,
        frobenius_rel=float(np.linalg.norm(cov - phi) / np.linalg.norm(phi)),
        mean_abs_error=float(np.abs(est - theta0).mean()),
        mean_gamma=dict(zip(ids, gam.mean(axis=0).tolist())),
        max_gamma_deviation=dict(zip(ids, np.abs(gam - 1.0).max(axis=0).tolist())),
        mean_rate=dict(zip(ids, rate.mean(axis=0).tolist())),
        mean_observed_rate=dict(zip(ids, obs_rate.mean(axis=0).tolist())),
        target_rate=exposure_rates(m, p0),
        df=int(m.n_leaves - 1 - (m.n_params - m.n_florets)),
        mean_x2=float(x2.mean()),
        mean_g2=float(g2.mean()),
        sd_x2=float(x2.std(ddof=1)),
        sd_g2=float(g2.std(ddof=1)),
    )


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool


def check_report(report: MonteCarloReport, cov_tol: float = 0.10, rate_tol: float = 0.02) -> list[Check]:
    """Compare a Monte Carlo report with the asymptotic covariance and exposure rates.

    ``cov_tol`` bounds the relative Frobenius distance between the empirical
    and asymptotic covariance; ``rate_tol`` bounds the relative error of each
    floret's mean fitted exposure rate.
    """
    checks = [
        Check("covariance (relative Frobenius)", report.frobenius_rel, 0.0, cov_tol,
              report.frobenius_rel < cov_tol)
    ]
    for f, target in report.target_rate.items():
        got = report.mean_rate[f]
        rel = abs(got - target) / target
        checks.append(Check(f"exposure rate {f}", got, target, rate_tol, rel < rate_tol))
    return checks

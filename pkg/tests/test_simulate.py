import json

import numpy as np
import pytest

from floret import fixtures
from floret.asymptotics import covariance_theta
from floret.design import ParameterVector, build_design_matrix
from floret.errors import BoundaryError, ModelError
from floret.gof import homogeneity_test
from floret.simulate import (
    SimulationConfig,
    check_report,
    run_monte_carlo,
    sample_multinomial,
    sample_path,
)
from floret.tree import validate_tree

SEED = 20240531


def theta_for(tree, values):
    return ParameterVector.from_mapping(tree, values)


def test_zero_subjects():
    tree = fixtures.model("two_step")
    theta = ParameterVector.uniform(tree)
    assert sample_path(tree, theta, 0, 1).y.tolist() == [0] * 9
    assert sample_multinomial(build_design_matrix(tree), theta, 0, 1).y.tolist() == [0] * 9


def test_degenerate_path_sampler():
    tree = fixtures.model("calves")
    y = sample_path(tree, theta_for(tree, {"infection": [1, 0]}), 500, 3)
    assert y.y.tolist() == [500, 0, 0]
    with pytest.raises(BoundaryError):
        sample_multinomial(build_design_matrix(tree), theta_for(tree, {"infection": [1, 0]}), 5, 3)


def test_seed_determinism():
    tree = fixtures.model("calves")
    theta = theta_for(tree, {"infection": [0.6]})
    a = sample_path(tree, theta, 10_000, 42).y
    b = sample_path(tree, theta, 10_000, 42).y
    assert a.tobytes() == b.tobytes()
    assert sample_path(tree, theta, 10_000, 43).y.tobytes() != a.tobytes()


def test_two_leaf_proportion():
    tree = validate_tree({"florets": [{"id": "coin", "outcomes": ["h", "t"]}],
                          "tree": {"floret": "coin", "children": {"h": "leaf", "t": "leaf"}}})
    m = build_design_matrix(tree)
    y = sample_multinomial(m, ParameterVector.uniform(tree), 1_000_000, SEED)
    assert abs(y.y[0] / 1_000_000 - 0.5) < 0.002


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_samplers_agree_in_distribution(name):
    tree = fixtures.model(name)
    m = build_design_matrix(tree)
    rng = np.random.default_rng(SEED)
    theta = ParameterVector(m.floret_ids, tuple(rng.dirichlet(np.full(f.arity, 3.0)) for f in m.florets))
    a = sample_path(tree, theta, 10_000, SEED)
    b = sample_multinomial(m, theta, 10_000, SEED + 1)
    assert homogeneity_test(a.y, b.y).p_value > 0.001


def test_config_validation():
    tree = fixtures.model("calves")
    theta = ParameterVector.uniform(tree)
    with pytest.raises(ModelError):
        SimulationConfig(theta, 0, 10, 1)
    with pytest.raises(ModelError):
        SimulationConfig(theta, 10, 10, 1, sampler="bogus")
    with pytest.raises(BoundaryError):
        SimulationConfig(theta_for(tree, {"infection": [1, 0]}), 10, 10, 1)


def test_calves_variance():
    tree = fixtures.model("calves")
    report = run_monte_carlo(SimulationConfig(theta_for(tree, {"infection": [0.6]}), 10_000, 2000, SEED), tree)
    assert report.cov_scaled_error[0, 0] == pytest.approx(0.15, rel=0.07)
    assert report.phi_theta[0, 0] == pytest.approx(0.15, rel=1e-12)
    assert report.n_boundary == report.n_undefined == 0


def test_hwe_gamma_exactly_one():
    tree = fixtures.model("hwe")
    report = run_monte_carlo(SimulationConfig(theta_for(tree, {"T": [0.3]}), 200, 300, SEED), tree)
    assert report.max_gamma_deviation["T"] < 1e-12


def test_regimen_exposure_rates():
    tree = fixtures.model("regimen")
    cfg = SimulationConfig(theta_for(tree, {"T1": [0.5], "T2": [0.5]}), 10_000, 500, SEED)
    report = run_monte_carlo(cfg, tree)
    assert report.target_rate == pytest.approx({"T1": 1.5, "T2": 0.75}, rel=1e-12)
    assert report.mean_rate["T1"] == pytest.approx(1.5, rel=0.01)
    assert report.mean_rate["T2"] == pytest.approx(0.75, rel=0.01)
    assert report.mean_observed_rate["T1"] == pytest.approx(1.5, rel=0.01)


def test_consistency_rate():
    tree = fixtures.model("two_step")
    theta = theta_for(tree, {"severity": [0.3, 0.3], "response": [0.4]})
    sizes = [100, 1000, 10_000]
    errors = [run_monte_carlo(SimulationConfig(theta, n, 400, SEED), tree).mean_abs_error for n in sizes]
    assert errors[0] > errors[1] > errors[2]
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert -0.6 <= slope <= -0.4


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_covariance_converges(name):
    tree = fixtures.model(name)
    m = build_design_matrix(tree)
    rng = np.random.default_rng(SEED)
    theta = ParameterVector(m.floret_ids, tuple(0.5 * rng.dirichlet(np.full(f.arity, 4.0)) + 0.5 / f.arity
                                                for f in m.florets))
    report = run_monte_carlo(SimulationConfig(theta, 10_000, 2000, SEED), tree)
    assert report.frobenius_rel < 0.10
    np.testing.assert_allclose(report.phi_theta, covariance_theta(m, theta))
    cov = report.cov_scaled_error
    np.testing.assert_allclose(cov, cov.T)
    assert np.linalg.eigvalsh(cov).min() >= -1e-12
    # X2 and G2 are approximately chi-square(df) under the model
    se_x2 = report.sd_x2 / np.sqrt(report.n_used)
    se_g2 = report.sd_g2 / np.sqrt(report.n_used)
    assert abs(report.mean_x2 - report.df) < 3 * se_x2
    assert abs(report.mean_g2 - report.df) < 3 * se_g2


def test_boundary_replicates_are_counted():
    tree = fixtures.model("vaccine")
    cfg = SimulationConfig(theta_for(tree, {"response": [0.9]}), 5, 200, SEED)
    report = run_monte_carlo(cfg, tree)
    assert report.n_boundary > 0
    assert report.n_used + report.n_boundary + report.n_undefined == 200


def test_workers_give_identical_report():
    tree = fixtures.model("two_step")
    cfg = SimulationConfig(ParameterVector.uniform(tree), 500, 200, SEED, sampler="path")
    serial = json.dumps(run_monte_carlo(cfg, tree).to_dict())
    parallel = json.dumps(run_monte_carlo(cfg, tree, workers=4).to_dict())
    assert serial == parallel


def test_check_report_verdicts():
    tree = fixtures.model("calves")
    report = run_monte_carlo(SimulationConfig(theta_for(tree, {"infection": [0.6]}), 10_000, 500, SEED), tree)
    checks = check_report(report)
    assert [c.name for c in checks] == ["covariance (relative Frobenius)", "exposure rate infection"]
    assert checks[1].target == pytest.approx(1.6)
    assert all(c.passed for c in check_report(report, cov_tol=0.5))
    assert not check_report(report, cov_tol=1e-9)[0].passed


def test_monte_carlo_needs_interior_theta():
    tree = fixtures.model("calves")
    cfg = SimulationConfig(theta_for(tree, {"infection": [1, 0]}), 10, 5, 1, sampler="path")
    with pytest.raises(BoundaryError):
        run_monte_carlo(cfg, tree)

from fractions import Fraction

import numpy as np
import pytest

from floret import fixtures
from floret.design import (
    DesignMatrix,
    ParameterVector,
    build_design_matrix,
    degrees_of_freedom,
    floret_has_overall_effect,
    in_row_space,
    leaf_probabilities,
    leaf_probabilities_exact,
)
from floret.errors import ModelError
from floret.tree import Floret, validate_tree
from oracles import matrix_from_rewalk, random_model, random_spec, random_theta

TWO_STEP_M = [
    [1, 1, 1, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 1, 1, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 1, 1, 1],
    [2, 1, 0, 2, 1, 0, 2, 1, 0],
    [0, 1, 1, 0, 1, 1, 0, 1, 1],
]


@pytest.mark.parametrize("name, expected", [
    ("hwe", [[2, 1, 1, 0], [0, 1, 1, 2]]),
    ("calves", [[2, 1, 0], [0, 1, 1]]),
    ("vaccine", [[3, 2, 1, 0], [0, 1, 1, 1]]),
    ("regimen", [[2, 2, 1, 0, 0], [0, 0, 1, 1, 1], [1, 0, 0, 1, 0], [0, 1, 0, 0, 1]]),
    ("two_step", TWO_STEP_M),
])
def test_fixture_matrices(name, expected):
    m = build_design_matrix(fixtures.model(name))
    np.testing.assert_array_equal(m.entries, expected)


def test_row_blocks():
    m = build_design_matrix(fixtures.model("two_step"))
    assert m.row_blocks == {"severity": slice(0, 3), "response": slice(3, 5)}
    assert m.reduced_labels() == ["severity:mild", "severity:moderate", "response:no_improvement"]
    np.testing.assert_array_equal(m.reduced_index(), [0, 1, 3])


@pytest.mark.parametrize("arity", [2, 3, 5])
def test_single_node_gives_identity(arity):
    outcomes = [f"o{j}" for j in range(arity)]
    tree = validate_tree({"florets": [{"id": "f", "outcomes": outcomes}],
                          "tree": {"floret": "f", "children": {o: "leaf" for o in outcomes}}})
    np.testing.assert_array_equal(build_design_matrix(tree).entries, np.eye(arity, dtype=int))


def test_matrix_matches_independent_rewalk(rng):
    for _ in range(300):
        spec, tree, m = random_model(rng)
        np.testing.assert_array_equal(m.entries, matrix_from_rewalk(spec))
        assert (m.entries.sum(axis=0) > 0).all()
        for f, nodes in tree.members().items():
            depth_counts = [
                sum(1 for g, _ in tree.leaf_edges(i) if g == f) for i in range(tree.n_leaves)
            ]
            np.testing.assert_array_equal(m.block(f).sum(axis=0), depth_counts)


@pytest.mark.parametrize("name, floret, expected", [
    ("hwe", "T", True),
    ("calves", "infection", False),
    ("vaccine", "response", False),
    ("regimen", "T1", False),
    ("regimen", "T2", False),
    ("two_step", "severity", True),
    ("two_step", "response", False),
])
def test_overall_effect(name, floret, expected):
    m = build_design_matrix(fixtures.model(name))
    assert floret_has_overall_effect(m, floret) is expected


def test_regimen_second_block_rows():
    m = build_design_matrix(fixtures.model("regimen"))
    np.testing.assert_array_equal(m.block("T2"), [[1, 0, 0, 1, 0], [0, 1, 0, 0, 1]])


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
@pytest.mark.parametrize("arity", [2, 3])
def test_complete_trees_have_overall_effect(depth, arity, rng):
    for _ in range(3):
        spec = random_spec(rng, max_depth=depth, complete=True, arities=(arity,))
        m = build_design_matrix(validate_tree(spec))
        assert len(set(m.entries.sum(axis=0))) == 1
        assert floret_has_overall_effect(m, m.floret_ids[0])


def test_row_space_is_exact():
    # (1, 1, 1) = (1e8+1, 1e8, 1e8) - 1e8 * (1, 1, 1)... with an off-by-one that floats miss
    rows = np.array([[10**12 + 1, 10**12, 10**12], [10**12, 10**12, 10**12 + 1]])
    assert not in_row_space(rows, [1, 1, 1])
    assert in_row_space(rows, [1, 0, -1])
    assert in_row_space(np.eye(3, dtype=int), [1, 1, 1])


@pytest.mark.parametrize("name, df", [
    ("two_step", 5), ("vaccine", 2), ("calves", 1), ("hwe", 2), ("regimen", 2),
])
def test_degrees_of_freedom(name, df):
    assert degrees_of_freedom(build_design_matrix(fixtures.model(name))) == df


def test_negative_df_raises():
    tree = validate_tree({"florets": [{"id": "f", "outcomes": ["a", "b"]}, {"id": "g", "outcomes": ["a", "b"]}],
                          "tree": {"floret": "f", "children": {"a": "leaf",
                                   "b": {"floret": "g", "children": {"a": "leaf", "b": "leaf"}}}}})
    assert degrees_of_freedom(build_design_matrix(tree)) == 0
    m = DesignMatrix(np.eye(2, dtype=int), (Floret("f", ("a", "b")),), ("a", "b"))
    assert degrees_of_freedom(m) == 0
    m = DesignMatrix(np.array([[1, 0], [0, 1], [1, 0], [0, 1]]),
                     (Floret("f", ("a", "b")), Floret("g", ("a", "b"))), ("a", "b"))
    with pytest.raises(ModelError):
        degrees_of_freedom(m)


def test_calves_leaf_probabilities():
    tree = fixtures.model("calves")
    m = build_design_matrix(tree)
    p = leaf_probabilities(m, ParameterVector.from_mapping(tree, {"infection": [0.5, 0.5]}))
    np.testing.assert_allclose(p, [0.25, 0.25, 0.5], rtol=0, atol=1e-15)


def test_regimen_leaf_probabilities():
    tree = fixtures.model("regimen")
    m = build_design_matrix(tree)
    p = leaf_probabilities(m, ParameterVector.from_mapping(tree, {"T1": [0.5], "T2": [0.5]}))
    np.testing.assert_allclose(p, [0.125, 0.125, 0.25, 0.25, 0.25], rtol=0, atol=1e-15)


def test_exact_leaf_probabilities():
    m = build_design_matrix(fixtures.model("calves"))
    assert leaf_probabilities_exact(m, [Fraction(2, 3), Fraction(1, 3)]) == [
        Fraction(4, 9), Fraction(2, 9), Fraction(1, 3)]


def test_degenerate_theta_concentrates_on_first_path():
    tree = fixtures.model("two_step")
    m = build_design_matrix(tree)
    theta = ParameterVector.from_mapping(tree, {"severity": [1, 0, 0], "response": [1, 0]})
    np.testing.assert_array_equal(leaf_probabilities(m, theta), [1, 0, 0, 0, 0, 0, 0, 0, 0])


def test_normalization_random(rng):
    for _ in range(1000):
        _, _, m = random_model(rng)
        theta = random_theta(rng, m, floor=0.0)
        assert abs(leaf_probabilities(m, theta).sum() - 1.0) < 1e-10


def test_parameter_vector_validation():
    tree = fixtures.model("two_step")
    with pytest.raises(ModelError, match="sum to"):
        ParameterVector.from_mapping(tree, {"severity": [0.5, 0.5, 0.5], "response": [0.5]})
    with pytest.raises(ModelError, match="non-negative"):
        ParameterVector.from_mapping(tree, {"severity": [0.5, 0.6], "response": [0.5]})
    with pytest.raises(ModelError, match="no probabilities"):
        ParameterVector.from_mapping(tree, {"severity": [0.2, 0.3]})
    with pytest.raises(ModelError, match="3 outcomes"):
        ParameterVector.from_mapping(tree, {"severity": [0.2], "response": [0.5]})
    with pytest.raises(ModelError, match="unknown"):
        ParameterVector.from_mapping(tree, {"severity": [0.2, 0.3], "response": [0.5], "x": [1]})
    theta = ParameterVector.from_mapping(tree, {"severity": [0.2, 0.3], "response": [0.4]})
    np.testing.assert_allclose(theta.flat, [0.2, 0.3, 0.5, 0.4, 0.6])
    np.testing.assert_allclose(theta.reduced, [0.2, 0.3, 0.4])
    assert theta.is_interior


def test_leaf_probabilities_dimension_mismatch():
    m = build_design_matrix(fixtures.model("calves"))
    other = ParameterVector.uniform(fixtures.model("regimen"))
    with pytest.raises(ModelError):
        leaf_probabilities(m, other)

#!/usr/bin/env python3
"""
Tests for the decision tree engine: Gini classification trees, second-order
regression trees, routing and structural invariants.
"""

import sys
from pathlib import Path

import numpy as np
from hypothesis import given, settings, strategies as st

# Add the repository root to the path so `src` imports resolve
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import FitError, PredictionError
from src.tree import (
    LEAF_WISE,
    SECOND_ORDER,
    Tree,
    TreeNode,
    TreeParams,
    apply_tree,
    fit_classification_tree,
    fit_regression_tree,
    predict_tree,
    predict_tree_matrix,
    soft_threshold_leaf,
)

REGRESSION = TreeParams(criterion=SECOND_ORDER)


def _stump(left_value, right_value, threshold=0.5, n_features=1):
    return Tree(nodes=(
        TreeNode(cover=2.0, feature_index=0, threshold=threshold, left=1, right=2),
        TreeNode(cover=1.0, leaf_value=left_value),
        TreeNode(cover=1.0, leaf_value=right_value),
    ), n_features=n_features)


def test_separable_stump():
    """The midpoint split is the unique best Gini split on 1-D separable data."""
    print("=== Testing separable 1-D data ===")
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    tree = fit_classification_tree(X, y, None, TreeParams(max_depth=1))
    root = tree.nodes[0]
    assert not root.is_leaf
    assert 1.0 < root.threshold < 2.0
    assert root.threshold == 1.5
    assert tree.nodes[root.left].leaf_value == (1.0, 0.0)
    assert tree.nodes[root.right].leaf_value == (0.0, 1.0)
    print("✓ Split at 1.5 with two pure leaves")


def test_pure_input_and_depth_zero():
    print("=== Testing degenerate trees ===")
    X = np.array([[0.0], [5.0], [9.0]])
    pure = fit_classification_tree(X, np.array([1, 1, 1]), None, TreeParams())
    assert pure.leaf_count == 1
    assert pure.nodes[0].leaf_value == (0.0, 1.0)

    shallow = fit_classification_tree(X, np.array([0, 1, 1]), None, TreeParams(max_depth=0))
    assert shallow.leaf_count == 1
    assert np.allclose(shallow.nodes[0].leaf_value, (1 / 3, 2 / 3))
    print("✓ Pure input and max_depth 0 give a single leaf")


def test_weights_and_tie_breaking():
    print("=== Testing weights and tie breaking ===")
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0, 0, 1, 1])
    tree = fit_classification_tree(X, y, None, TreeParams(max_depth=1))
    assert tree.nodes[0].feature_index == 0

    weights = np.array([2.0, 0.0, 1.0, 3.0])
    weighted = fit_classification_tree(X, y, weights, TreeParams(max_depth=0))
    assert weighted.nodes[0].cover == 6.0
    assert np.allclose(weighted.nodes[0].leaf_value, (2 / 6, 4 / 6))

    try:
        fit_classification_tree(X, y, np.zeros(4), TreeParams())
        raise AssertionError("Expected FitError for all-zero weights")
    except FitError:
        pass
    try:
        fit_classification_tree(np.empty((0, 2)), np.array([]), None, TreeParams())
        raise AssertionError("Expected FitError for empty input")
    except FitError:
        pass
    print("✓ Equal gains go to the lowest feature, weights become covers")


def test_soft_threshold_leaf():
    print("=== Testing soft-threshold leaf values ===")
    assert soft_threshold_leaf(2.0, 4.0, 0.0, 1.0) == -0.25
    assert soft_threshold_leaf(-2.0, 4.0, 0.0, 1.0) == 0.25
    assert soft_threshold_leaf(0.5, 4.0, 1.0, 1.0) == 0.0
    assert np.isclose(soft_threshold_leaf(3.0, 1.0, 1.0, 0.0), -1.5)
    print("✓ −sign(G)·max(|G|−α, 0)/(H+λ)")


def test_regression_tree_equal_gradients_and_clusters():
    print("=== Testing second-order regression trees ===")
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    flat = fit_regression_tree(X, np.full(4, 0.3), np.ones(4), REGRESSION)
    assert flat.leaf_count == 1
    assert np.isclose(flat.nodes[0].leaf_value[0], -0.3)

    X = np.array([[0.0, 7.0], [1.0, 7.0], [2.0, 7.0], [3.0, 7.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    tree = fit_regression_tree(X, g, np.ones(4), REGRESSION)
    root = tree.nodes[0]
    assert root.feature_index == 0 and root.threshold == 1.5
    assert tree.nodes[root.left].leaf_value == (1.0,)
    assert tree.nodes[root.right].leaf_value == (-1.0,)

    try:
        fit_regression_tree(X, g, np.ones(3), REGRESSION)
        raise AssertionError("Expected FitError for mismatched lengths")
    except FitError:
        pass
    print("✓ No split for equal gradients, one split for two clusters")


def test_regression_leaves_match_routed_rows():
    """With α=0 every leaf equals −G/(H+λ) over the training rows routed to it."""
    print("=== Testing regression leaf values ===")
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 3))
    g = rng.normal(size=80)
    h = rng.uniform(0.1, 1.0, size=80)
    params = TreeParams(criterion=SECOND_ORDER, max_depth=3, reg_lambda=0.5)
    tree = fit_regression_tree(X, g, h, params)
    leaves = apply_tree(tree, X)
    for leaf in np.unique(leaves):
        rows = leaves == leaf
        expected = -np.sum(g[rows]) / (np.sum(h[rows]) + 0.5)
        assert abs(tree.nodes[leaf].leaf_value[0] - expected) < 1e-10
    print("✓ Leaf values reproduce −G/(H+λ)")


def test_leaf_wise_growth_respects_max_leaves():
    print("=== Testing leaf-wise growth ===")
    rng = np.random.default_rng(8)
    X = rng.normal(size=(150, 4))
    g = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 - 1.0
    params = TreeParams(criterion=SECOND_ORDER, growth=LEAF_WISE, max_leaves=5, max_depth=10)
    tree = fit_regression_tree(X, g, np.ones(150), params)
    assert 1 < tree.leaf_count <= 5
    deep = fit_regression_tree(X, g, np.ones(150), TreeParams(criterion=SECOND_ORDER, max_depth=2))
    assert deep.depth() <= 2
    print(f"✓ Leaf-wise tree has {tree.leaf_count} leaves (limit 5)")


def test_routing_rules():
    print("=== Testing routing ===")
    stump = _stump((-1.0,), (1.0,))
    assert predict_tree(stump, [0.4])[0] == -1.0
    assert predict_tree(stump, [0.5])[0] == 1.0
    single = Tree(nodes=(TreeNode(cover=1.0, leaf_value=(0.7,)),), n_features=2)
    assert predict_tree(single, [100.0, -3.0])[0] == 0.7
    assert np.array_equal(apply_tree(stump, np.array([[0.1], [0.9], [0.5]])), [1, 2, 2])

    for bad in ([np.nan], [0.1, 0.2]):
        try:
            predict_tree(stump, bad)
            raise AssertionError(f"Expected PredictionError for {bad}")
        except PredictionError:
            pass
    print("✓ value < threshold goes left, the threshold itself goes right")


def test_structural_validation():
    print("=== Testing tree invariants ===")
    try:
        Tree(nodes=(
            TreeNode(cover=3.0, feature_index=0, threshold=0.5, left=1, right=2),
            TreeNode(cover=1.0, leaf_value=(0.0,)),
            TreeNode(cover=1.0, leaf_value=(1.0,)),
        ), n_features=1)
        raise AssertionError("Expected FitError for inconsistent cover")
    except FitError:
        pass
    try:
        Tree(nodes=(TreeNode(cover=1.0, feature_index=0, threshold=0.5, left=0, right=0),), n_features=1)
        raise AssertionError("Expected FitError for a cycle")
    except FitError:
        pass

    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] + 0.3 * X[:, 1] > 0).astype(int)
    tree = fit_classification_tree(X, y, None, TreeParams(max_depth=4))
    restored = Tree.from_list(tree.to_list(), 3)
    assert np.array_equal(predict_tree_matrix(tree, X), predict_tree_matrix(restored, X))
    assert np.allclose(predict_tree_matrix(tree, X).sum(axis=1), 1.0)
    print("✓ Cover and acyclicity enforced, node lists restore the same tree")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=1), min_size=2, max_size=20),
       st.integers(min_value=0, max_value=2 ** 16))
def test_deep_tree_fits_distinct_rows(labels, seed):
    """Distinct feature values and enough depth always give a perfect training fit."""
    rng = np.random.default_rng(seed)
    n = len(labels)
    X = np.column_stack([rng.permutation(n).astype(float), rng.normal(size=n)])
    y = np.array(labels)
    tree = fit_classification_tree(X, y, None, TreeParams(max_depth=25))
    predicted = np.argmax(predict_tree_matrix(tree, X), axis=1)
    assert np.array_equal(predicted, y)
    for node in tree.nodes:
        if node.is_leaf:
            assert abs(sum(node.leaf_value) - 1.0) < 1e-12


def main():
    """Run all tree tests."""
    tests = [
        test_separable_stump,
        test_pure_input_and_depth_zero,
        test_weights_and_tie_breaking,
        test_soft_threshold_leaf,
        test_regression_tree_equal_gradients_and_clusters,
        test_regression_leaves_match_routed_rows,
        test_leaf_wise_growth_respects_max_leaves,
        test_routing_rules,
        test_structural_validation,
        test_deep_tree_fits_distinct_rows,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"✗ {test.__name__} failed: {e}")

    if failed == 0:
        print("\n🎉 All tree tests passed!")
        sys.exit(0)
    print(f"\n❌ {failed} tree test(s) failed!")
    sys.exit(1)


if __name__ == '__main__':
    main()

import numpy as np
import pytest

from jgm.gradients import grad
from jgm.merge import MergeError, gradient_term, merge, merge_residual, objective

from .oracles import dense_merge, poisson_integration


def test_beta_zero_returns_reference_exactly():
    rng = np.random.default_rng(0)
    x_ref, g = rng.random((5, 4, 3)), rng.standard_normal((5, 4, 2, 3))
    np.testing.assert_array_equal(merge(x_ref, g, beta=0.0), x_ref)


@pytest.mark.parametrize("beta", [0.1, 1.0, 10.0])
def test_consistent_gradients_return_reference(beta):
    x_ref = np.random.default_rng(1).random((6, 6, 3))
    out = merge(x_ref, grad(x_ref), beta=beta)
    np.testing.assert_allclose(out, x_ref, atol=1e-8)


def test_one_by_three_against_dense_solve():
    x_ref = np.full((1, 3, 1), 0.5)
    g = np.zeros((1, 3, 2, 1))
    g[0, :, 1, 0] = 0.3
    # hand-built normal equations: (I + D^T D) x = x_ref + D^T g for the
    # 1x3 horizontal difference D = [[-1, 1, 0], [0, -1, 1], [0, 0, 0]]
    D = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, 0.0]])
    A = np.eye(3) + D.T @ D
    b = np.full(3, 0.5) + D.T @ np.full(3, 0.3)
    expected = np.linalg.solve(A, b)
    out = merge(x_ref, g, beta=1.0, tol=1e-12)
    np.testing.assert_allclose(out[0, :, 0], expected, atol=1e-8)


def test_random_suite_matches_dense():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x_ref = rng.random((4, 4, 3))
        g = rng.standard_normal((4, 4, 2, 3)) * 0.3
        beta = rng.uniform(0.05, 5.0)
        out = merge(x_ref, g, beta)
        ref = dense_merge(x_ref, g, beta)
        assert np.linalg.norm(out - ref) / np.linalg.norm(ref) <= 1e-8


def test_objective_examples():
    x_ref = np.random.default_rng(3).random((4, 5, 3))
    assert objective(x_ref, x_ref, grad(x_ref), 2.0) == 0.0


def test_minimizer_dominates_candidates():
    rng = np.random.default_rng(4)
    for _ in range(20):
        x_ref = rng.random((4, 4, 3))
        g = rng.standard_normal((4, 4, 2, 3)) * 0.5  # not integrable
        beta = rng.uniform(0.1, 3.0)
        x = merge(x_ref, g, beta)
        best = objective(x, x_ref, g, beta)
        assert best <= objective(x_ref, x_ref, g, beta)
        assert best <= objective(poisson_integration(x_ref, g), x_ref, g, beta)
        for _ in range(5):
            assert best <= objective(x + 1e-3 * rng.standard_normal(x.shape), x_ref, g, beta)


def test_first_order_condition():
    rng = np.random.default_rng(5)
    x_ref, g = rng.random((2, 9, 7, 3)), rng.standard_normal((2, 9, 7, 2, 3))
    x = merge(x_ref, g, 1.5, tol=1e-8)
    assert merge_residual(x, x_ref, g, 1.5) <= 1e-8


def test_gradient_term_non_increasing_in_beta():
    rng = np.random.default_rng(6)
    x_ref, g = rng.random((6, 6, 3)), rng.standard_normal((6, 6, 2, 3))
    values = [gradient_term(merge(x_ref, g, b, tol=1e-12), g) for b in [0, 0.1, 0.5, 1, 5, 20, 100]]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_linear_in_inputs():
    rng = np.random.default_rng(7)
    x_ref, g = rng.random((5, 5, 3)), rng.standard_normal((5, 5, 2, 3))
    a = merge(x_ref, g, 2.0, tol=1e-13)
    b = merge(3.0 * x_ref, 3.0 * g, 2.0, tol=1e-13)
    np.testing.assert_allclose(b, 3.0 * a, atol=1e-10)


def test_batched_systems_are_independent():
    rng = np.random.default_rng(8)
    x_ref, g = rng.random((3, 5, 6, 3)), rng.standard_normal((3, 5, 6, 2, 3))
    batched = merge(x_ref, g, 1.0)
    for k in range(3):
        np.testing.assert_allclose(batched[k], dense_merge(x_ref[k], g[k], 1.0), atol=1e-7)


def test_non_convergence_raises_with_residual():
    rng = np.random.default_rng(9)
    x_ref, g = rng.random((8, 8, 1)), rng.standard_normal((8, 8, 2, 1))
    with pytest.raises(MergeError) as info:
        merge(x_ref, g, 50.0, tol=1e-14, max_iter=2)
    assert info.value.residual > 1e-14


def test_invalid_beta():
    with pytest.raises(ValueError):
        merge(np.zeros((2, 2, 3)), np.zeros((2, 2, 2, 3)), beta=-1.0)

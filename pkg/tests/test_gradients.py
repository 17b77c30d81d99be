import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from jgm import forward
from jgm.gradients import grad, grad_adjoint, grad_scalar, laplacian

from .oracles import gradient_matrix


def test_constant_image_has_zero_gradient():
    assert not grad(np.full((5, 4, 3), 0.7)).any()


def test_column_vertical_differences():
    img = np.zeros((3, 1, 3))
    img[:, 0, 0] = [0.0, 0.5, 1.0]
    g = grad(img)
    np.testing.assert_allclose(g[:, 0, 0, 0], [0.5, 0.5, 0.0])
    assert not g[..., 1, :].any()


def test_single_pixel():
    assert not grad(np.ones((1, 1, 3))).any()


def test_trailing_edges_are_zero():
    g = grad(np.random.default_rng(1).random((5, 6, 3)))
    assert not g[-1, :, 0, :].any()
    assert not g[:, -1, 1, :].any()


def test_grad_scalar_ramp():
    y = np.tile(np.arange(4) * 0.25, (3, 1))
    g = grad_scalar(y)
    np.testing.assert_allclose(g[:, :3, 1], 0.25)
    np.testing.assert_array_equal(g[:, 3, 1], 0.0)
    assert not g[..., 0].any()
    assert not grad_scalar(np.full((3, 3), 0.4)).any()


def test_zero_field_adjoint():
    assert not grad_adjoint(np.zeros((4, 4, 2, 3))).any()


def test_adjoint_identity_100_pairs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        x = rng.standard_normal((8, 8, 3))
        f = rng.standard_normal((8, 8, 2, 3))
        lhs = np.sum(grad(x) * f)
        rhs = np.sum(x * grad_adjoint(f))
        assert abs(lhs - rhs) <= 1e-10


def test_laplacian_matches_dense_matrix():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 4, 3))
    G = gradient_matrix(4, 4)
    L = G.T @ G
    for c in range(3):
        np.testing.assert_allclose(laplacian(x)[..., c].ravel(), L @ x[..., c].ravel(), atol=1e-13)


def test_grad_matches_dense_matrix():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 5, 3))
    G = gradient_matrix(3, 5)
    g = grad(x)
    for c in range(3):
        dense = G @ x[..., c].ravel()
        np.testing.assert_allclose(g[..., 0, c].ravel(), dense[:15], atol=1e-15)
        np.testing.assert_allclose(g[..., 1, c].ravel(), dense[15:], atol=1e-15)


def test_linearity():
    rng = np.random.default_rng(5)
    x, z = rng.standard_normal((2, 6, 7, 3))
    np.testing.assert_allclose(grad(2.5 * x - 0.5 * z), 2.5 * grad(x) - 0.5 * grad(z), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(h=st.integers(1, 16), w=st.integers(1, 16), seed=st.integers(0, 2**32 - 1))
def test_adjointness_random_shapes(h, w, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((h, w, 3))
    f = rng.standard_normal((h, w, 2, 3))
    lhs, rhs = np.sum(grad(x) * f), np.sum(x * grad_adjoint(f))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@settings(max_examples=40, deadline=None)
@given(
    h=st.integers(1, 12),
    w=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
    name=st.sampled_from(sorted(forward.OPERATORS)),
)
def test_operator_commutes_with_gradient(h, w, seed, name):
    x = np.random.default_rng(seed).random((h, w, 3))
    op = forward.get_operator(name)
    lhs = grad_scalar(forward.apply(op, x))
    rhs = forward.apply(op, grad(x))
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_batched_matches_single():
    rng = np.random.default_rng(6)
    xs = rng.standard_normal((3, 4, 5, 3))
    g = grad(xs)
    for k in range(3):
        np.testing.assert_array_equal(g[k], grad(xs[k]))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles as O
from condiv import bregman as B
from condiv import tensor as T
from condiv.nn import seeded_rng
from condiv.tensor import ShapeError, Tensor

POTENTIALS = (B.SQUARED_EUCLIDEAN, B.NEGATIVE_ENTROPY, B.BURG)


def positive_pair(dim):
    elems = st.floats(0.01, 10.0, allow_nan=False)
    return st.tuples(hnp.arrays(np.float64, dim, elements=elems), hnp.arrays(np.float64, dim, elements=elems))


def test_examples():
    assert B.bregman_divergence(B.SQUARED_EUCLIDEAN, [2, 0], [0, 0]) == pytest.approx(2.0, abs=1e-15)
    for phi in POTENTIALS:
        assert B.bregman_divergence(phi, [0.3, 0.7], [0.3, 0.7]) == 0.0
    # frozen from oracles.neg_entropy_div
    got = B.bregman_divergence(B.NEGATIVE_ENTROPY, [0.5, 0.5], [0.25, 0.75])
    assert got == pytest.approx(0.14384, abs=5e-6)
    assert got == pytest.approx(O.neg_entropy_div([0.5, 0.5], [0.25, 0.75]), abs=1e-14)


def test_domain_and_shape_errors():
    with pytest.raises(B.DomainError):
        B.bregman_divergence(B.NEGATIVE_ENTROPY, [0.0, 1.0], [0.5, 0.5])
    with pytest.raises(B.DomainError):
        B.bregman_divergence(B.BURG, [0.5, 0.5], [-1.0, 0.5])
    with pytest.raises(ShapeError):
        B.bregman_divergence(B.SQUARED_EUCLIDEAN, [1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        B.potential("hinge")


@settings(max_examples=60, deadline=None)
@given(positive_pair(5))
def test_potential_gradient_matches_finite_differences(pair):
    x, _ = pair
    for phi in POTENTIALS:
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        num = np.array([(phi.value(x + h[i] * e) - phi.value(x - h[i] * e)) / (2 * h[i])
                        for i, e in enumerate(np.eye(len(x)))])
        ana = phi.gradient(x)
        assert np.all(np.abs(num - ana) <= 1e-6 * np.maximum(np.abs(ana), 1.0))


@settings(max_examples=60, deadline=None)
@given(positive_pair(4), st.floats(0.01, 0.99))
def test_potentials_are_convex(pair, lam):
    x, y = pair
    for phi in POTENTIALS:
        mid = phi.value(lam * x + (1 - lam) * y)
        assert mid <= lam * phi.value(x) + (1 - lam) * phi.value(y) + 1e-10


@settings(max_examples=60, deadline=None)
@given(positive_pair(4), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_linearity_in_potential(pair, a, b):
    x, y = pair
    mix = B.combine([(a, B.NEGATIVE_ENTROPY), (b, B.BURG)])
    want = a * B.bregman_divergence(B.NEGATIVE_ENTROPY, x, y) + b * B.bregman_divergence(B.BURG, x, y)
    assert abs(B.bregman_divergence(mix, x, y) - want) < 1e-10 * max(1.0, abs(want))


def test_deep_divergence_examples():
    assert B.deep_divergence(Tensor([[3.0, 1.0]]), Tensor([[0.0, 5.0]])).data[0, 0] == 2.0
    assert B.deep_divergence(Tensor([[1.0, 4.0]]), Tensor([[1.0, 4.0]])).data[0, 0] == 0.0
    assert B.deep_divergence(Tensor([[2.0, 2.0]]), Tensor([[0.0, 1.0]])).data[0, 0] == 0.0


def test_deep_divergence_matches_oracle_and_grad_flows_through_o1_only():
    rng = np.random.default_rng(4)
    o1 = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    o2 = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    D = B.deep_divergence(o1, o2)
    np.testing.assert_allclose(D.data, O.deep_divergence(o1.data.tolist(), o2.data.tolist()), atol=0)
    T.sum(D).backward()
    assert o2.grad is None or not o2.grad.any()
    assert o1.grad.any()
    with pytest.raises(ShapeError):
        B.deep_divergence(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_deep_divergence_structure(n, m, kappa, seed):
    rng = np.random.default_rng(seed)
    # coarse values force frequent argmax ties
    o1 = rng.integers(-2, 3, (n, kappa)).astype(float)
    o2 = rng.integers(-2, 3, (m, kappa)).astype(float)
    D = B.deep_divergence(Tensor(o1), Tensor(o2)).data
    assert D.shape == (n, m) and (D >= 0).all()
    same = np.argmax(o1, axis=1)[:, None] == np.argmax(o2, axis=1)[None, :]
    assert (D[same] == 0).all()


def two_coordinate_net():
    net = B.DeepDivergenceNet(2, 2, seeded_rng(0), widths=())
    net.weights[0].data[...] = np.array([[[1.0], [0.0]], [[0.0], [1.0]]])
    net.biases[0].data[...] = 0.0
    return net


def test_phi_hat_examples():
    net = two_coordinate_net()
    val, idx = B.phi_hat(net, Tensor([[3.0, 1.0], [1.0, 1.0]]))
    assert val.data.tolist() == [3.0, 1.0] and idx.tolist() == [0, 0]
    single = B.DeepDivergenceNet(3, 1, seeded_rng(1))
    z = seeded_rng(2).normal(size=(4, 3))
    val, idx = B.phi_hat(single, Tensor(z))
    w, b = single.affine_maps()
    np.testing.assert_allclose(val.data, z @ w[0] + b[0], rtol=1e-12)
    assert idx.tolist() == [0, 0, 0, 0]
    with pytest.raises(ShapeError):
        B.phi_hat(single, Tensor(np.ones((2, 4))))


def test_net_output_shape_and_affine_collapse():
    net = B.DeepDivergenceNet(6, 7, seeded_rng(3))
    z = seeded_rng(4).normal(size=(5, 6))
    out = net(Tensor(z)).data
    assert out.shape == (5, 7)
    w, b = net.affine_maps()
    np.testing.assert_allclose(out, z @ w.T + b, rtol=1e-11, atol=1e-12)


def test_convexity_check():
    rep = B.convexity_check(B.DeepDivergenceNet(8, 10, seeded_rng(5)), 1000, seeded_rng(6))
    assert rep.trials == 1000 and rep.violations == 0
    # kappa = 1 is affine: equality up to roundoff
    rep1 = B.convexity_check(B.DeepDivergenceNet(4, 1, seeded_rng(7)), 200, seeded_rng(8))
    assert rep1.ok and abs(rep1.max_excess) < 1e-12
    with pytest.raises(ValueError):
        B.convexity_check(B.DeepDivergenceNet(4, 3, seeded_rng(9), batch_norm=True), 10, seeded_rng(0))


def test_convexity_check_detects_nonconvex():
    class Concave(B.DeepDivergenceNet):
        def __call__(self, z):
            return T.reshape(-T.sum(z * z, axis=1), (z.shape[0], 1))

    rep = B.convexity_check(Concave(3, 1, seeded_rng(0)), 100, seeded_rng(1))
    assert rep.violations > 0


def test_burg_closed_form():
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0.1, 3, 6), rng.uniform(0.1, 3, 6)
    want = float(np.sum(x / y - np.log(x / y) - 1))
    assert abs(B.bregman_divergence(B.BURG, x, y) - want) < 1e-10
    assert abs(B.bregman_divergence(B.BURG, x, y) - O.burg_div(x.tolist(), y.tolist())) < 1e-10
    assert math.isclose(B.bregman_divergence(B.SQUARED_EUCLIDEAN, x, y),
                        O.squared_euclidean_div(x.tolist(), y.tolist()), abs_tol=1e-12)

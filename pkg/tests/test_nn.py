import numpy as np
import pytest

import oracles as O
from condiv import tensor as T
from condiv.nn import (MLP, AdamState, BatchNorm1d, GradCheckReport, Linear, MissingGradError,
                       ParamGraph, adam_step, grad_check, seeded_rng)
from condiv.tensor import Tensor


def scalar_graph(value, grad):
    params = ParamGraph()
    p = params.add("p", Tensor(np.array([value])))
    p.grad = np.array([grad])
    return params, p


def test_adam_zero_betas_example():
    params, p = scalar_graph(1.0, 1.0)
    adam_step(params, AdamState(lr=0.1, beta1=0.0, beta2=0.0, weight_decay=0.0, eps=0.0))
    assert p.data[0] == pytest.approx(0.9, abs=1e-15)
    assert O.adam_once(1.0, 1.0, 0.1, 0.0, 0.0, 0.0) == pytest.approx(0.9, abs=1e-15)


def test_adam_matches_reference_first_step():
    params, p = scalar_graph(0.7, -0.3)
    st = AdamState()
    adam_step(params, st)
    want = O.adam_once(0.7, -0.3, 0.005, 0.5, 0.999, 1e-8, wd=1e-4)
    assert p.data[0] == pytest.approx(want, rel=1e-14)


def test_adam_zero_grad_fixed_point():
    rng = np.random.default_rng(0)
    lin = Linear(3, 2, rng)
    before = lin.params.state()
    lin.params.zero_grad()
    adam_step(lin.params, AdamState(weight_decay=0.0))
    for k, v in lin.params.state().items():
        np.testing.assert_array_equal(v, before[k])


def test_adam_two_steps_recurrence():
    params, p = scalar_graph(1.0, 0.5)
    st = AdamState(lr=0.01, beta1=0.5, beta2=0.9, weight_decay=0.0)
    adam_step(params, st)
    p.grad = np.array([0.5])
    adam_step(params, st)
    assert st.step == 2
    m = 0.5 * (0.5 * 0.5) + 0.5 * 0.5
    v = 0.9 * (0.1 * 0.25) + 0.1 * 0.25
    assert st.m["p"][0] == pytest.approx(m)
    assert st.v["p"][0] == pytest.approx(v)


def test_adam_zeroes_grads_and_requires_them():
    params, p = scalar_graph(1.0, 2.0)
    adam_step(params, AdamState())
    np.testing.assert_array_equal(p.grad, [0.0])
    q = ParamGraph()
    q.add("w", Tensor([1.0]))
    with pytest.raises(MissingGradError, match="'w'"):
        adam_step(q, AdamState())


def test_rng_determinism_and_streams():
    a = seeded_rng(42).uniform(size=100)
    np.testing.assert_array_equal(a, seeded_rng(42).uniform(size=100))
    assert not np.array_equal(seeded_rng(1).uniform(size=10), seeded_rng(2).uniform(size=10))
    assert not np.array_equal(seeded_rng(1, 5).uniform(size=10), seeded_rng(1, 6).uniform(size=10))
    u = seeded_rng(7).uniform(size=1_000_000)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_param_graph_contract():
    g = ParamGraph()
    g.add("b", Tensor([1.0]))
    g.add("a", Tensor([2.0]))
    assert g.names() == ["b", "a"]
    with pytest.raises(KeyError):
        g.add("a", Tensor([3.0]))
    g.load_state({"a": np.array([5.0]), "b": np.array([6.0])})
    assert g["a"].data[0] == 5.0
    with pytest.raises(KeyError):
        g.load_state({"a": np.array([5.0])})
    with pytest.raises(T.ShapeError):
        g.load_state({"a": np.zeros(2), "b": np.zeros(1)})


def test_set_trainable_leaves_buffers_alone():
    bn = BatchNorm1d(3)
    g = ParamGraph()
    g.extend("bn", bn.params)
    g.set_trainable("bn", True)
    assert [p.name for p in g.trainable()] == ["bn.gamma", "bn.beta"]
    g.set_trainable("bn", False)
    assert g.trainable() == []


def test_linear_init_bounds_and_mlp_shapes():
    rng = seeded_rng(0)
    mlp = MLP([5, 7, 3], rng)
    assert mlp.out_dim == 3
    w = mlp.params["0.weight"].data
    assert np.abs(w).max() <= 1 / np.sqrt(5)
    out = mlp(Tensor(np.ones((4, 5))))
    assert out.shape == (4, 3) and out.data.min() >= 0


def test_grad_check_quadratic_exact():
    params = ParamGraph()
    w = params.add("w", Tensor(seeded_rng(3).normal(size=(4, 3))))
    rep = grad_check(lambda: T.sum(w * w) * 0.5, params)
    assert isinstance(rep, GradCheckReport)
    assert rep.ok and rep.max_rel_error < 1e-9 and rep.checked == 12


def test_grad_check_reports_wrong_gradient():
    params = ParamGraph()
    w = params.add("w", Tensor([1.0, 2.0]))

    def f():
        # gradient deliberately broken: forward is w^2, backward returns 1
        out = T._make("bad", w.data * w.data, (w,), lambda g: (g,))
        return T.sum(out)

    rep = grad_check(f, params)
    assert not rep.ok and {fail[1] for fail in rep.failures} == {(0,), (1,)}


def test_grad_check_step_precondition():
    params = ParamGraph()
    params.add("w", Tensor([1.0]))
    for bad in (0.0, -1e-5, 1e-2):
        with pytest.raises(ValueError):
            grad_check(lambda: T.sum(params["w"]), params, step=bad)


def test_grad_check_restores_parameters():
    params = ParamGraph()
    w = params.add("w", Tensor(seeded_rng(5).normal(size=6)))
    before = w.data.copy()
    grad_check(lambda: T.sum(T.exp(w)), params, oracle_dtype=np.longdouble)
    np.testing.assert_array_equal(w.data, before)


def test_structurally_zero_gradients_need_extended_oracle():
    # A bias feeding batch norm has gradient exactly zero; float64 finite
    # differences of an O(1) loss then show ~1e-11 noise, which fails the
    # 1e-8-floored relative error.  The extended-precision oracle does not.
    rng = seeded_rng(11)
    lin, bn = Linear(3, 4, rng), BatchNorm1d(4)
    params = ParamGraph()
    params.extend("lin", lin.params)
    params.extend("bn", bn.params)
    x = rng.normal(size=(6, 3))
    target = rng.normal(size=(6, 4))

    def f():
        h = bn(lin(Tensor(x)))
        return T.mean(T.exp(h * 0.5) * target) + 5.0

    wide = grad_check(f, params, oracle_dtype=np.longdouble)
    assert wide.ok, wide.failures
    narrow = grad_check(f, params)
    for name, _, analytic, numeric, _ in narrow.failures:
        assert name == "lin.bias"
        assert abs(analytic) < 1e-12 and abs(numeric) < 1e-9

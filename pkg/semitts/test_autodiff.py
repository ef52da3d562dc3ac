"""
Testes do motor de diferenciação automática
"""

import numpy as np
import pytest

from . import autodiff as ad
from .errors import ContractViolation, GradientError, ShapeError
from .optim import grad_check


def _param_set(**arrays):
    params = ad.ParameterSet()
    for name, array in arrays.items():
        params.add(name, np.asarray(array, dtype=np.float64))
    return params


def test_polynomial_derivative():
    """x·x em x=3 tem derivada 6"""
    params = _param_set(x=[3.0])
    x = params["x"]
    grads = ad.backward((x * x).sum(), params)
    assert grads["x"][0] == pytest.approx(6.0)


def test_tanh_derivative_at_zero():
    params = _param_set(x=[0.0])
    grads = ad.backward(ad.tanh(params["x"]).sum(), params)
    assert grads["x"][0] == pytest.approx(1.0)


def test_matmul_chain_matches_finite_differences(rng):
    params = _param_set(a=rng.normal(size=(3, 4)), b=rng.normal(size=(4, 4)), c=rng.normal(size=(4, 2)))

    def closure():
        hidden = ad.tanh(params["a"] @ params["b"])
        return ad.mean((hidden @ params["c"]) * (hidden @ params["c"]))

    assert grad_check(closure, params, eps=1e-5, max_coords_per_param=12) < 1e-6


@pytest.mark.parametrize("primitive", [
    lambda x: ad.sigmoid(x),
    lambda x: ad.exp(x * 0.5),
    lambda x: ad.log(ad.exp(x) + 1.0),
    lambda x: ad.softmax(x, axis=-1),
    lambda x: ad.softplus(x),
    lambda x: ad.concat([x, x * 2.0], axis=0),
    lambda x: ad.stack([x, ad.tanh(x)], axis=1),
    lambda x: x[1:, ::2],
    lambda x: ad.reshape(x, (4, 3)),
    lambda x: x / (ad.tabs(x) + 1.5),
    lambda x: ad.mean(x, axis=1, keepdims=True) - x,
])
def test_primitive_jacobians(primitive, rng):
    """Produto com um vetor aleatório confere com diferenças finitas para cada primitiva"""
    params = _param_set(x=rng.normal(size=(3, 4)) + 0.1)
    weights = None

    def closure():
        nonlocal weights
        out = primitive(params["x"])
        if weights is None:
            weights = np.random.default_rng(7).normal(size=out.shape)
        return ad.tsum(out * weights)

    assert grad_check(closure, params, eps=1e-5, max_coords_per_param=12) < 1e-4


def test_unused_leaf_gets_zero_gradient():
    params = _param_set(x=[1.0, 2.0], unused=[[5.0]])
    grads = ad.backward((params["x"] * 2.0).sum(), params)
    np.testing.assert_array_equal(grads["unused"], np.zeros((1, 1)))
    np.testing.assert_allclose(grads["x"], [2.0, 2.0])


def test_record_cleared_after_backward():
    params = _param_set(x=[1.0])
    loss = (params["x"] * params["x"]).sum()
    ad.backward(loss, params)
    assert loss._parents == ()
    assert loss._backward is None


def test_non_scalar_loss_rejected():
    params = _param_set(x=[1.0, 2.0])
    with pytest.raises(ContractViolation):
        ad.backward(params["x"] * 2.0, params)


def test_non_finite_gradient_names_primitive():
    """1/x em x=1e-200: perda finita, gradiente -1/x² estoura"""
    params = _param_set(x=[1e-200])
    with pytest.raises(GradientError) as excinfo:
        ad.backward(ad.tsum(ad.div(1.0, params["x"])), params)
    assert excinfo.value.primitive == "div"


def test_non_finite_loss_rejected():
    params = _param_set(x=[0.0])
    with pytest.raises(GradientError):
        ad.backward(ad.tsum(ad.log(params["x"])), params)


def test_softmax_sums_to_one(rng):
    out = ad.softmax(ad.Tensor(rng.normal(size=(5, 7)) * 10.0), axis=-1)
    assert np.all(out.data >= 0)
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)


def test_sum_ignores_padding_zeros():
    """A redução total usa fsum: acrescentar zeros não muda o valor"""
    values = np.array([1e16, 1.0, -1e16, 3.0])
    padded = np.concatenate([values, np.zeros(17)])
    assert ad.tsum(ad.Tensor(values)).item() == ad.tsum(ad.Tensor(padded)).item() == 4.0


def test_no_grad_disables_recording():
    params = _param_set(x=[2.0])
    with ad.no_grad():
        out = params["x"] * 3.0
    assert not out.requires_grad
    assert ad.is_grad_enabled()


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


def test_parameter_set_contracts():
    params = _param_set(**{"encoder.w": np.zeros((2, 2)), "decoder.w": np.zeros(3)})
    with pytest.raises(ContractViolation):
        params.add("encoder.w", np.zeros(1))
    assert params.freeze(["encoder."]) == {"encoder.w"}
    assert params.trainable_names() == ["decoder.w"]
    with pytest.raises(ShapeError):
        params.assign({"decoder.w": np.zeros(4)})
    with pytest.raises(ContractViolation):
        params.assign({"missing": np.zeros(1)})
    params.unfreeze_all()
    assert params.freeze_mask == set()


def test_init_uniform_bounds(rng):
    values = ad.init_uniform(rng, (200, 50), fan_in=25)
    assert np.all(np.abs(values) <= 0.2)

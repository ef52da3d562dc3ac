"""
Testes do Adam, do clipping e do grad_check
"""

import numpy as np
import pytest

from . import autodiff as ad
from .errors import ContractViolation, NonDeterministicClosureError, ShapeError
from .optim import AdamState, adam_step, clip_grad_norm, grad_check


def _params(**arrays):
    params = ad.ParameterSet()
    for name, array in arrays.items():
        params.add(name, np.asarray(array, dtype=np.float64))
    return params


def test_first_step_moves_by_learning_rate():
    """Com correção de viés m̂=g e v̂=g²: o primeiro passo vale lr por elemento"""
    params = _params(w=np.zeros(4))
    state = AdamState.for_params(params, lr=0.01, epsilon=1e-12)
    adam_step(params, {"w": np.array([0.5, -2.0, 3.0, 1e-3])}, state)
    np.testing.assert_allclose(params["w"].data, [-0.01, 0.01, -0.01, -0.01], rtol=1e-6)
    assert state.t == 1


def test_zero_gradient_keeps_parameters_and_moments():
    params = _params(w=np.ones(3))
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.zeros(3)}, state)
    np.testing.assert_array_equal(params["w"].data, np.ones(3))
    np.testing.assert_array_equal(state.m["w"], np.zeros(3))
    np.testing.assert_array_equal(state.v["w"], np.zeros(3))


def test_frozen_parameters_are_bit_identical():
    params = _params(**{"encoder.w": np.full(3, 0.25), "decoder.w": np.full(3, 0.25)})
    params.freeze(["encoder."])
    before = params["encoder.w"].data.copy()
    state = AdamState.for_params(params)
    for _ in range(5):
        adam_step(params, {"encoder.w": np.ones(3), "decoder.w": np.ones(3)}, state)
    assert params["encoder.w"].data.tobytes() == before.tobytes()
    assert not np.array_equal(params["decoder.w"].data, before)
    assert state.t == 5


def test_gradient_shape_mismatch_names_parameter():
    params = _params(w=np.zeros(3))
    with pytest.raises(ShapeError, match="w"):
        adam_step(params, {"w": np.zeros(4)}, AdamState.for_params(params))


def test_unknown_gradient_rejected():
    params = _params(w=np.zeros(3))
    with pytest.raises(ContractViolation):
        adam_step(params, {"other": np.zeros(3)}, AdamState.for_params(params))


def test_invalid_hyperparameters():
    with pytest.raises(ValueError):
        AdamState(beta1=1.0)
    with pytest.raises(ValueError):
        AdamState(lr=0.0)


def test_identical_seeds_identical_trajectories(rng):
    data = rng.normal(size=(6, 3))

    def run():
        params = _params(w=np.random.default_rng(3).normal(size=(3, 1)))
        state = AdamState.for_params(params)
        for _ in range(10):
            loss = ad.mean((ad.Tensor(data) @ params["w"]) * (ad.Tensor(data) @ params["w"]))
            adam_step(params, ad.backward(loss, params), state)
        return params["w"].data.copy()

    assert run().tobytes() == run().tobytes()


def test_clip_grad_norm_returns_pre_clip_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_grad_norm(grads, max_norm=1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    assert total == pytest.approx(1.0)


def test_clip_grad_norm_below_threshold_untouched():
    grads = {"a": np.array([0.3, 0.4])}
    assert clip_grad_norm(grads, max_norm=1.0) == pytest.approx(0.5)
    np.testing.assert_array_equal(grads["a"], [0.3, 0.4])


def test_grad_check_quadratic():
    params = _params(w=np.array([1.0, -2.0, 0.5]))
    target = ad.Tensor(np.array([0.3, 0.1, -0.7]))

    def closure():
        diff = params["w"] - target
        return ad.tsum(diff * diff)

    assert grad_check(closure, params) < 1e-8


def test_grad_check_detects_non_deterministic_closure():
    params = _params(w=np.ones(2))
    calls = iter(range(1000))

    def closure():
        return ad.tsum(params["w"] * float(next(calls)))

    with pytest.raises(NonDeterministicClosureError):
        grad_check(closure, params)

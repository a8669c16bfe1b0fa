import numpy as np
import pytest

from fewshot_stack.errors import ValidationError
from fewshot_stack.headnet import HeadConfig, init_params
from fewshot_stack.optim import AdamState, adam_step

CFG = HeadConfig(2, 3, conv_filters=4, hidden_sizes=(5,), n_classes=3)


def make_params(seed=0, dtype=np.float64):
    return init_params(CFG, np.random.default_rng(seed), dtype=dtype)


def zero_grads(params):
    return {k: np.zeros_like(a) for k, a in params.trainables().items()}


def test_zero_gradients_leave_params_unchanged():
    params = make_params()
    before = {k: a.copy() for k, a in params.trainables().items()}
    state = AdamState.for_params(params)
    adam_step(state, params, zero_grads(params), lr=0.1)
    for k, a in params.trainables().items():
        assert np.array_equal(a, before[k])
    assert state.t == 1


@pytest.mark.parametrize("magnitude", [1e-3, 1.0, 1e3])
def test_first_step_moves_by_lr_sign(magnitude):
    params = make_params()
    before = {k: a.copy() for k, a in params.trainables().items()}
    state = AdamState.for_params(params)
    grads = zero_grads(params)
    rng = np.random.default_rng(1)
    for g in grads.values():
        g[:] = rng.choice([-magnitude, magnitude], size=g.shape)
    lr = 1e-2
    adam_step(state, params, grads, lr=lr)
    for k, a in params.trainables().items():
        delta = a - before[k]
        np.testing.assert_allclose(delta, -lr * np.sign(grads[k]), atol=lr * 1e-4)


def test_running_stats_untouched():
    params = make_params()
    params.bn_running_mean[:] = 0.33
    params.bn_running_var[:] = 1.5
    state = AdamState.for_params(params)
    grads = {k: np.ones_like(a) for k, a in params.trainables().items()}
    adam_step(state, params, grads, lr=0.1)
    assert np.all(params.bn_running_mean == 0.33)
    assert np.all(params.bn_running_var == 1.5)


def test_timestep_and_moments_advance():
    params = make_params()
    state = AdamState.for_params(params)
    grads = {k: np.full_like(a, 0.5) for k, a in params.trainables().items()}
    adam_step(state, params, grads, lr=0.01)
    adam_step(state, params, grads, lr=0.01)
    assert state.t == 2
    m = state.m["conv_w"]
    # m after two identical grads: (1-b1)(b1 + 1) g = 0.19 * 0.5
    np.testing.assert_allclose(m, 0.5 * (1 - 0.9**2), rtol=1e-10)


def test_two_runs_identical_trajectories():
    rng_g = np.random.default_rng(5)
    grad_seq = [
        {k: rng_g.standard_normal(a.shape) for k, a in make_params().trainables().items()}
        for _ in range(5)
    ]

    def run():
        params = make_params(seed=2)
        state = AdamState.for_params(params)
        for g in grad_seq:
            adam_step(state, params, g, lr=3e-3)
        return params

    a, b = run(), run()
    for k, arr in a.trainables().items():
        assert arr.tobytes() == b.trainables()[k].tobytes()


def test_shape_mismatch_rejected():
    params = make_params()
    state = AdamState.for_params(params)
    grads = zero_grads(params)
    grads["conv_w"] = np.zeros((1, 1, 1, 1))
    with pytest.raises(ValidationError):
        adam_step(state, params, grads, lr=0.1)
    grads = zero_grads(params)
    del grads["conv_b"]
    with pytest.raises(ValidationError):
        adam_step(state, params, grads, lr=0.1)


def test_matches_reference_formula():
    # one step against a straight numpy transcription of the update rule
    params = make_params(seed=3)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(4)
    grads = {k: rng.standard_normal(a.shape) for k, a in params.trainables().items()}
    before = {k: a.copy() for k, a in params.trainables().items()}
    lr, b1, b2, eps = 2e-3, 0.9, 0.999, 1e-8
    adam_step(state, params, grads, lr=lr, beta1=b1, beta2=b2, eps=eps)
    for k, a in params.trainables().items():
        g = grads[k]
        m = (1 - b1) * g
        v = (1 - b2) * g * g
        expected = before[k] - lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
        np.testing.assert_allclose(a, expected, rtol=1e-12, atol=1e-15)

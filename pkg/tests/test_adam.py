import numpy as np
import pytest

from latentsearch.adam import AdamState, adam_init, adam_step
from latentsearch.errors import ConfigurationError, NumericError, ShapeError


def test_first_step_reference_value():
    # m_hat = g and v_hat = g^2 exactly on the first step, so the move is
    # lr * g / (|g| + eps)
    state = adam_step(adam_init(np.array([0.0]), lr=0.05), np.array([2.0]))
    assert state.params[0] == pytest.approx(-0.05, abs=1e-8)
    assert state.t == 1


def test_zero_gradient_keeps_params():
    state = adam_init(np.array([1.5, -2.0]))
    stepped = adam_step(state, np.zeros(2))
    assert np.array_equal(stepped.params, state.params)
    assert stepped.t == 1


def test_constant_gradient_moves_at_unit_rate():
    # with a constant gradient every bias-corrected step is the same
    # normalized move, so n steps travel n * lr * sign(g) (up to eps)
    grad = np.array([3.0, -4.0])
    state = adam_init(np.zeros(2), lr=0.05)
    for _ in range(2):
        state = adam_step(state, grad)
    expected = -2 * 0.05 * np.sign(grad) * (np.abs(grad) / (np.abs(grad) + 1e-8))
    assert np.allclose(state.params, expected, atol=1e-12)


def test_step_is_deterministic_and_pure():
    rng = np.random.default_rng(0)
    state = adam_init(rng.standard_normal(5))
    before = state.params.copy()
    grad = rng.standard_normal(5)
    a = adam_step(state, grad)
    b = adam_step(state, grad)
    assert np.array_equal(a.params, b.params)
    assert np.array_equal(a.m, b.m)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(state.params, before)
    assert state.t == 0


def test_second_moment_stays_nonnegative():
    state = adam_init(np.zeros(3))
    rng = np.random.default_rng(1)
    for _ in range(50):
        state = adam_step(state, rng.standard_normal(3) * 10)
        assert (state.v >= 0).all()


def test_step_rejects_bad_gradients():
    state = adam_init(np.zeros(3))
    with pytest.raises(ShapeError):
        adam_step(state, np.zeros(4))
    with pytest.raises(NumericError, match="step 1"):
        adam_step(state, np.array([0.0, np.nan, 0.0]))
    with pytest.raises(NumericError):
        adam_step(state, np.array([np.inf, 0.0, 0.0]))


@pytest.mark.parametrize(
    "kwargs",
    [{"lr": -0.1}, {"beta1": 1.0}, {"beta2": -0.2}, {"eps": 0.0}],
)
def test_init_rejects_bad_hyperparameters(kwargs):
    with pytest.raises(ConfigurationError):
        adam_init(np.zeros(2), **kwargs)


def test_state_shape_validation():
    with pytest.raises(ShapeError):
        AdamState(params=np.zeros(3), m=np.zeros(2), v=np.zeros(3))
    with pytest.raises(ConfigurationError):
        AdamState(params=np.zeros(2), m=np.zeros(2), v=np.zeros(2), t=-1)

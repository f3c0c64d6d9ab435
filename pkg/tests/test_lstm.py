import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronocast.lstm import (
    LstmLayer, LstmModel, LstmState, backward_sequence, cell_step, forecast_lstm, forward_sequence,
    lstm_param_count, predict_lstm,
)
from gradcheck import assert_grads_match


def naive_step(W, b, C, H, x):
    hidden = len(H)
    hx = list(H) + list(x)
    z = [b[r] + sum(W[r, c] * hx[c] for c in range(len(hx))) for r in range(4 * hidden)]
    sig = lambda v: 1 / (1 + math.exp(-v))  # noqa: E731
    f = [sig(v) for v in z[:hidden]]
    i = [sig(v) for v in z[hidden:2 * hidden]]
    g = [math.tanh(v) for v in z[2 * hidden:3 * hidden]]
    o = [sig(v) for v in z[3 * hidden:]]
    c = [f[k] * C[k] + i[k] * g[k] for k in range(hidden)]
    h = [o[k] * math.tanh(c[k]) for k in range(hidden)]
    return c, h


def test_zero_layer_step():
    layer = LstmLayer.zeros(2, 3)
    state, cache = cell_step(layer, LstmState.zeros(3), [0.7, -1.2])
    assert np.all(cache.f == 0.5) and np.all(cache.i == 0.5) and np.all(cache.o == 0.5)
    assert np.all(cache.g == 0) and np.all(state.C == 0) and np.all(state.H == 0)


@given(st.floats(-5, 5))
def test_zero_layer_halves_memory(c):
    layer = LstmLayer.zeros(1, 2)
    state, _ = cell_step(layer, LstmState(np.full(2, c), np.zeros(2)), [0.3])
    assert state.C == pytest.approx([0.5 * c] * 2, abs=1e-15)
    assert state.H == pytest.approx([0.5 * math.tanh(0.5 * c)] * 2, abs=1e-15)


def test_step_matches_naive_loops():
    rng = np.random.default_rng(0)
    layer = LstmLayer.random(rng, 2, 4)
    C, H, x = rng.normal(size=4), rng.normal(size=4), rng.normal(size=2)
    state, _ = cell_step(layer, LstmState(C, H), x)
    c_ref, h_ref = naive_step(layer.W, layer.b, C, H, x)
    assert state.C == pytest.approx(c_ref, rel=1e-12, abs=1e-14)
    assert state.H == pytest.approx(h_ref, rel=1e-12, abs=1e-14)


def test_gate_blocks_in_fico_order():
    layer = LstmLayer(np.arange(4 * 2 * 3, dtype=float).reshape(8, 3), np.arange(8.0))
    assert layer.gate("f")[1].tolist() == [0, 1]
    assert layer.gate("o")[1].tolist() == [6, 7]


def test_shape_errors():
    with pytest.raises(ValueError):
        cell_step(LstmLayer.zeros(1, 2), LstmState.zeros(2), [1.0, 2.0])
    with pytest.raises(ValueError):
        LstmLayer(np.zeros((6, 3)), np.zeros(6))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_gate_ranges_and_bounded_forgetting(seed, scale):
    rng = np.random.default_rng(seed)
    layer = LstmLayer.random(rng, 1, 3)
    C0 = rng.normal(size=3) * 3
    state, s = cell_step(layer, LstmState(C0, rng.normal(size=3)), [scale])
    for gate in (s.f, s.i, s.o):
        assert np.all((gate >= 0) & (gate <= 1))
    assert np.all(np.abs(s.g) <= 1)
    assert np.all(np.abs(state.C) <= np.abs(C0) + np.abs(s.i * s.g) + 1e-12)


def test_reference_lstm_parameter_count():
    assert lstm_param_count(1, (50, 50)) == 30651
    assert LstmModel(1, (50, 50)).n_params == 30651
    assert LstmModel.zeros(1, (50, 50)).n_params == 30651


def test_zero_model_predicts_zero():
    m = LstmModel.zeros(1, (3, 3))
    assert np.all(m.predict(np.random.default_rng(0).normal(size=(4, 3))) == 0)


def test_length_one_sequence_composes_cell_steps():
    rng = np.random.default_rng(5)
    m = LstmModel(1, (3, 2), hidden_relu=False, seed=5)
    x = rng.normal(size=(1, 1))
    s1, _ = cell_step(m.layers[0], LstmState.zeros(3, 1), x)
    s2, _ = cell_step(m.layers[1], LstmState.zeros(2, 1), s1.H)
    expected = s2.H @ m.params[-2] + m.params[-1]
    assert m.predict(x)[0] == pytest.approx(expected[0, 0], rel=1e-14)


@pytest.mark.parametrize("config", range(24))
def test_bptt_matches_finite_differences(config):
    rng = np.random.default_rng(100 + config)
    depth = 1 + config % 2
    m = LstmModel(1, (4,) * depth, hidden_relu=bool(config % 3), seed=config)
    X = rng.normal(size=(4, 3))
    # finite differences are meaningless across a relu kink; redraw until clear of it
    while m.hidden_relu and min(np.abs(h).min() for h in forward_sequence(m, X)[1].hidden) < 1e-4:
        X = rng.normal(size=(4, 3))
    y = rng.normal(size=4)
    assert_grads_match(m, X, y)


def test_zero_upstream_gives_zero_gradients():
    m = LstmModel(1, (4, 4), seed=1)
    _, cache = forward_sequence(m, np.ones((2, 3)))
    assert all(np.all(g == 0) for g in backward_sequence(m, cache, np.zeros(2)))


def test_first_timestep_influences_prediction():
    m = LstmModel(1, (4, 4), hidden_relu=False, seed=2)
    X = np.random.default_rng(3).normal(size=(1, 3))
    h = 1e-5
    Xp, Xm = X.copy(), X.copy()
    Xp[0, 0] += h
    Xm[0, 0] -= h
    assert abs(m.predict(Xp)[0] - m.predict(Xm)[0]) / (2 * h) > 1e-6


def test_stale_cache_rejected():
    m = LstmModel(1, (2,), seed=0)
    _, cache = forward_sequence(m, np.ones((1, 3)))
    m.set_params(m.params)
    with pytest.raises(ValueError, match="stale"):
        backward_sequence(m, cache, np.ones(1))


def test_forecast_is_deterministic_and_chains():
    m = LstmModel(1, (5, 5), seed=8)
    w = np.array([0.2, 0.4, 0.3])
    f = forecast_lstm(m, w, 4)
    assert np.array_equal(f, forecast_lstm(LstmModel(1, (5, 5), seed=8), w, 4))
    assert f[0] == predict_lstm(m, w)
    assert f[1] == predict_lstm(m, [0.4, 0.3, f[0]])

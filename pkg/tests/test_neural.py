import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chronocast import neural
from chronocast.neural import AdamState, DenseNet, Layer, TrainConfig, adam_step, backward, forward, ann_network
from gradcheck import assert_grads_match


def naive_forward(net, x):
    a = list(map(float, x))
    for k, layer in enumerate(net.layers):
        W, b = net.params[2 * k], net.params[2 * k + 1]
        z = [b[j] + sum(a[i] * W[i, j] for i in range(layer.fan_in)) for j in range(layer.fan_out)]
        if layer.activation == "relu":
            a = [max(0.0, v) for v in z]
        elif layer.activation == "tanh":
            a = [math.tanh(v) for v in z]
        elif layer.activation == "sigmoid":
            a = [1 / (1 + math.exp(-v)) for v in z]
        else:
            a = z
    return a


def test_reference_ann_parameter_count():
    net = ann_network()
    per_layer = [p.size for p in net.params]
    assert per_layer == [36, 12, 144, 12, 12, 1]
    assert net.n_params == 217


def test_zero_network_outputs_zero():
    net = ann_network()
    net.set_params([np.zeros_like(p) for p in net.params])
    assert np.all(net.predict(np.random.default_rng(0).normal(size=(5, 3))) == 0)


def test_single_linear_unit():
    net = DenseNet([Layer(1, 1, "linear")], params=[np.array([[2.0]]), np.array([1.0])])
    assert net.predict([[3.0]]).tolist() == [7.0]


@pytest.mark.parametrize("activation", ["relu", "tanh", "sigmoid", "linear"])
def test_forward_matches_naive_loops(activation):
    net = ann_network(seed=3, activation=activation)
    X = np.random.default_rng(4).normal(size=(6, 3))
    for row, got in zip(X, net.predict(X)):
        assert got == pytest.approx(naive_forward(net, row)[0], rel=1e-12, abs=1e-14)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        forward(ann_network(), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        DenseNet([Layer(3, 4, "relu"), Layer(5, 1, "linear")])


def test_stale_cache_rejected():
    net = ann_network()
    _, cache = forward(net, np.ones((2, 3)))
    net.set_params(net.params)
    with pytest.raises(ValueError, match="stale"):
        backward(net, cache, np.ones((2, 1)))


def test_zero_upstream_gives_zero_gradients():
    net = ann_network(seed=1)
    _, cache = forward(net, np.random.default_rng(0).normal(size=(4, 3)))
    grads, dX = backward(net, cache, np.zeros((4, 1)))
    assert all(np.all(g == 0) for g in grads) and np.all(dX == 0)


def test_perfect_prediction_has_zero_loss_gradient():
    net = ann_network(seed=2)
    X = np.random.default_rng(1).normal(size=(5, 3))
    loss, grads = net.loss_and_grads(X, net.predict(X))
    assert loss == 0 and all(np.all(g == 0) for g in grads)


@pytest.mark.parametrize("config", range(24))
def test_gradients_match_finite_differences(config):
    rng = np.random.default_rng(config)
    activation = ("relu", "tanh")[config % 2]
    hidden = tuple(int(h) for h in rng.integers(2, 13, size=int(rng.integers(1, 3))))
    net = ann_network(seed=config, hidden=hidden, activation=activation)
    net.set_params([p + rng.normal(0, 0.1, p.shape) for p in net.params])
    X = rng.normal(size=(8, 3))
    while min(np.abs(z).min() for z in forward(net, X)[1].pre[:-1]) < 1e-4:
        X = rng.normal(size=(8, 3))
    y = rng.normal(size=8)
    assert_grads_match(net, X, y)


def test_input_gradient():
    net = ann_network(seed=5, activation="tanh")
    X = np.random.default_rng(2).normal(size=(3, 3))
    out, cache = forward(net, X)
    _, dX = backward(net, cache, np.ones_like(out))
    h = 1e-6
    for i in range(3):
        for j in range(3):
            Xp, Xm = X.copy(), X.copy()
            Xp[i, j] += h
            Xm[i, j] -= h
            num = (net.predict(Xp).sum() - net.predict(Xm).sum()) / (2 * h)
            assert dX[i, j] == pytest.approx(num, rel=1e-6, abs=1e-9)


class TestAdam:
    @given(st.floats(-100, 100).filter(lambda g: abs(g) > 1e-3))
    def test_first_step_moves_by_learning_rate(self, g):
        cfg = TrainConfig(learning_rate=1e-3)
        (p,), _ = adam_step([np.array([0.0])], [np.array([g])], AdamState.zeros_like([np.zeros(1)]), cfg)
        assert p[0] == pytest.approx(-1e-3 * math.copysign(1, g), rel=1e-4)

    def test_zero_gradient_leaves_params(self):
        params = [np.array([1.5, -2.0])]
        new, _ = adam_step(params, [np.zeros(2)], AdamState.zeros_like(params), TrainConfig())
        assert np.array_equal(new[0], params[0])

    def test_quadratic_converges(self):
        cfg = TrainConfig(learning_rate=0.1)
        w = [np.array([1.0])]
        state = AdamState.zeros_like(w)
        for _ in range(200):
            w, state = adam_step(w, [2 * w[0]], state, cfg)
        assert abs(w[0][0]) < 0.05

    def test_shape_check(self):
        with pytest.raises(ValueError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState.zeros_like([np.zeros(2)]), TrainConfig())

    @pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"batch_size": 0}, {"beta1": 1.0}, {"learning_rate": 0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestTraining:
    def data(self, n=200, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 1, (n, 3))
        return X, X @ np.array([0.5, 0.3, 0.2])

    def test_checkpoint_is_best_validation_epoch(self):
        X, y = self.data()
        net = ann_network(seed=1)
        res = neural.train(net, X[:150], y[:150], X[150:], y[150:], TrainConfig(epochs=40, seed=1))
        vals = [h[2] for h in res.history]
        assert res.best_validation_mse == min(vals)
        assert res.best_epoch == vals.index(min(vals)) + 1
        assert np.mean((net.predict(X[150:]) - y[150:]) ** 2) == res.best_validation_mse
        assert res.best_validation_mse <= vals[-1]

    def test_deterministic_history(self):
        X, y = self.data()
        runs = []
        for _ in range(2):
            net = ann_network(seed=4)
            runs.append(neural.train(net, X, y, cfg=TrainConfig(epochs=10, batch_size=7, seed=9)).history)
        assert runs[0] == runs[1]

    def test_memorises_single_sample(self):
        X = np.tile([[0.2, 0.4, 0.6]], (8, 1))
        y = np.full(8, 0.9)
        net = ann_network(seed=0)
        res = neural.train(net, X, y, cfg=TrainConfig(epochs=400, learning_rate=1e-2))
        assert res.history[-1][1] < 1e-8

    def test_partial_batch_is_used(self, monkeypatch):
        X, y = self.data(n=70)
        net = ann_network()
        sizes = []
        real = DenseNet.loss_and_grads

        def spy(self, Xb, yb):
            sizes.append(len(yb))
            return real(self, Xb, yb)

        monkeypatch.setattr(DenseNet, "loss_and_grads", spy)
        neural.train(net, X, y, cfg=TrainConfig(epochs=1, batch_size=32))
        assert sizes == [32, 32, 6]

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self):
        X, y = self.data()
        net = ann_network(seed=0)
        with pytest.raises(neural.TrainingError) as info:
            neural.train(net, X, y * 1e300, cfg=TrainConfig(epochs=3))
        assert info.value.epoch == 1


def test_recursive_forecast_chains_one_step_calls():
    net = ann_network(seed=7)
    window = np.array([0.3, 0.5, 0.4])
    assert neural.forecast_ann(net, window, 1)[0] == neural.predict_ann(net, window)
    manual, w = [], list(window)
    for _ in range(5):
        v = neural.predict_ann(net, w)
        manual.append(v)
        w = w[1:] + [v]
    assert neural.forecast_ann(net, window, 5).tolist() == manual

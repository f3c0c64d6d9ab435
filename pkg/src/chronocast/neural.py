"""Dense feed-forward network, Adam and the mini-batch training loop.

The training loop works on any model exposing ``params`` (list of arrays),
``loss_and_grads(X, y)`` and ``predict(X)``; the LSTM reuses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "linear", "sigmoid", "tanh")


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"{message} at epoch {epoch}")
        self.epoch = epoch


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if kind == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d activation / d z, given pre-activation ``z`` and output ``a``."""
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "linear":
        return np.ones_like(z)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class Layer:
    fan_in: int
    fan_out: int
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.fan_in < 1 or self.fan_out < 1:
            raise ValueError("layer sizes must be positive")


def init_weights(rng: np.random.Generator, fan_in: int, fan_out: int, activation: str) -> np.ndarray:
    if activation == "relu":
        limit = math.sqrt(6.0 / fan_in)
    else:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseNet:
    """Stack of affine layers, each followed by its activation.

    Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
    shape ``(n, fan_in)`` maps to ``X @ W + b``.
    """

    kind = "ann"

    def __init__(self, layers: Sequence[Layer], seed: int = 0, params: list[np.ndarray] | None = None):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(f"layer shapes do not chain: {prev.fan_out} -> {nxt.fan_in}")
        self.layers = layers
        self.seed = seed
        if params is None:
            rng = np.random.default_rng(seed)
            params = []
            for layer in layers:
                params.append(init_weights(rng, layer.fan_in, layer.fan_out, layer.activation))
                params.append(np.zeros(layer.fan_out))
        self.params = [np.asarray(p, dtype=float) for p in params]
        self._check_shapes()
        self.version = 0

    def _check_shapes(self):
        if len(self.params) != 2 * len(self.layers):
            raise ValueError("parameter list does not match layers")
        for k, layer in enumerate(self.layers):
            if self.params[2 * k].shape != (layer.fan_in, layer.fan_out) or self.params[2 * k + 1].shape != (layer.fan_out,):
                raise ValueError(f"parameter shapes of layer {k} do not match its layer list")

    @property
    def n_inputs(self) -> int:
        return self.layers[0].fan_in

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def set_params(self, params: list[np.ndarray]) -> None:
        self.params = [np.array(p, dtype=float) for p in params]
        self._check_shapes()
        self.version += 1

    def copy(self) -> "DenseNet":
        return DenseNet(self.layers, self.seed, [p.copy() for p in self.params])

    def predict(self, X) -> np.ndarray:
        out = forward(self, X)[0]
        return out[:, 0] if self.layers[-1].fan_out == 1 else out

    def loss_and_grads(self, X, y):
        out, cache = forward(self, X)
        pred = out[:, 0]
        loss, dpred = mse_loss(pred, y)
        grads, _ = backward(self, cache, dpred[:, None])
        return loss, grads


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: list
    pre: list
    post: list


def forward(net: DenseNet, X) -> tuple[np.ndarray, ForwardCache]:
    a = np.asarray(X, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != net.n_inputs:
        raise ValueError(f"input width {a.shape[1]} does not match network input {net.n_inputs}")
    inputs, pre, post = [], [], []
    for k, layer in enumerate(net.layers):
        inputs.append(a)
        z = a @ net.params[2 * k] + net.params[2 * k + 1]
        a = activate(layer.activation, z)
        pre.append(z)
        post.append(a)
    return a, ForwardCache(id(net), net.version, inputs, pre, post)


def backward(net: DenseNet, cache: ForwardCache, d_out) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients for every parameter (same order as ``net.params``) and for the input."""
    if cache.net_id != id(net) or cache.version != net.version:
        raise ValueError("stale forward cache: network changed since forward()")
    delta = np.asarray(d_out, dtype=float)
    grads: list[np.ndarray] = [None] * len(net.params)  # type: ignore[list-item]
    for k in reversed(range(len(net.layers))):
        layer = net.layers[k]
        dz = delta * activation_grad(layer.activation, cache.pre[k], cache.post[k])
        grads[2 * k] = cache.inputs[k].T @ dz
        grads[2 * k + 1] = dz.sum(axis=0)
        delta = dz @ net.params[2 * k].T
    return grads, delta


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def ann_network(seed: int = 0, n_inputs: int = 3, hidden: Sequence[int] = (12, 12), activation: str = "relu") -> DenseNet:
    layers = []
    width = n_inputs
    for h in hidden:
        layers.append(Layer(width, h, activation))
        width = h
    layers.append(Layer(width, 1, "linear"))
    return DenseNet(layers, seed)


# -- optimisation -------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> tuple[list[np.ndarray], AdamState]:
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ValueError("parameter and gradient shapes disagree")
    t = state.t + 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)  # (epoch, train_mse, validation_mse)
    best_epoch: int = 0
    best_validation_mse: float = math.inf


def _batch_mse(model, X, y) -> float:
    pred = model.predict(X)
    d = pred - y
    return float(np.mean(d * d))


def train(model, X_train, y_train, X_val=None, y_val=None, cfg: TrainConfig | None = None) -> TrainResult:
    """Mini-batch Adam on MSE; returns the parameters of the best validation epoch.

    Without a validation set the training MSE drives checkpointing.
    """
    cfg = cfg or TrainConfig()
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    n = len(y_train)
    if n == 0:
        raise TrainingError("empty training set")
    has_val = X_val is not None and len(y_val) > 0
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros_like(model.params)
    best_params = [p.copy() for p in model.params]
    result = TrainResult(model)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(X_train[idx], y_train[idx])
            if not math.isfinite(loss):
                raise TrainingError("non-finite training loss", epoch)
            params, state = adam_step(model.params, grads, state, cfg)
            model.set_params(params)
        train_mse = _batch_mse(model, X_train, y_train)
        val_mse = _batch_mse(model, X_val, y_val) if has_val else train_mse
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            raise TrainingError("non-finite loss", epoch)
        result.history.append((epoch, train_mse, val_mse))
        if val_mse < result.best_validation_mse:
            result.best_validation_mse = val_mse
            result.best_epoch = epoch
            best_params = [p.copy() for p in model.params]

    model.set_params(best_params)
    return result


def train_on(model, prepared, cfg: TrainConfig | None = None) -> TrainResult:
    X_tr, y_tr = prepared.samples("train")
    X_va, y_va = prepared.samples("validation")
    return train(model, X_tr, y_tr, X_va, y_va, cfg)


def recursive_forecast(predict: Callable[[np.ndarray], np.ndarray], seed_window, horizon: int) -> np.ndarray:
    """Feed each one-step prediction back into the sliding input window."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    window = list(np.asarray(seed_window, dtype=float))
    out = np.empty(horizon)
    for h in range(horizon):
        out[h] = float(predict(np.array(window)[None, :])[0])
        window = window[1:] + [out[h]]
    return out


def predict_ann(net: DenseNet, window) -> float:
    return float(net.predict(np.asarray(window, dtype=float)[None, :])[0])


def forecast_ann(net: DenseNet, seed_window, horizon: int) -> np.ndarray:
    return recursive_forecast(net.predict, seed_window, horizon)

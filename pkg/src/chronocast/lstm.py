"""Stacked LSTM regressor with exact backpropagation through time.

Gate blocks are stacked in (f, i, c, o) order; each acts on ``[H_{t-1}, X_t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .neural import recursive_forecast, mse_loss


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass
class LstmLayer:
    W: np.ndarray  # (4H, H + I)
    b: np.ndarray  # (4H,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.W.shape[0] % 4 or self.b.shape != (self.W.shape[0],):
            raise ValueError("LSTM weights must be (4H, H+I) with a (4H,) bias")
        if self.W.shape[1] <= self.hidden_size:
            raise ValueError("LSTM weight matrix has no input columns")

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden_size

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = "fico".index(name)
        H = self.hidden_size
        return self.W[k * H:(k + 1) * H], self.b[k * H:(k + 1) * H]

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmLayer":
        return cls(np.zeros((4 * hidden_size, hidden_size + input_size)), np.zeros(4 * hidden_size))

    @classmethod
    def random(cls, rng: np.random.Generator, input_size: int, hidden_size: int, forget_bias: float = 1.0) -> "LstmLayer":
        limit = math.sqrt(6.0 / (input_size + hidden_size + hidden_size))
        W = rng.uniform(-limit, limit, size=(4 * hidden_size, hidden_size + input_size))
        b = np.zeros(4 * hidden_size)
        b[:hidden_size] = forget_bias
        return cls(W, b)


@dataclass
class LstmState:
    C: np.ndarray
    H: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, batch: int | None = None) -> "LstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class StepCache:
    hx: np.ndarray
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray


def cell_step(layer: LstmLayer, state: LstmState, x_t) -> tuple[LstmState, StepCache]:
    """One application of the forget/input/candidate/output gate equations.

    Works on a single vector or a batch (rows).
    """
    x = np.asarray(x_t, dtype=float)
    if x.shape[-1] != layer.input_size:
        raise ValueError(f"input width {x.shape[-1]} does not match layer input {layer.input_size}")
    H = layer.hidden_size
    hx = np.concatenate((state.H, x), axis=-1)
    z = hx @ layer.W.T + layer.b
    f = sigmoid(z[..., :H])
    i = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * state.C + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmState(c, h), StepCache(hx, f, i, g, o, state.C, tanh_c)


class LstmModel:
    """LSTM layers, each emitting its hidden-state sequence, then a linear dense head."""

    kind = "lstm"

    def __init__(self, input_size: int = 1, hidden: Sequence[int] = (50, 50), hidden_relu: bool = True,
                 seed: int = 0, params: list[np.ndarray] | None = None):
        self.input_size = input_size
        self.hidden = tuple(int(h) for h in hidden)
        if not self.hidden:
            raise ValueError("need at least one LSTM layer")
        self.hidden_relu = hidden_relu
        self.seed = seed
        if params is None:
            rng = np.random.default_rng(seed)
            params = []
            width = input_size
            for h in self.hidden:
                layer = LstmLayer.random(rng, width, h)
                params += [layer.W, layer.b]
                width = h
            limit = math.sqrt(6.0 / (width + 1))
            params += [rng.uniform(-limit, limit, size=(width, 1)), np.zeros(1)]
        self.set_params(params)
        self.version = 0

    @classmethod
    def zeros(cls, input_size: int = 1, hidden: Sequence[int] = (50, 50), hidden_relu: bool = True) -> "LstmModel":
        params = []
        width = input_size
        for h in hidden:
            params += [np.zeros((4 * h, h + width)), np.zeros(4 * h)]
            width = h
        params += [np.zeros((width, 1)), np.zeros(1)]
        return cls(input_size, hidden, hidden_relu, params=params)

    def set_params(self, params) -> None:
        params = [np.array(p, dtype=float) for p in params]
        if len(params) != 2 * len(self.hidden) + 2:
            raise ValueError("parameter list does not match the architecture")
        width = self.input_size
        for k, h in enumerate(self.hidden):
            if params[2 * k].shape != (4 * h, h + width) or params[2 * k + 1].shape != (4 * h,):
                raise ValueError(f"LSTM layer {k} parameter shapes do not match")
            width = h
        if params[-2].shape != (width, 1) or params[-1].shape != (1,):
            raise ValueError("dense head parameter shapes do not match")
        self.params = params
        self.version = getattr(self, "version", -1) + 1

    @property
    def layers(self) -> list[LstmLayer]:
        return [LstmLayer(self.params[2 * k], self.params[2 * k + 1]) for k in range(len(self.hidden))]

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def copy(self) -> "LstmModel":
        return LstmModel(self.input_size, self.hidden, self.hidden_relu, self.seed, [p.copy() for p in self.params])

    def _as_sequence(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim == 2:
            X = X[:, :, None] if self.input_size == 1 else X[None]
        if X.shape[-1] != self.input_size or X.shape[1] < 1:
            raise ValueError("sequence shape does not match the model input")
        return X

    def predict(self, X) -> np.ndarray:
        return forward_sequence(self, X)[0]

    def loss_and_grads(self, X, y):
        pred, cache = forward_sequence(self, X)
        loss, dpred = mse_loss(pred, y)
        return loss, backward_sequence(self, cache, dpred)


def lstm_param_count(input_size: int, hidden: Sequence[int]) -> int:
    total, width = 0, input_size
    for h in hidden:
        total += 4 * ((width + h) * h + h)
        width = h
    return total + width + 1


@dataclass
class SequenceCache:
    model_id: int
    version: int
    steps: list          # per layer: list of StepCache
    hidden: list         # per layer: (B, L, H) raw hidden states
    head_input: np.ndarray


def forward_sequence(model: LstmModel, X) -> tuple[np.ndarray, SequenceCache]:
    seq = model._as_sequence(X)
    B, L, _ = seq.shape
    inputs = seq
    all_steps, all_hidden = [], []
    for layer in model.layers:
        state = LstmState.zeros(layer.hidden_size, B)
        steps = []
        hs = np.empty((B, L, layer.hidden_size))
        for t in range(L):
            state, cache = cell_step(layer, state, inputs[:, t, :])
            steps.append(cache)
            hs[:, t, :] = state.H
        all_steps.append(steps)
        all_hidden.append(hs)
        inputs = np.maximum(hs, 0.0) if model.hidden_relu else hs
    head_in = inputs[:, -1, :]
    pred = (head_in @ model.params[-2] + model.params[-1])[:, 0]
    return pred, SequenceCache(id(model), model.version, all_steps, all_hidden, head_in)


def backward_sequence(model: LstmModel, cache: SequenceCache, d_pred) -> list[np.ndarray]:
    """Full BPTT; gradients in ``model.params`` order."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise ValueError("stale forward cache: model changed since forward_sequence()")
    d_pred = np.asarray(d_pred, dtype=float).reshape(-1, 1)
    grads: list = [None] * len(model.params)
    grads[-2] = cache.head_input.T @ d_pred
    grads[-1] = d_pred.sum(axis=0)

    B, L, _ = cache.hidden[-1].shape
    d_emit = np.zeros((B, L, model.hidden[-1]))
    d_emit[:, -1, :] = d_pred @ model.params[-2].T

    for k in reversed(range(len(model.hidden))):
        W = model.params[2 * k]
        H = model.hidden[k]
        hs = cache.hidden[k]
        d_h_all = d_emit * (hs > 0) if model.hidden_relu else d_emit
        dW = np.zeros_like(W)
        db = np.zeros(4 * H)
        in_width = W.shape[1] - H
        d_inputs = np.zeros((B, L, in_width))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(L)):
            s = cache.steps[k][t]
            dh = d_h_all[:, t, :] + dh_next
            do = dh * s.tanh_c
            dc = dh * s.o * (1.0 - s.tanh_c**2) + dc_next
            df = dc * s.c_prev
            di = dc * s.g
            dg = dc * s.i
            dc_next = dc * s.f
            dz = np.concatenate(
                (df * s.f * (1 - s.f), di * s.i * (1 - s.i), dg * (1 - s.g**2), do * s.o * (1 - s.o)),
                axis=1,
            )
            dW += dz.T @ s.hx
            db += dz.sum(axis=0)
            dhx = dz @ W
            dh_next = dhx[:, :H]
            d_inputs[:, t, :] = dhx[:, H:]
        grads[2 * k] = dW
        grads[2 * k + 1] = db
        d_emit = d_inputs
    return grads


def predict_lstm(model: LstmModel, window) -> float:
    return float(model.predict(np.asarray(window, dtype=float)[None, :])[0])


def forecast_lstm(model: LstmModel, seed_window, horizon: int) -> np.ndarray:
    return recursive_forecast(model.predict, seed_window, horizon)

"""Versioned plain-text checkpoints.

Layout::

    chronocast-checkpoint 1
    <key>: <json value>
    ...
    ---
    <body lines>

Header floats are written by ``json`` (shortest round-trip repr); body
parameters use 17 significant digits, one per line, in layer order and
row-major within each array.
"""

from __future__ import annotations

import datetime as dt
import json
from pathlib import Path

import numpy as np

from . import boxjenkins as bj
from .data import Normalizer, TimeSeries
from .forest import ForestConfig, ForestModel, RegressionTree
from .grey import GreyModel
from .lstm import LstmModel
from .models import TrainedModel, config_from_dict, config_to_dict
from .neural import DenseNet, Layer

MAGIC = "chronocast-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _floats(arr) -> list[str]:
    return [f"{float(x):.17g}" for x in np.asarray(arr, dtype=float).ravel()]


def write_checkpoint(path, header: dict, body: list[str]) -> None:
    lines = [f"{MAGIC} {VERSION}"]
    for key, value in header.items():
        if "\n" in key or ":" in key:
            raise CheckpointError(f"bad header key {key!r}")
        lines.append(f"{key}: {json.dumps(value)}")
    lines.append("---")
    lines.extend(body)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_checkpoint(path) -> tuple[dict, list[str]]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(MAGIC + " "):
        raise CheckpointError(f"{path}: not a chronocast checkpoint")
    version = int(text[0].split()[1])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = {}
    for i, line in enumerate(text[1:], start=1):
        if line == "---":
            return header, text[i + 1:]
        key, _, raw = line.partition(": ")
        header[key] = json.loads(raw)
    raise CheckpointError(f"{path}: missing header terminator")


def _take(body: list[str], pos: int, shape) -> tuple[np.ndarray, int]:
    size = int(np.prod(shape))
    if pos + size > len(body):
        raise CheckpointError("truncated parameter block")
    arr = np.array([float(v) for v in body[pos:pos + size]]).reshape(shape)
    return arr, pos + size


def save_trained(tm: TrainedModel, path) -> None:
    header = {
        "model": tm.name,
        "config": config_to_dict(tm.config),
        "seed": tm.seed,
        "window_length": tm.window_length,
        "ratios": list(tm.ratios),
        "normalizer": {"train_min": tm.normalizer.train_min, "train_max": tm.normalizer.train_max},
        "fit_start": tm.fit_start,
        "fit_end": tm.fit_end,
        "series_start": tm.series.first_date.isoformat(),
        "series_values": [float(v) for v in tm.series.values],
    }
    for key in ("epochs", "epoch", "validation_mse"):
        if key in tm.meta:
            header[key] = tm.meta[key]
    body: list[str] = []
    m = tm.model
    if tm.name == "gm11":
        header.update(m.to_dict())
    elif tm.name in ("arima", "sarimax"):
        header.update({
            "order": list(m.order.as_tuple()),
            "ar": m.ar_coeffs.tolist(),
            "ma": m.ma_coeffs.tolist(),
            "seasonal_ar": m.seasonal_ar.tolist(),
            "seasonal_ma": m.seasonal_ma.tolist(),
            "exog": m.exog_coeffs.tolist(),
            "intercept": m.intercept,
            "residual_variance": m.residual_variance,
            "presample_level": m.presample_level,
            "tail": {"raw": m.raw_tail.tolist(), "level": m.level_tail.tolist(), "residual": m.resid_tail.tolist()},
            "n_obs": m.n_obs,
            "css": m.css,
            "flags": list(m.flags),
        })
    elif tm.name == "ann":
        header["layers"] = [[l.fan_in, l.fan_out, l.activation] for l in m.layers]
        for p in m.params:
            body += _floats(p)
    elif tm.name == "lstm":
        header["input_size"] = m.input_size
        header["hidden"] = list(m.hidden)
        header["hidden_relu"] = m.hidden_relu
        header["gate_order"] = "fico"
        for p in m.params:
            body += _floats(p)
    elif tm.name == "rf":
        header["n_trees"] = len(m.trees)
        for tree in m.trees:
            lines = tree.to_lines()
            body.append(f"T {len(lines)}")
            body += lines
    else:
        raise CheckpointError(f"cannot serialize model {tm.name!r}")
    write_checkpoint(path, header, body)


def load_trained(path) -> TrainedModel:
    h, body = read_checkpoint(path)
    name = h["model"]
    config = config_from_dict(name, h["config"])
    start = dt.date.fromisoformat(h["series_start"])
    values = np.array(h["series_values"], dtype=float)
    series = TimeSeries(start.toordinal() + np.arange(len(values)), values)
    normalizer = Normalizer(h["normalizer"]["train_min"], h["normalizer"]["train_max"])

    if name == "gm11":
        model = GreyModel(h["a"], h["b"], h["x1"], h["n_fit"])
    elif name in ("arima", "sarimax"):
        order = bj.ArimaOrder(*h["order"])
        tail = h["tail"]
        model = bj.ArimaModel(
            order=order,
            ar_coeffs=np.array(h["ar"], float),
            ma_coeffs=np.array(h["ma"], float),
            seasonal_ar=np.array(h["seasonal_ar"], float),
            seasonal_ma=np.array(h["seasonal_ma"], float),
            exog_coeffs=np.array(h["exog"], float),
            intercept=h["intercept"],
            residual_variance=h["residual_variance"],
            presample_level=h["presample_level"],
            raw_tail=np.array(tail["raw"], float),
            level_tail=np.array(tail["level"], float),
            resid_tail=np.array(tail["residual"], float),
            n_obs=h["n_obs"],
            css=h["css"],
            flags=tuple(h.get("flags", ())),
        )
    elif name == "ann":
        layers = [Layer(a, b, act) for a, b, act in h["layers"]]
        params, pos = [], 0
        for layer in layers:
            W, pos = _take(body, pos, (layer.fan_in, layer.fan_out))
            b, pos = _take(body, pos, (layer.fan_out,))
            params += [W, b]
        model = DenseNet(layers, h["seed"], params)
    elif name == "lstm":
        hidden = tuple(h["hidden"])
        params, pos, width = [], 0, h["input_size"]
        for units in hidden:
            W, pos = _take(body, pos, (4 * units, units + width))
            b, pos = _take(body, pos, (4 * units,))
            params += [W, b]
            width = units
        Wd, pos = _take(body, pos, (width, 1))
        bd, pos = _take(body, pos, (1,))
        model = LstmModel(h["input_size"], hidden, h["hidden_relu"], h["seed"], params + [Wd, bd])
    elif name == "rf":
        trees, pos = [], 0
        for _ in range(h["n_trees"]):
            tag, count = body[pos].split()
            if tag != "T":
                raise CheckpointError(f"expected tree marker, got {body[pos]!r}")
            tree, used = RegressionTree.from_lines(body[pos + 1:pos + 1 + int(count)])
            trees.append(tree)
            pos += 1 + used
        model = ForestModel(trees, config if isinstance(config, ForestConfig) else ForestConfig())
    else:
        raise CheckpointError(f"unknown model tag {name!r}")

    meta = {k: h[k] for k in ("epochs", "epoch", "validation_mse") if k in h}
    return TrainedModel(
        name, config, model, series, normalizer, h["window_length"], tuple(h["ratios"]),
        h["fit_start"], h["fit_end"], h["seed"], meta,
    )

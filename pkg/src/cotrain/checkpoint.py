"""View checkpoints: one JSON header line, then raw little-endian float64 parameters.

Parameters are stored layer by layer, weight ([out, in], row-major) before bias.
"""

from __future__ import annotations

import json
import os
import re

import numpy as np

from .errors import ParseError
from .nn_core import Layer, Tensor, ViewModel

FORMAT = "cotrain-view-v1"


def save_view(model, path):
    head = {
        "format": FORMAT,
        "layer_dims": model.layer_dims,
        "activations": [l.activation for l in model.layers],
        "seed": int(model.seed),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(model.flat_parameters().astype("<f8").tobytes())


def load_view(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc
    nl = raw.find(b"\n")
    if nl < 0:
        raise ParseError("missing header line", path=path)
    try:
        head = json.loads(raw[:nl].decode("utf-8"))
        dims = [int(d) for d in head["layer_dims"]]
        acts = list(head["activations"])
        seed = int(head["seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"corrupt header: {exc}", path=path) from None
    if head.get("format") != FORMAT or len(acts) != len(dims) - 1 or len(dims) < 2:
        raise ParseError("unrecognised checkpoint header", path=path)
    body = raw[nl + 1 :]
    expected = sum(o * i + o for i, o in zip(dims, dims[1:]))
    if len(body) != 8 * expected:
        raise ParseError(f"expected {8 * expected} parameter bytes, found {len(body)}", path=path)
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise ParseError("non-finite parameter values", path=path)
    layers, pos = [], 0
    for (fan_in, fan_out), act in zip(zip(dims, dims[1:]), acts):
        w = flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy()
        pos += fan_in * fan_out
        b = flat[pos : pos + fan_out].copy()
        pos += fan_out
        layers.append(Layer(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True), act))
    try:
        return ViewModel(layers, seed=seed)
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from None


def save_views(views, directory):
    os.makedirs(directory, exist_ok=True)
    for i, v in enumerate(views):
        save_view(v, os.path.join(directory, f"view_{i}.bin"))


def load_views(directory):
    """Load ``view_<i>.bin`` files in index order."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"checkpoint directory not found: {directory}")
    found = []
    for name in os.listdir(directory):
        m = re.fullmatch(r"view_(\d+)\.bin", name)
        if m:
            found.append((int(m.group(1)), name))
    if not found:
        raise FileNotFoundError(f"no view_<i>.bin checkpoints in {directory}")
    found.sort()
    return [load_view(os.path.join(directory, name)) for _, name in found]

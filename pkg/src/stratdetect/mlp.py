"""Small feed-forward classifier written directly in numpy.

One optional ReLU hidden layer, softmax output over six modes, Glorot-uniform
weights, zero biases, categorical cross-entropy and Adam. Everything is
float64 so that gradient checks and reruns are exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .records import N_MODES

PROB_FLOOR = 1e-12
PARAM_ORDER = ("W1", "b1", "W2", "b2")


@dataclass
class MlpModel:
    input_dim: int
    hidden_dim: int
    output_dim: int = N_MODES
    params: dict[str, np.ndarray] = field(default_factory=dict)
    seed: int | None = None

    def param_names(self) -> list[str]:
        return [k for k in PARAM_ORDER if k in self.params]

    def n_params(self) -> int:
        return sum(self.params[k].size for k in self.param_names())

    def copy(self) -> "MlpModel":
        return MlpModel(self.input_dim, self.hidden_dim, self.output_dim,
                        {k: v.copy() for k, v in self.params.items()}, self.seed)


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init(input_dim: int, hidden_dim: int, seed: int, output_dim: int = N_MODES) -> MlpModel:
    """Fresh model; ``hidden_dim=0`` gives a single dense softmax layer."""
    if input_dim < 0 or hidden_dim < 0:
        raise ValueError("layer sizes must be non-negative")
    rng = np.random.default_rng(seed)
    params = {}
    if hidden_dim:
        lim = glorot_limit(input_dim, hidden_dim)
        params["W1"] = rng.uniform(-lim, lim, size=(input_dim, hidden_dim))
        params["b1"] = np.zeros(hidden_dim)
        fan_in = hidden_dim
    else:
        fan_in = input_dim
    lim = glorot_limit(fan_in, output_dim)
    params["W2"] = rng.uniform(-lim, lim, size=(fan_in, output_dim))
    params["b2"] = np.zeros(output_dim)
    return MlpModel(input_dim, hidden_dim, output_dim, params, seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} inputs, got {X.shape[-1]}")
    return X


def _forward(model: MlpModel, X: np.ndarray):
    p = model.params
    if model.hidden_dim:
        pre = X @ p["W1"] + p["b1"]
        h = np.maximum(pre, 0.0)
    else:
        pre = None
        h = X
    return pre, h, softmax(h @ p["W2"] + p["b2"])


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one input vector or a batch (rows)."""
    X = _check_input(model, x)
    return _forward(model, X)[2]


def loss_and_grad(model: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    X = np.atleast_2d(_check_input(model, X))
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("empty batch")
    pre, h, probs = _forward(model, X)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, y], PROB_FLOOR)).mean())
    d_logits = probs.copy()
    d_logits[rows, y] -= 1.0
    d_logits /= n
    p = model.params
    grads = {"W2": h.T @ d_logits, "b2": d_logits.sum(axis=0)}
    if model.hidden_dim:
        d_h = d_logits @ p["W2"].T
        d_pre = d_h * (pre > 0)
        grads["W1"] = X.T @ d_pre
        grads["b1"] = d_pre.sum(axis=0)
    return loss, grads


def adam_step(model: MlpModel, grads: dict[str, np.ndarray], state: AdamState) -> tuple[MlpModel, AdamState]:
    """One bias-corrected Adam update, applied in place; returns (model, state)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k in model.param_names():
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(model.params[k])
            state.v[k] = np.zeros_like(model.params[k])
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        model.params[k] -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return model, state


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the lowest index on ties
    return np.argmax(forward(model, np.atleast_2d(X)), axis=1)


def accuracy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("accuracy of an empty dataset")
    return float(np.mean(predict(model, X) == y))


def train(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    *,
    epochs: int = 5,
    batch_size: int = 32,
    optimizer: AdamState | None = None,
    on_epoch: Callable[[int, MlpModel, float], None] | None = None,
) -> tuple[MlpModel, AdamState]:
    """Mini-batch training in the given row order (no reshuffling between epochs)."""
    opt = optimizer or AdamState()
    n = len(y)
    for epoch in range(epochs):
        total = 0.0
        for start in range(0, n, batch_size):
            xb, yb = X[start:start + batch_size], y[start:start + batch_size]
            loss, grads = loss_and_grad(model, xb, yb)
            adam_step(model, grads, opt)
            total += loss * len(yb)
        if on_epoch is not None:
            on_epoch(epoch, model, total / max(n, 1))
    return model, opt


# -- checkpoints ----------------------------------------------------------------
# Layout: 8-byte little-endian unsigned header length L, then L bytes of UTF-8
# JSON header, then the parameters as little-endian float64 in PARAM_ORDER,
# each array flattened row-major. The header lists names and shapes.

def save_checkpoint(path: str | Path, model: MlpModel, schema_hash: str = "") -> None:
    names = model.param_names()
    header = {
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "output_dim": model.output_dim,
        "seed": model.seed,
        "schema_hash": schema_hash,
        "params": [[k, list(model.params[k].shape)] for k in names],
    }
    hb = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes() for k in names)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(payload)


def load_checkpoint(path: str | Path) -> tuple[MlpModel, dict]:
    data = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<Q", data, 0)
    header = json.loads(data[8:8 + hlen])
    off = 8 + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        params[name] = arr.astype(np.float64)
        off += 8 * count
    model = MlpModel(header["input_dim"], header["hidden_dim"], header["output_dim"], params, header["seed"])
    return model, header

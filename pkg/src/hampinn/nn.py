"""Dense tanh network ``t -> R^15`` with its own differentiation.

The time derivative of the output is carried forward as a tangent next to
every activation (forward mode with a single scalar input).  Gradients of a
loss with respect to the weights are obtained by one reverse sweep over the
per-layer values recorded during that forward pass; the sweep back-propagates
through both the values and their time tangents, so losses that depend on
``dy/dt`` are handled exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_WIDTHS = (1, 64, 64, 64, 15)
CHECKPOINT_FORMAT = "hampinn-network"
CHECKPOINT_VERSION = 1


@dataclass
class Network:
    """Weights ``W[i]`` have shape ``(fan_in, fan_out)``; rows are samples."""

    weights: list
    biases: list

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return Network([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    # flat parameter vector: W0, b0, W1, b1, ...
    def flatten(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts += [W.ravel(), b.ravel()]
        return np.concatenate(parts)

    def unflatten(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(theta[pos:pos + W.size].reshape(W.shape).copy())
            pos += W.size
            biases.append(theta[pos:pos + b.size].copy())
            pos += b.size
        return Network(weights, biases)


def init_model(widths=DEFAULT_WIDTHS, seed=0, dtype=np.float64) -> Network:
    """Uniform(+-1/sqrt(fan_in)) hidden layers, zero output layer.

    Weights are drawn in float64 and then cast, so the same seed gives the
    same network up to rounding in either precision.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or widths[0] != 1 or min(widths) < 1:
        raise ValueError(f"invalid layer widths {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        if i == len(widths) - 2:
            weights.append(np.zeros((n_in, n_out)))
            biases.append(np.zeros(n_out))
        else:
            bound = 1.0 / np.sqrt(n_in)
            weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            biases.append(rng.uniform(-bound, bound, size=n_out))
    return Network([W.astype(dtype) for W in weights], [b.astype(dtype) for b in biases])


def _as_batch(t, dtype=np.float64) -> np.ndarray:
    return np.asarray(t, dtype=dtype).reshape(-1, 1)


def forward(model: Network, t) -> np.ndarray:
    """Network output for normalized times ``t``; shape ``(len(t), out)``."""
    h = _as_batch(t, model.weights[0].dtype)
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ W + b
        if i < last:
            h = np.tanh(h)
    return h


class Tape:
    """Values recorded by :func:`forward_with_time_derivative` for the reverse sweep."""

    __slots__ = ("model", "inputs", "tangents", "slopes", "pre_tangents")

    def __init__(self, model):
        self.model = model
        self.inputs = []        # layer input h and its tangent dh/dt
        self.tangents = []
        self.slopes = []        # 1 - tanh^2 for hidden layers
        self.pre_tangents = []  # tangent of the pre-activation


def forward_with_time_derivative(model: Network, t, record: bool = False):
    """Output and its exact derivative with respect to the normalized time.

    Returns ``(y, dy)`` or ``(y, dy, tape)`` when ``record`` is set.
    """
    h = _as_batch(t, model.weights[0].dtype)
    dh = np.ones_like(h)
    tape = Tape(model) if record else None
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        if record:
            tape.inputs.append(h)
            tape.tangents.append(dh)
        z = h @ W + b
        dz = dh @ W
        if i < last:
            h = np.tanh(z)
            s = 1.0 - h * h
            if record:
                tape.slopes.append(s)
                tape.pre_tangents.append(dz)
            dh = s * dz
        else:
            h, dh = z, dz
    return (h, dh, tape) if record else (h, dh)


def backward(tape: Tape, grad_y, grad_dy=None) -> Network:
    """Reverse sweep: gradients of a scalar loss with respect to every weight.

    ``grad_y`` and ``grad_dy`` are the loss adjoints of the output and of
    its time derivative (same shape as the outputs); either may be None.
    Returned as a :class:`Network` holding gradients in place of weights.
    """
    model = tape.model
    n = len(model.weights)
    gz = np.zeros_like(tape.inputs[-1] @ model.weights[-1]) if grad_y is None else grad_y
    gdz = np.zeros_like(gz) if grad_dy is None else grad_dy
    gW, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        W = model.weights[i]
        h, dh = tape.inputs[i], tape.tangents[i]
        gW[i] = h.T @ gz + dh.T @ gdz
        gb[i] = gz.sum(axis=0)
        if i == 0:
            break
        gh = gz @ W.T
        gdh = gdz @ W.T
        # h = tanh(z), dh = s * dz with s = 1 - h^2, ds/dz = -2 h s
        s, dz = tape.slopes[i - 1], tape.pre_tangents[i - 1]
        gdz = gdh * s
        gz = gh * s - 2.0 * h * s * dz * gdh
    return Network(gW, gb)


def save_checkpoint(model: Network, path) -> None:
    """JSON dump: format tag, version, widths and row-major weights."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "activation": "tanh",
        "widths": list(model.widths),
        "layers": [{"weight": W.tolist(), "bias": b.tolist()}
                   for W, b in zip(model.weights, model.biases)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> Network:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    weights = [np.array(layer["weight"], dtype=float) for layer in doc["layers"]]
    biases = [np.array(layer["bias"], dtype=float) for layer in doc["layers"]]
    model = Network(weights, biases)
    if list(model.widths) != doc["widths"]:
        raise ValueError(f"{path}: layer shapes disagree with declared widths")
    return model

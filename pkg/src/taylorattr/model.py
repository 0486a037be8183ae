"""Dense feed-forward networks, the model file format and a toy trainer."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial as _P

from .deriv import MonomialBasis, input_jets
from .errors import ModelFormatError, NonSmoothError, ShapeError, TrainingError
from .numeric import RngState, sample_gaussian_vector

KINK_TOL = 1e-12


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"
    SQUARE = "square"  # u**2; exact finite-order Taylor checks on networks

    @classmethod
    def parse(cls, name: str) -> "Activation":
        try:
            return cls(name)
        except ValueError:
            allowed = ", ".join(a.value for a in cls)
            raise ModelFormatError(f"unknown activation {name!r}; allowed kinds: {allowed}") from None

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return activation_derivatives(self, u, 0)[..., 0]

    def derivative(self, u: np.ndarray) -> np.ndarray:
        return activation_derivatives(self, u, 1)[..., 1]


def _sigmoid(u: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * u))


@lru_cache(maxsize=None)
def _chain_polys(kind: str, order: int) -> tuple[_P, ...]:
    # d^k/du^k of tanh / sigmoid written as polynomials in the function value
    t = _P([0.0, 1.0])
    inner = 1 - t**2 if kind == "tanh" else t * (1 - t)
    polys = [t]
    for _ in range(order):
        polys.append(polys[-1].deriv() * inner)
    return tuple(polys)


def activation_derivatives(kind: Activation | str, u: np.ndarray, order: int) -> np.ndarray:
    """``g^(k)(u)`` for ``k = 0..order`` stacked on a trailing axis."""
    kind = Activation(kind)
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape + (order + 1,))
    if kind is Activation.IDENTITY:
        out[..., 0] = u
        if order >= 1:
            out[..., 1] = 1.0
    elif kind is Activation.SQUARE:
        out[..., 0] = u * u
        if order >= 1:
            out[..., 1] = 2.0 * u
        if order >= 2:
            out[..., 2] = 2.0
    elif kind is Activation.RELU:
        out[..., 0] = np.maximum(u, 0.0)
        if order >= 1:
            out[..., 1] = (u > 0).astype(float)
    elif kind in (Activation.TANH, Activation.SIGMOID):
        value = np.tanh(u) if kind is Activation.TANH else _sigmoid(u)
        for k, p in enumerate(_chain_polys(kind.value, order)):
            out[..., k] = p(value)
    elif kind is Activation.SOFTPLUS:
        out[..., 0] = np.logaddexp(0.0, u)
        if order >= 1:
            s = _sigmoid(u)
            for k, p in enumerate(_chain_polys("sigmoid", order - 1)):
                out[..., k + 1] = p(s)
    return out


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float, ndmin=2)
        b = np.array(self.bias, dtype=float).reshape(-1)
        if w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {w.shape}")
        if b.size != w.shape[0]:
            raise ShapeError(f"bias length {b.size} != out_dim {w.shape[0]}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ShapeError("layer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseLayer):
            return NotImplemented
        return (
            self.activation is other.activation
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


@dataclass(frozen=True)
class LayerTrace:
    inputs: np.ndarray
    pre: np.ndarray
    post: np.ndarray


@dataclass(frozen=True, eq=False)
class Network:
    layers: tuple[DenseLayer, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ShapeError(
                    f"layer {i}: in_dim {layers[i].in_dim} != previous out_dim {layers[i - 1].out_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(a == b for a, b in zip(self.layers, other.layers))

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ShapeError(f"input has {x.shape[-1]} features, network expects {self.input_dim}")
        return x

    def trace(self, x: np.ndarray) -> list[LayerTrace]:
        """Per-layer inputs, pre-activations and activations (batch-friendly)."""
        h = self._check(x)
        out = []
        for layer in self.layers:
            z = h @ layer.weights.T + layer.bias
            a = layer.activation(z)
            out.append(LayerTrace(h, z, a))
            h = a
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.trace(x)[-1].post

    __call__ = forward


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


@dataclass(frozen=True)
class NetworkFunction:
    """One output coordinate (pre-softmax logit) of a network as a scalar model."""

    net: Network
    output_index: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.output_index < self.net.output_dim:
            raise ShapeError(f"output index {self.output_index} outside [0, {self.net.output_dim})")

    @property
    def n_features(self) -> int:
        return self.net.input_dim

    def __call__(self, x: np.ndarray) -> float | np.ndarray:
        y = self.net.forward(x)[..., self.output_index]
        return float(y) if np.ndim(y) == 0 else y

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Reverse sweep; accepts a single input or a batch of shape ``(m, n)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        traces = self.net.trace(np.atleast_2d(x))
        g = np.zeros((traces[-1].post.shape[0], self.net.output_dim))
        g[:, self.output_index] = 1.0
        for layer, tr in zip(reversed(self.net.layers), reversed(traces)):
            if layer.activation is Activation.RELU and np.any(tr.pre == 0.0):
                warnings.warn("gradient evaluated at a ReLU kink; using subgradient 0", RuntimeWarning, stacklevel=2)
            g = (g * layer.activation.derivative(tr.pre)) @ layer.weights
        return g[0] if single else g

    def taylor_jet(self, anchor: np.ndarray, basis: MonomialBasis, support: Sequence[int]) -> np.ndarray:
        h = input_jets(anchor, basis, support)
        for i, layer in enumerate(self.net.layers):
            z = layer.weights @ h
            z[:, 0] += layer.bias
            u = z[:, 0]
            if layer.activation is Activation.RELU and np.any(np.abs(u) < KINK_TOL):
                raise NonSmoothError(f"layer {i}: ReLU pre-activation at kink; Taylor coefficients undefined")
            h = basis.compose(activation_derivatives(layer.activation, u, basis.order), z)
        return h[self.output_index]


# -- model file -----------------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": [[float(v) for v in row] for row in layer.weights],
                "bias": [float(v) for v in layer.bias],
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ],
    }


def _field(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def network_from_dict(doc: dict, source: str = "<model>") -> Network:
    input_dim = _field(doc, "input_dim", source)
    raw_layers = _field(doc, "layers", source)
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelFormatError(f"{source}: 'layers' must be a non-empty list")
    layers = []
    prev = input_dim
    for i, raw in enumerate(raw_layers):
        where = f"{source}: layers[{i}]"
        act = Activation.parse(_field(raw, "activation", where))
        try:
            w = np.array(_field(raw, "weights", where), dtype=float)
            b = np.array(_field(raw, "bias", where), dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"{where}: non-numeric weights or bias ({exc})") from None
        if w.ndim != 2:
            raise ModelFormatError(f"{where}: weights must be a rectangular matrix")
        if b.ndim != 1 or b.size != w.shape[0]:
            raise ModelFormatError(f"{where}: bias length {b.size} does not match {w.shape[0]} output rows")
        if w.shape[1] != prev:
            raise ModelFormatError(f"{where}: expects {w.shape[1]} inputs but receives {prev}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError(f"{where}: non-finite parameter")
        layers.append(DenseLayer(w, b, act))
        prev = w.shape[0]
    return Network(tuple(layers))


def save_model(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def load_model(path: str | Path) -> Network:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return network_from_dict(doc, str(path))


# -- training ---------------------------------------------------------------------


def init_network(arch: Sequence[int], rng: RngState, hidden: Activation | str = "tanh", sigma: float = 0.1) -> Network:
    """Gaussian(0, sigma^2) weights, zero biases, identity (logit) output layer."""
    if len(arch) < 2:
        raise ShapeError(f"architecture needs at least input and output sizes, got {list(arch)}")
    layers = []
    for k, (n_in, n_out) in enumerate(zip(arch[:-1], arch[1:])):
        w = sample_gaussian_vector(rng, sigma, n_in * n_out).reshape(n_out, n_in)
        act = Activation.IDENTITY if k == len(arch) - 2 else Activation(hidden)
        layers.append(DenseLayer(w, np.zeros(n_out), act))
    return Network(tuple(layers))


def train_toy_classifier(
    dataset: Iterable[tuple[Sequence[float], int]],
    arch: Sequence[int],
    rng: RngState,
    epochs: int = 100,
    lr: float = 0.1,
    hidden: Activation | str = "tanh",
    input_scale: float = 1.0,
) -> Network:
    """Per-sample SGD on the logistic loss of a single output logit.

    Inputs are multiplied by ``input_scale`` during training and the factor
    is folded into the first layer afterwards, so the returned network takes
    unscaled inputs. Sample order is reshuffled each epoch from ``rng``.
    """
    data = list(dataset)
    if not data:
        raise ValueError("dataset is empty")
    xs = np.array([np.asarray(x, dtype=float) for x, _ in data]) * input_scale
    ys = np.array([int(y) for _, y in data], dtype=float)
    if not np.all((ys == 0) | (ys == 1)):
        raise ValueError("labels must be 0 or 1")
    if arch[-1] != 1 or arch[0] != xs.shape[1]:
        raise ShapeError(f"architecture {list(arch)} incompatible with {xs.shape[1]} features and one logit")

    net = init_network(arch, rng, hidden)
    ws = [np.array(layer.weights) for layer in net.layers]
    bs = [np.array(layer.bias) for layer in net.layers]
    acts = [layer.activation for layer in net.layers]

    for epoch in range(epochs):
        total = 0.0
        for idx in rng.permutation(len(data)):
            h = xs[idx]
            cache = []
            for w, b, act in zip(ws, bs, acts):
                z = w @ h + b
                cache.append((h, z))
                h = act(z)
            logit = h[0]
            total += np.logaddexp(0.0, logit) - ys[idx] * logit
            g = np.array([_sigmoid(logit) - ys[idx]])
            for k in reversed(range(len(ws))):
                inp, z = cache[k]
                g = g * acts[k].derivative(z)
                grad_w = np.outer(g, inp)
                g_next = ws[k].T @ g
                ws[k] -= lr * grad_w
                bs[k] -= lr * g
                g = g_next
        if not math.isfinite(total):
            raise TrainingError(f"loss diverged (non-finite) in epoch {epoch}")

    ws[0] = ws[0] * input_scale
    return Network(tuple(DenseLayer(w, b, a) for w, b, a in zip(ws, bs, acts)))


def training_accuracy(net: Network, dataset: Iterable[tuple[Sequence[float], int]]) -> float:
    data = list(dataset)
    xs = np.array([x for x, _ in data], dtype=float)
    ys = np.array([y for _, y in data])
    return float(np.mean((net.forward(xs)[:, 0] > 0).astype(int) == ys))

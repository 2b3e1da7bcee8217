"""Multi-layer, multi-feature graph neural networks on one shift operator.

Layer l maps f_{l-1} input features to f_l output features through
polynomial filters followed by a pointwise nonlinearity:

    X_l = sigma( sum_k S^k X_{l-1} H_l[k] )

with coefficient tensors H_l of shape (K_l + 1, f_{l-1}, f_l).  Gradients
are computed by hand in reverse mode; no autodiff framework is involved.

The transfer certificate for a network with L layers, uniform width f,
filters normalized to |h(lambda)| <= 1 and common integral Lipschitz
constant C over epsilon-similar operators is C L f^L eps (+ second order).
For non-uniform widths the product form C L eps prod_t f_t is used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .filters import (
    GraphFilter,
    il_constant,
    integral_lipschitz_constant,
    frequency_response,
    spectral_hull,
)
from .hypergraph import ShiftOperator

CHECKPOINT_FORMAT = "hennkit-model"
CHECKPOINT_VERSION = 1


def _relu(z):
    return np.maximum(z, 0.0)


def _drelu(z):
    return (z > 0).astype(float)


def _tanh(z):
    return np.tanh(z)


def _dtanh(z):
    return 1.0 - np.tanh(z) ** 2


def _sigmoid_normalized(z):
    # Shifted so sigma(0) = 0, keeping the 1-Lipschitz property.
    return 1.0 / (1.0 + np.exp(-z)) - 0.5


def _dsigmoid_normalized(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 - s)


def _identity(z):
    return z


def _didentity(z):
    return np.ones_like(z)


NONLINEARITIES = {
    "relu": (_relu, _drelu),
    "tanh": (_tanh, _dtanh),
    "sigmoid-normalized": (_sigmoid_normalized, _dsigmoid_normalized),
    "identity": (_identity, _didentity),
}


@dataclass(eq=False)
class GnnModel:
    """Stack of polynomial filter banks with a shared pointwise nonlinearity."""

    layers: list
    nonlinearity: str = "relu"

    def __post_init__(self):
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        layers = []
        for idx, h in enumerate(self.layers):
            h = np.asarray(h, dtype=float)
            if h.ndim != 3:
                raise ConfigError(f"layer {idx} tensor must be (K+1, f_in, f_out)")
            layers.append(h)
        for a, b in zip(layers, layers[1:]):
            if a.shape[2] != b.shape[1]:
                raise ConfigError(
                    f"feature mismatch between layers: {a.shape[2]} -> {b.shape[1]}"
                )
        self.layers = layers

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def feature_counts(self) -> tuple:
        return (self.layers[0].shape[1],) + tuple(h.shape[2] for h in self.layers)

    def filters(self):
        """Iterate (layer, in_feature, out_feature, GraphFilter)."""
        for l, h in enumerate(self.layers):
            for j in range(h.shape[1]):
                for i in range(h.shape[2]):
                    yield l, j, i, GraphFilter(h[:, j, i])

    def copy(self) -> "GnnModel":
        return GnnModel([h.copy() for h in self.layers], self.nonlinearity)


def random_gnn(
    widths: Sequence[int],
    taps: int,
    rng: np.random.Generator,
    nonlinearity: str = "relu",
    scale: float = 0.5,
    spectral_radius: float = 1.0,
) -> GnnModel:
    """Gaussian-initialized model; widths = (f_0, ..., f_L).

    ``spectral_radius`` rescales tap k by radius^-k so every term of the
    polynomial starts at a comparable magnitude on the target operator;
    without it the top tap dominates both the response and the Lipschitz
    penalty at initialization.
    """
    damp = np.maximum(1.0, spectral_radius) ** -np.arange(taps + 1)
    layers = [
        scale
        * damp[:, None, None]
        * rng.standard_normal((taps + 1, widths[i], widths[i + 1]))
        / np.sqrt((taps + 1) * widths[i])
        for i in range(len(widths) - 1)
    ]
    return GnnModel(layers, nonlinearity)


def _as_matrix(s) -> np.ndarray:
    return s.matrix if isinstance(s, ShiftOperator) else np.asarray(s, dtype=float)


def _shift(mat: np.ndarray, x: np.ndarray) -> np.ndarray:
    n, b, f = x.shape
    return (mat @ x.reshape(n, b * f)).reshape(n, b, f)


def forward_batch(model: GnnModel, s, x: np.ndarray, cache: list = None) -> np.ndarray:
    """Run the layer recursion on a batch laid out as (n, batch, features)."""
    mat = _as_matrix(s)
    act, _ = NONLINEARITIES[model.nonlinearity]
    if x.shape[0] != mat.shape[0] or x.shape[2] != model.feature_counts[0]:
        raise ConfigError(
            f"input shape {x.shape} incompatible with operator size {mat.shape[0]} "
            f"and input width {model.feature_counts[0]}"
        )
    for h in model.layers:
        taps = [x]
        for _ in range(h.shape[0] - 1):
            taps.append(_shift(mat, taps[-1]))
        z = sum(t @ h[k] for k, t in enumerate(taps))
        if cache is not None:
            cache.append((taps, z))
        x = act(z)
    return x


def backward_batch(model: GnnModel, s, cache: list, dout: np.ndarray):
    """Reverse-mode pass; returns (per-layer gradients, input gradient)."""
    mat = _as_matrix(s)
    _, dact = NONLINEARITIES[model.nonlinearity]
    grads = [None] * model.depth
    for l in range(model.depth - 1, -1, -1):
        taps, z = cache[l]
        h = model.layers[l]
        dz = dout * dact(z)
        grads[l] = np.stack(
            [np.tensordot(t, dz, axes=([0, 1], [0, 1])) for t in taps]
        )
        acc = dz @ h[-1].T
        for k in range(h.shape[0] - 2, -1, -1):
            acc = _shift(mat, acc) + dz @ h[k].T
        dout = acc
    return grads, dout


def _to_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ConfigError(f"node signal must be (n,) or (n, f), got {x.shape}")
    return x[:, None, :]


def forward(model: GnnModel, s, x0: np.ndarray) -> np.ndarray:
    """Single-signal forward pass: (n, f_0) -> (n, f_L)."""
    return forward_batch(model, s, _to_batch(x0))[:, 0, :]


def backward(model: GnnModel, s, x0: np.ndarray, upstream: np.ndarray):
    """Exact gradients of every coefficient for a single signal.

    ``upstream`` is the loss gradient at the network output, shape (n, f_L).
    Returns (gradients matching ``model.layers``, gradient w.r.t. x0).
    """
    cache = []
    forward_batch(model, s, _to_batch(x0), cache)
    up = np.asarray(upstream, dtype=float)
    if up.ndim == 1:
        up = up[:, None]
    grads, dx = backward_batch(model, s, cache, up[:, None, :])
    return grads, dx[:, 0, :]


def transfer_bound(c: float, epsilon: float, widths: Sequence[int]) -> float:
    """First-order network transfer certificate.

    Uniform widths f give C L f^L eps; otherwise the general product form
    C L eps prod_t f_t (all widths, input through output) applies.
    """
    widths = tuple(int(w) for w in widths)
    layers = len(widths) - 1
    if layers < 1:
        raise ConfigError("need at least one layer")
    if len(set(widths)) == 1:
        return c * layers * widths[0] ** layers * epsilon
    return c * layers * epsilon * float(np.prod(widths))


def model_transfer_bound(model: GnnModel, epsilon: float, c: float) -> float:
    return transfer_bound(c, epsilon, model.feature_counts)


def max_il_constant(model: GnnModel, lam_min: float, lam_max: float) -> float:
    """Largest integral Lipschitz constant over all filters in the model."""
    return max(il_constant(f, lam_min, lam_max) for *_ix, f in model.filters())


def max_endpoint_il(model: GnnModel, lam_min: float, lam_max: float) -> float:
    return max(
        integral_lipschitz_constant(f, lam_min, lam_max) for *_ix, f in model.filters()
    )


def normalize_model(model: GnnModel, eigenvalues: np.ndarray) -> GnnModel:
    """Rescale each filter so its peak response over ``eigenvalues`` is <= 1."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    out = model.copy()
    for l, h in enumerate(out.layers):
        for j in range(h.shape[1]):
            for i in range(h.shape[2]):
                peak = np.max(np.abs(frequency_response(GraphFilter(h[:, j, i]), eigenvalues)))
                if peak > 1.0:
                    h[:, j, i] /= peak
    return out


@dataclass
class GnnTransferReport:
    max_deviation: float
    bound: float
    c_used: float
    epsilon: float
    trials: int
    holds: bool


def check_gnn_transfer(
    model: GnnModel,
    s,
    s_tilde,
    epsilon: float,
    trials: int,
    rng: np.random.Generator,
    slack: float = 2.0,
) -> GnnTransferReport:
    """Monte Carlo check of the network transfer certificate.

    Samples unit-norm inputs, measures max |Phi(x; S) - Phi(x; S~)|_2 and
    compares against the first-order bound plus ``slack * epsilon**2``.
    The model is expected to be normalized over both spectra.
    """
    lo, hi = spectral_hull(s, s_tilde)
    c = max_il_constant(model, lo, hi)
    bound = model_transfer_bound(model, epsilon, c)
    n = _as_matrix(s).shape[0]
    f0 = model.feature_counts[0]
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal((n, f0))
        x /= np.linalg.norm(x)
        dev = float(np.linalg.norm(forward(model, s, x) - forward(model, s_tilde, x)))
        worst = max(worst, dev)
    total = bound + slack * epsilon**2
    return GnnTransferReport(worst, total, c, epsilon, trials, bool(worst <= total))


def model_to_dict(model: GnnModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "type": "gnn",
        "nonlinearity": model.nonlinearity,
        "layer_shapes": [list(h.shape) for h in model.layers],
        "layers": [h.tolist() for h in model.layers],
    }


def model_from_dict(payload: dict) -> GnnModel:
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError("not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')}")
    layers = [np.asarray(h, dtype=float) for h in payload["layers"]]
    for h, shape in zip(layers, payload["layer_shapes"]):
        if list(h.shape) != shape:
            raise ConfigError("checkpoint layer shape mismatch")
    return GnnModel(layers, payload["nonlinearity"])


def save_checkpoint(model: GnnModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_checkpoint(path) -> GnnModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))

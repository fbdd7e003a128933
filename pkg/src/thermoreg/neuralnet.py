"""Small 1-D CNN regressor with hand-written backpropagation.

Architecture: [Conv1D('same', stride 1) -> ReLU] x N -> flatten -> Dense(64, ReLU)
-> Dense(1). The engineered features form a length-d, single-channel sequence.
Everything runs in float64.

All trainable parameters live in one flat vector; each layer's weights are
views into it, which keeps the Adam update to a few vectorized operations.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numba
import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .transform import FeatureMatrix

FORMAT_TAG = "thermoreg-network"
FORMAT_VERSION = 1


# --------------------------------------------------------------------------
# Specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvLayer:
    filters: int
    kernel_size: int
    l2: float = 0.01

    def __post_init__(self):
        if not 8 <= self.filters <= 64:
            raise ConfigError(f"filters must be in [8, 64], got {self.filters}")
        if self.kernel_size not in (2, 3):
            raise ConfigError(f"kernel_size must be 2 or 3, got {self.kernel_size}")
        if self.l2 < 0:
            raise ConfigError("l2 must be >= 0")


@dataclass(frozen=True)
class NetworkSpec:
    conv_layers: tuple
    input_length: int
    dense_units: int = 64
    output_units: int = 1
    input_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(
            c if isinstance(c, ConvLayer) else ConvLayer(**c) for c in self.conv_layers))
        if self.input_length < 1:
            raise ConfigError("input_length must be >= 1")

    @classmethod
    def stack(cls, n_layers: int, filters: int, kernel_size: int, l2: float, input_length: int):
        return cls(tuple(ConvLayer(filters, kernel_size, l2) for _ in range(n_layers)), input_length)

    @property
    def label(self) -> str:
        f = {c.filters for c in self.conv_layers}
        k = {c.kernel_size for c in self.conv_layers}
        r = {c.l2 for c in self.conv_layers}
        if len(f) == len(k) == len(r) == 1:
            return f"{len(self.conv_layers)}xConv1D({f.pop()}) k={k.pop()} l2={r.pop()}"
        return " + ".join(f"Conv1D({c.filters},k={c.kernel_size},l2={c.l2})" for c in self.conv_layers)

    def to_dict(self) -> dict:
        return {"conv_layers": [asdict(c) for c in self.conv_layers], "input_length": self.input_length,
                "dense_units": self.dense_units, "output_units": self.output_units,
                "input_channels": self.input_channels}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 1000
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.2


# --------------------------------------------------------------------------
# Convolution primitives
# --------------------------------------------------------------------------

def same_padding(k: int) -> tuple:
    """(left, right) zero padding; the extra zero goes on the right for even k."""
    left = (k - 1) // 2
    return left, k - 1 - left


def _im2col(a: np.ndarray, k: int) -> np.ndarray:
    """(B, L, C) -> (B, L, k, C) windows over the 'same'-padded input."""
    B, L, C = a.shape
    left, right = same_padding(k)
    cols = np.zeros((B, L, k, C))
    for j in range(k):
        # window j reads input position t + j - left
        lo, hi = max(0, left - j), min(L, L + left - j)
        cols[:, lo:hi, j] = a[:, lo + j - left:hi + j - left]
    return cols


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """'Same'-padded stride-1 cross-correlation.

    x: (B, L, C_in) or (L, C_in); w: (k, C_in, C_out); b: (C_out,).
    out[t, f] = b[f] + sum_{j, c} w[j, c, f] * x_padded[t + j, c]
    """
    single = x.ndim == 2
    if single:
        x = x[None]
    k, c_in, c_out = w.shape
    if x.shape[2] != c_in or b.shape != (c_out,):
        raise DataError(f"conv shape mismatch: input {x.shape}, kernel {w.shape}, bias {b.shape}")
    cols = _im2col(x, k)
    out = cols.reshape(-1, k * c_in) @ w.reshape(k * c_in, c_out) + b
    out = out.reshape(x.shape[0], x.shape[1], c_out)
    return out[0] if single else out


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------

class Network:
    """Parameter layout plus forward/backward for a NetworkSpec."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        shapes = []
        c_in = spec.input_channels
        for i, c in enumerate(spec.conv_layers):
            shapes.append((f"conv{i}.w", (c.kernel_size, c_in, c.filters)))
            shapes.append((f"conv{i}.b", (c.filters,)))
            c_in = c.filters
        flat = spec.input_length * c_in
        shapes += [("dense.w", (flat, spec.dense_units)), ("dense.b", (spec.dense_units,)),
                   ("out.w", (spec.dense_units, spec.output_units)), ("out.b", (spec.output_units,))]
        self.shapes = shapes
        self.offsets = {}
        pos = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            self.offsets[name] = (pos, pos + size, shape)
            pos += size
        self.size = pos
        # (lo, hi, coefficient) for each penalized conv kernel
        self.penalized = [(*self.offsets[f"conv{i}.w"][:2], c.l2)
                          for i, c in enumerate(spec.conv_layers) if c.l2 > 0]

    def views(self, flat: np.ndarray) -> dict:
        return {name: flat[lo:hi].reshape(shape) for name, (lo, hi, shape) in self.offsets.items()}

    def init_params(self, seed: int, output_bias: float = 0.0) -> np.ndarray:
        """Uniform fan-in init: +-sqrt(6/fan_in) for ReLU layers, +-sqrt(3/fan_in) for the output."""
        rng = np.random.default_rng(seed)
        flat = np.zeros(self.size)
        p = self.views(flat)
        for name, (_, _, shape) in self.offsets.items():
            if name.endswith(".w"):
                fan_in = int(np.prod(shape[:-1]))
                limit = math.sqrt((3.0 if name == "out.w" else 6.0) / fan_in)
                p[name][...] = rng.uniform(-limit, limit, size=shape)
        p["out.b"][...] = output_bias
        return flat

    def penalty(self, flat: np.ndarray) -> float:
        return float(sum(c * (flat[lo:hi] @ flat[lo:hi]) for lo, hi, c in self.penalized))

    def forward(self, flat: np.ndarray, X: np.ndarray, keep: bool = False):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.spec.input_length:
            raise DataError(f"expected (n, {self.spec.input_length}) input, got {X.shape}")
        p = self.views(flat)
        a = X[:, :, None]
        cache = []
        for i, c in enumerate(self.spec.conv_layers):
            w, b = p[f"conv{i}.w"], p[f"conv{i}.b"]
            cols = _im2col(a, c.kernel_size)
            z = cols.reshape(-1, w.shape[0] * w.shape[1]) @ w.reshape(-1, w.shape[2]) + b
            a = np.maximum(z, 0.0).reshape(a.shape[0], a.shape[1], w.shape[2])
            if keep:
                cache.append((cols, z))
        flat_in = a.reshape(a.shape[0], -1)
        hz = flat_in @ p["dense.w"] + p["dense.b"]
        h = np.maximum(hz, 0.0)
        out = h @ p["out.w"] + p["out.b"]
        if keep:
            return out[:, 0], (cache, flat_in, hz, h)
        return out[:, 0]

    def loss_and_grad(self, flat: np.ndarray, X: np.ndarray, y: np.ndarray, grad: Optional[np.ndarray] = None):
        """(mse + sum_l l2_l ||W_conv_l||^2, gradient as a flat vector, mse)."""
        n = X.shape[0]
        if n == 0:
            raise DataError("empty batch")
        pred, (cache, flat_in, hz, h) = self.forward(flat, X, keep=True)
        resid = pred - y
        mse = float(resid @ resid) / n
        if grad is None:
            grad = np.empty(self.size)
        p = self.views(flat)
        g = self.views(grad)

        d_out = (2.0 / n) * resid[:, None]
        g["out.w"][...] = h.T @ d_out
        g["out.b"][...] = d_out.sum(axis=0)
        d_hz = (d_out @ p["out.w"].T) * (hz > 0)
        g["dense.w"][...] = flat_in.T @ d_hz
        g["dense.b"][...] = d_hz.sum(axis=0)
        L = self.spec.input_length
        d_a = (d_hz @ p["dense.w"].T).reshape(n, L, -1)
        for i in range(len(self.spec.conv_layers) - 1, -1, -1):
            k = self.spec.conv_layers[i].kernel_size
            w = p[f"conv{i}.w"]
            cols, z = cache[i]
            d_z = d_a.reshape(-1, w.shape[2]) * (z > 0)
            g[f"conv{i}.w"][...] = (cols.reshape(-1, w.shape[0] * w.shape[1]).T @ d_z).reshape(w.shape)
            g[f"conv{i}.b"][...] = d_z.sum(axis=0)
            if i == 0:
                break
            d_cols = (d_z @ w.reshape(-1, w.shape[2]).T).reshape(n, L, k, w.shape[1])
            left, _ = same_padding(k)
            d_pad = np.zeros((n, L + k - 1, w.shape[1]))
            for j in range(k):
                d_pad[:, j:j + L] += d_cols[:, :, j]
            d_a = d_pad[:, left:left + L]
        for lo, hi, c in self.penalized:
            grad[lo:hi] += 2.0 * c * flat[lo:hi]
        return mse + self.penalty(flat), grad, mse


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float = 0.001,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    _adam_kernel(params, grad, state.m, state.v, lr, beta1, beta2, eps,
                 1.0 - beta1 ** state.t, 1.0 - beta2 ** state.t)


@numba.njit(cache=True)
def _adam_kernel(params, grad, m, v, lr, beta1, beta2, eps, corr1, corr2):
    for i in range(params.shape[0]):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        params[i] -= lr * (m[i] / corr1) / (math.sqrt(v[i] / corr2) + eps)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainedNetwork:
    spec: NetworkSpec
    names: tuple
    weights: np.ndarray
    final_weights: np.ndarray
    history: np.ndarray  # (epochs, 2): mean batch loss during the epoch, validation mse
    best_epoch: int
    config: TrainConfig = field(default_factory=TrainConfig)

    def predict(self, m: FeatureMatrix, final: bool = False) -> np.ndarray:
        if m.names != self.names:
            missing = [n for n in self.names if n not in m.names]
            extra = [n for n in m.names if n not in self.names]
            if missing or extra:
                raise DataError(f"column mismatch: missing {missing}, extra {extra}")
            m = m.select(self.names)
        if m.n_rows == 0:
            return np.empty(0)
        return Network(self.spec).forward(self.final_weights if final else self.weights, m.values)

    def to_dict(self) -> dict:
        return {"format": FORMAT_TAG, "version": FORMAT_VERSION, "spec": self.spec.to_dict(),
                "names": list(self.names), "weights": self.weights.tolist(),
                "final_weights": self.final_weights.tolist(), "history": self.history.tolist(),
                "best_epoch": self.best_epoch, "config": asdict(self.config)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedNetwork":
        if d.get("format") != FORMAT_TAG or d.get("version") != FORMAT_VERSION:
            raise ConfigError("not a supported network artifact")
        return cls(NetworkSpec(**d["spec"]), tuple(d["names"]), np.array(d["weights"]),
                   np.array(d["final_weights"]), np.array(d["history"]).reshape(-1, 2),
                   int(d["best_epoch"]), TrainConfig(**d["config"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "TrainedNetwork":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def write_history(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, (tr, va) in enumerate(self.history, start=1):
                w.writerow([e, repr(float(tr)), repr(float(va))])


def validation_split(n_rows: int, fraction: float, seed: int):
    """Seeded (train, validation) row indices for network early checkpointing."""
    n_val = int(math.floor(n_rows * fraction + 0.5))
    if not 0 < n_val < n_rows:
        raise ConfigError(f"validation fraction {fraction} leaves an empty split of {n_rows} rows")
    perm = np.random.default_rng([seed, 7]).permutation(n_rows)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(spec: NetworkSpec, cfg: TrainConfig, train_m: FeatureMatrix,
          val_m: Optional[FeatureMatrix] = None) -> TrainedNetwork:
    """Mini-batch Adam on MSE + conv L2; keeps the best-validation-epoch weights.

    Without ``val_m`` the training loss selects the checkpoint.
    """
    if train_m.n_features != spec.input_length:
        raise ConfigError(f"network expects {spec.input_length} features, matrix has {train_m.n_features}")
    X, y = train_m.values, train_m.require_target()
    net = Network(spec)
    params = net.init_params(cfg.seed, output_bias=float(y.mean()))
    state = AdamState.zeros(net.size)
    grad = np.empty(net.size)
    rng = np.random.default_rng([cfg.seed, 1])
    n = X.shape[0]
    history = np.empty((cfg.epochs, 2))
    best = (np.inf, -1, params.copy())
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        running = 0.0
        for s in range(0, n, cfg.batch_size):
            rows = order[s:s + cfg.batch_size]
            loss, _, _ = net.loss_and_grad(params, X[rows], y[rows], grad)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}; "
                                     f"try a smaller learning rate than {cfg.learning_rate}")
            running += loss * len(rows)
            adam_step(params, grad, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        # Row-weighted mean of the batch losses seen during the epoch.
        train_loss = running / n
        if val_m is not None:
            vr = net.forward(params, val_m.values) - val_m.require_target()
            val_loss = float(vr @ vr) / len(vr)
        else:
            val_loss = train_loss
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise NumericalError(f"non-finite loss at epoch {epoch + 1}; "
                                 f"try a smaller learning rate than {cfg.learning_rate}")
        history[epoch] = train_loss, val_loss
        if val_loss < best[0]:
            best = (val_loss, epoch, params.copy())
    return TrainedNetwork(spec, train_m.names, best[2], params.copy(), history, best[1], cfg)


def forward(net: TrainedNetwork, batch: FeatureMatrix) -> np.ndarray:
    return net.predict(batch)


# Benchmark CNN rows: (conv layers, filters, kernel size, l2)
CNN_GRID = (
    (2, 64, 2, 0.01),
    (2, 32, 2, 0.01),
    (4, 16, 2, 0.01),
    (5, 8, 2, 0.01),
    (4, 16, 3, 0.01),
    (5, 16, 3, 0.01),
    (4, 16, 3, 0.001),
)

"""Single-hidden-layer perceptron trained with per-sample backpropagation."""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass

import numpy as np

MODEL_MAGIC = "ZEPMLP"
MODEL_VERSION = "v1"


class Head(enum.Enum):
    REGRESSION = "regression"
    BINARY = "binary"


class ModelError(ValueError):
    pass


class MalformedModel(ModelError):
    pass


class ModelVersionError(ModelError):
    pass


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass
class Mlp:
    """tanh hidden layer; identity (regression) or tanh (binary) output."""

    w1: np.ndarray  # (n_hidden, n_in)
    b1: np.ndarray
    w2: np.ndarray  # (n_out, n_hidden)
    b2: np.ndarray
    head: Head

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]

    def params(self):
        return (self.w1, self.b1, self.w2, self.b2)

    def copy(self) -> "Mlp":
        return Mlp(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.head)

    def same_params(self, other: "Mlp") -> bool:
        return self.head == other.head and all(
            np.array_equal(a, b) for a, b in zip(self.params(), other.params()))

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise ValueError(f"expected (n, {self.n_in}) inputs, got {X.shape}")
        h = np.tanh(X @ self.w1.T + self.b1)
        y = h @ self.w2.T + self.b2
        if self.head is Head.BINARY:
            y = np.tanh(y)
        return y[:, 0] if self.n_out == 1 else y


@dataclass
class TrainingSet:
    features: np.ndarray
    targets: np.ndarray
    head: Head

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or len(self.features) != len(self.targets):
            raise ValueError("features must be (n, d) with one target per row")
        if self.head is Head.BINARY and not np.all(np.isin(self.targets, (-1.0, 1.0))):
            raise ValueError("binary targets must be -1 or +1")
        if self.head is Head.REGRESSION and np.any(np.abs(self.targets) > 1.0):
            raise ValueError("regression targets must lie in [-1, 1]")

    def __len__(self):
        return len(self.targets)


def default_hidden_size(n_in: int) -> int:
    return max(1, n_in // 2)


def mlp_new(n_in: int, n_hidden: int | None = None, n_out: int = 1,
            head: Head = Head.REGRESSION, seed: int = 0) -> Mlp:
    """Weights uniform in +-1/sqrt(fan_in); ``n_hidden`` defaults to half of ``n_in``."""
    if n_hidden is None:
        n_hidden = default_hidden_size(n_in)
    if min(n_in, n_hidden, n_out) < 1:
        raise ValueError("layer widths must be at least 1")
    rng = np.random.default_rng(seed)
    a1 = 1.0 / math.sqrt(n_in)
    a2 = 1.0 / math.sqrt(n_hidden)
    return Mlp(rng.uniform(-a1, a1, (n_hidden, n_in)), rng.uniform(-a1, a1, n_hidden),
               rng.uniform(-a2, a2, (n_out, n_hidden)), rng.uniform(-a2, a2, n_out), Head(head))


def forward(m: Mlp, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_in,):
        raise ValueError(f"expected {m.n_in} inputs, got shape {x.shape}")
    y = m.forward_batch(x[None, :])[0]
    return float(y) if m.n_out == 1 else y


def _backprop(m: Mlp, x: np.ndarray, t):
    """Loss (y - t)^2 summed over outputs and its gradients."""
    h = np.tanh(m.w1 @ x + m.b1)
    z = m.w2 @ h + m.b2
    if m.head is Head.BINARY:
        y = np.tanh(z)
        dz = 2.0 * (y - t) * (1.0 - y * y)
    else:
        y = z
        dz = 2.0 * (y - t)
    loss = float(np.sum((y - t) ** 2))
    gw2 = np.outer(dz, h)
    dh = (m.w2.T @ dz) * (1.0 - h * h)
    gw1 = np.outer(dh, x)
    return loss, (gw1, dh, gw2, dz)


def train(m: Mlp, data: TrainingSet, epochs: int = 50, learning_rate: float = 0.01,
          seed: int = 0) -> tuple[Mlp, list[float]]:
    """Plain SGD on squared error, one update per sample, reshuffled every epoch.

    Returns a trained copy and the mean per-sample loss of each epoch.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if data.head is not m.head:
        raise ValueError(f"{data.head.value} data for a {m.head.value} model")
    if data.features.shape[1] != m.n_in:
        raise ValueError(f"features have {data.features.shape[1]} columns, model expects {m.n_in}")
    out = m.copy()
    rng = np.random.default_rng(seed)
    X, T = data.features, data.targets
    w1, b1, w2, b2 = out.params()
    binary = out.head is Head.BINARY
    lr = learning_rate
    trace = []
    losses = np.empty(len(T))  # indexed by sample so the epoch mean is order independent
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            for k in rng.permutation(len(T)):
                x = X[k]
                h = np.tanh(w1 @ x + b1)
                z = w2 @ h + b2
                if binary:
                    y = np.tanh(z)
                    err = y - T[k]
                    dz = 2.0 * err * (1.0 - y * y)
                else:
                    err = z - T[k]
                    dz = 2.0 * err
                losses[k] = err @ err
                dh = (w2.T @ dz) * (1.0 - h * h)
                w2 -= lr * np.outer(dz, h)
                b2 -= lr * dz
                w1 -= lr * np.outer(dh, x)
                b1 -= lr * dh
            loss = float(losses.mean())
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            trace.append(loss)
    return out, trace


def predict_labels(m: Mlp, X: np.ndarray) -> np.ndarray:
    return np.where(m.forward_batch(X) >= 0.0, 1.0, -1.0)


def accuracy(m: Mlp, data: TrainingSet) -> float:
    return float(np.mean(predict_labels(m, data.features) == np.sign(data.targets)))


def gradient_check(m: Mlp, x, target, step: float = 1e-4) -> float:
    """Largest relative gap between backprop and central-difference gradients.

    Entries where both gradients are below 1e-8 in magnitude count as exact.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.atleast_1d(np.asarray(target, dtype=np.float64))
    _, grads = _backprop(m, x, t)
    probe = m.copy()
    worst = 0.0
    for param, grad in zip(probe.params(), grads):
        flat = param.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up, _ = _backprop(probe, x, t)
            flat[i] = keep - step
            down, _ = _backprop(probe, x, t)
            flat[i] = keep
            numeric = (up - down) / (2 * step)
            scale = max(abs(numeric), abs(gflat[i]))
            if scale < 1e-8:
                continue
            worst = max(worst, abs(numeric - gflat[i]) / scale)
    return worst


def dumps_model(m: Mlp) -> str:
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION}", m.head.value, f"{m.n_in} {m.n_hidden} {m.n_out}"]
    for row in m.w1:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in m.b1))
    for row in m.w2:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in m.b2))
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> Mlp:
    lines = text.splitlines()
    if not lines:
        raise MalformedModel("empty model file")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != MODEL_MAGIC:
        raise MalformedModel(f"bad magic line {lines[0]!r}")
    if magic[1] != MODEL_VERSION:
        raise ModelVersionError(f"model version {magic[1]} is not {MODEL_VERSION}")
    try:
        head = Head(lines[1].strip())
        n_in, n_hidden, n_out = (int(v) for v in lines[2].split())
    except (IndexError, ValueError) as exc:
        raise MalformedModel(f"bad model header: {exc}") from None
    if min(n_in, n_hidden, n_out) < 1:
        raise MalformedModel("layer widths must be positive")
    expected = 3 + n_hidden + 1 + n_out + 1
    if len(lines) < expected:
        raise MalformedModel(f"model file truncated: {len(lines)} of {expected} lines")

    def rows(start, count, width):
        try:
            arr = np.array([[float(v) for v in lines[start + i].split()] for i in range(count)])
        except ValueError as exc:
            raise MalformedModel(str(exc)) from None
        if arr.shape != (count, width):
            raise MalformedModel(f"expected {count}x{width} values at line {start + 1}")
        return arr

    w1 = rows(3, n_hidden, n_in)
    b1 = rows(3 + n_hidden, 1, n_hidden)[0]
    w2 = rows(4 + n_hidden, n_out, n_hidden)
    b2 = rows(4 + n_hidden + n_out, 1, n_out)[0]
    if not all(np.all(np.isfinite(a)) for a in (w1, b1, w2, b2)):
        raise MalformedModel("non-finite parameter")
    return Mlp(w1, b1, w2, b2, head)


def save_model(m: Mlp, path: str | os.PathLike) -> None:
    with open(path, "w") as f:
        f.write(dumps_model(m))


def load_model(path: str | os.PathLike) -> Mlp:
    with open(path) as f:
        return loads_model(f.read())

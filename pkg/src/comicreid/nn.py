"""Minimal dense-network machinery with explicit gradients.

Everything is float64 numpy, single-threaded, and deterministic given the
seeding rng. Checkpoints are a versioned list of named parameter arrays so
models round-trip exactly between runs.
"""

from __future__ import annotations

import json

import numpy as np

from .model import DataError, check_finite

CHECKPOINT_VERSION = 1


class Linear:
    """Affine layer y = x W + b with Xavier-uniform init."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, name: str):
        limit = np.sqrt(6.0 / (d_in + d_out))
        self.W = rng.uniform(-limit, limit, size=(d_in, d_out))
        self.b = np.zeros(d_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self.name = name
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.dW += self._x.T @ dout
        self.db += dout.sum(axis=0)
        return dout @ self.W.T

    def parameters(self):
        yield (f"{self.name}.W", self.W, self.dW)
        yield (f"{self.name}.b", self.b, self.db)

    def zero_grad(self):
        self.dW[...] = 0.0
        self.db[...] = 0.0


class Mlp:
    """Stack of Linear layers with ReLU between (none after the last)."""

    def __init__(self, rng: np.random.Generator, dims: list[int], name: str):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        self.layers = [
            Linear(rng, dims[i], dims[i + 1], f"{name}.l{i}")
            for i in range(len(dims) - 1)
        ]
        self._masks: list[np.ndarray] = []

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._masks = []
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if i < len(self.layers) - 1:
                mask = x > 0.0
                self._masks.append(mask)
                x = x * mask
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for i in range(len(self.layers) - 1, -1, -1):
            if i < len(self.layers) - 1:
                dout = dout * self._masks[i]
            dout = self.layers[i].backward(dout)
        return dout

    def parameters(self):
        for layer in self.layers:
            yield from layer.parameters()

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()


def normalize_rows_forward(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize rows; returns (normalized, norms) for the backward pass."""
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DataError("cannot normalize zero vector")
    return z / norms, norms


def normalize_rows_backward(dhat: np.ndarray, zhat: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Pull gradients through row normalization: (I - zz^T)/||z|| applied rowwise."""
    inner = np.sum(dhat * zhat, axis=1, keepdims=True)
    return (dhat - zhat * inner) / norms


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients together so the global L2 norm is at most max_norm."""
    total = 0.0
    grads = []
    for _, _, g in params:
        total += float(np.sum(g * g))
        grads.append(g)
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, lr: float = 5e-4, weight_decay: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, value, grad in params:
            m = self.m.setdefault(name, np.zeros_like(value))
            v = self.v.setdefault(name, np.zeros_like(value))
            m += (1.0 - self.beta1) * (grad - m)
            v += (1.0 - self.beta2) * (grad * grad - v)
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            value -= lr * update + lr * self.weight_decay * value


class Sgdw:
    """Plain gradient descent with decoupled weight decay, no momentum."""

    def __init__(self, lr: float = 7.5e-4, weight_decay: float = 0.05):
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self, params, lr: float | None = None):
        lr = self.lr if lr is None else lr
        for _, value, grad in params:
            value -= lr * grad + lr * self.weight_decay * value


def cosine_annealed_lr(base_lr: float, step: int, total_steps: int,
                       floor_divisor: float = 50.0) -> float:
    """Cosine decay from base_lr to base_lr/floor_divisor over total_steps."""
    floor = base_lr / floor_divisor
    if total_steps <= 1:
        return floor
    frac = min(max(step, 0), total_steps - 1) / (total_steps - 1)
    return floor + 0.5 * (base_lr - floor) * (1.0 + np.cos(np.pi * frac))


def exponential_lr(base_lr: float, epoch: int, gamma: float = 0.95) -> float:
    return base_lr * gamma ** epoch


def save_checkpoint(path, named_arrays: list[tuple[str, np.ndarray]], meta: dict | None = None) -> None:
    """Write a versioned layer list: name, shape, row-major flat values."""
    record = {
        "format_version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "layers": [
            {
                "name": name,
                "shape": list(arr.shape),
                "values": [float(v) for v in np.ravel(arr)],
            }
            for name, arr in named_arrays
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            record = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid ({exc.msg})") from None
    if record.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(
            f"checkpoint {path} has format_version {record.get('format_version')}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    arrays: dict[str, np.ndarray] = {}
    for layer in record["layers"]:
        arr = np.asarray(layer["values"], dtype=np.float64).reshape(layer["shape"])
        check_finite(layer["name"], arr)
        arrays[layer["name"]] = arr
    return arrays, record.get("meta", {})


def restore_parameters(params, arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into live parameters by name, checking shapes."""
    for name, value, _ in params:
        if name not in arrays:
            raise DataError(f"checkpoint missing parameter {name}")
        if arrays[name].shape != value.shape:
            raise DataError(
                f"parameter {name}: checkpoint shape {arrays[name].shape} "
                f"!= model shape {value.shape}"
            )
        value[...] = arrays[name]

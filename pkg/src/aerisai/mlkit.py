"""Small numpy training stack: MLP, softmax cross-entropy, Adam, datasets."""

from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

MNIST_DIMS = (784, 128, 64, 10)
SYNTHETIC_DIMS = (16, 32, 16, 4)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class MlkitError(ValueError):
    pass


class DatasetFormatError(MlkitError):
    pass


# -- model -------------------------------------------------------------------


def param_count(layer_dims: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


@dataclass(frozen=True)
class MlpModel:
    """ReLU MLP whose weights and biases live in one flat float64 vector.

    Layout per layer: W (d_in x d_out, row-major) followed by b (d_out).
    """

    layer_dims: tuple[int, ...]
    params: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or min(dims) < 1:
            raise MlkitError(f"bad layer dims {dims}")
        p = np.asarray(self.params, dtype=np.float64)
        if p.shape != (param_count(dims),):
            raise MlkitError(f"expected {param_count(dims)} parameters, got shape {p.shape}")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "params", p)

    @classmethod
    def init(cls, layer_dims: Sequence[int], seed: int) -> "MlpModel":
        """He-normal weights, zero biases."""
        rng = np.random.default_rng(seed)
        layers = []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            W = rng.standard_normal((d_in, d_out)) * np.sqrt(2.0 / d_in)
            layers.append((W, np.zeros(d_out)))
        return cls(tuple(layer_dims), flatten(layers))

    @classmethod
    def zeros(cls, layer_dims: Sequence[int]) -> "MlpModel":
        return cls(tuple(layer_dims), np.zeros(param_count(layer_dims)))

    @property
    def n_params(self) -> int:
        return self.params.size

    def with_params(self, params: np.ndarray) -> "MlpModel":
        return replace(self, params=np.array(params, dtype=np.float64))

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return unflatten(self.layer_dims, self.params)


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for W, b in layers:
        parts.append(np.asarray(W, dtype=np.float64).ravel())
        parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts)


def unflatten(layer_dims: Sequence[int], params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views into ``params``; writes through."""
    if params.size != param_count(layer_dims):
        raise MlkitError("parameter vector does not match layer dims")
    out, off = [], 0
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        W = params[off : off + d_in * d_out].reshape(d_in, d_out)
        off += d_in * d_out
        b = params[off : off + d_out]
        off += d_out
        out.append((W, b))
    return out


def _check_features(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.layer_dims[0]:
        raise MlkitError(f"features of shape {X.shape} do not fit input width {model.layer_dims[0]}")
    return X


def forward(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Logits for a batch."""
    h = _check_features(model, X)
    layers = model.layers()
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(model: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the flat parameters."""
    X = _check_features(model, X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],) or X.shape[0] == 0:
        raise MlkitError("labels do not match batch")
    n_out = model.layer_dims[-1]
    if y.min() < 0 or y.max() >= n_out:
        raise MlkitError("label out of range")
    layers = model.layers()
    acts = [X]
    h = X
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    B = X.shape[0]
    logp = _log_softmax(acts[-1])
    loss = float(-logp[np.arange(B), y].mean())

    grad = np.empty_like(model.params)
    grad_layers = unflatten(model.layer_dims, grad)
    dz = np.exp(logp)
    dz[np.arange(B), y] -= 1.0
    dz /= B
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = grad_layers[i]
        gW[...] = acts[i].T @ dz
        gb[...] = dz.sum(axis=0)
        if i:
            dz = (dz @ layers[i][0].T) * (acts[i] > 0)
    return loss, grad


def mean_loss(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    logp = _log_softmax(forward(model, X))
    y = np.asarray(y, dtype=np.int64)
    return float(-logp[np.arange(len(y)), y].mean())


# -- optimizer -----------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, dim: int, lr: float = 0.001) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim), 0, lr)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise MlkitError("Adam state, params and grad must share a shape")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, step=t)


# -- data ----------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise MlkitError("features and labels disagree in row count")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise MlkitError("label outside [0, n_classes)")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes)

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        return Dataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            max(p.n_classes for p in parts),
        )


def make_synthetic(
    n: int,
    dim: int,
    classes: int,
    seed: int,
    clusters_per_class: int = 6,
    spread: float = 1.0,
    separation: float = 1.2,
) -> Dataset:
    """Gaussian blobs: each class is a mixture of a few isotropic clusters.

    Cluster centres are drawn once from N(0, separation^2 I); samples add
    N(0, spread^2 I) around a uniformly chosen cluster of their class.
    Classes are balanced (sizes differ by at most one).
    """
    if n < 1 or dim < 1 or classes < 2:
        raise MlkitError("synthetic dataset needs n >= 1, dim >= 1, classes >= 2")
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((classes, clusters_per_class, dim)) * separation
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    which = rng.integers(0, clusters_per_class, size=n)
    X = centres[labels, which] + rng.standard_normal((n, dim)) * spread
    return Dataset(X, labels, classes)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_test = int(round(len(ds) * test_fraction))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def partition_indices(n: int, n_clients: int, seed: int) -> list[np.ndarray]:
    """Random equal split of range(n); sizes differ by at most one."""
    if n_clients < 1:
        raise MlkitError("need at least one client")
    if n < n_clients:
        raise MlkitError("fewer samples than clients")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, n_clients)]


def partition(ds: Dataset, n_clients: int, seed: int) -> list[Dataset]:
    return [ds.subset(idx) for idx in partition_indices(len(ds), n_clients, seed)]


def _open_maybe_gz(path: Path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def read_idx(path: str | os.PathLike, expected_magic: int) -> np.ndarray:
    """Parse an IDX file (optionally gzipped) of unsigned bytes."""
    path = Path(path)
    with _open_maybe_gz(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise DatasetFormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DatasetFormatError(f"{path}: magic {magic:#010x}, expected {expected_magic:#010x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DatasetFormatError(f"{path}: truncated header")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(shape))
    if len(raw) - header != count:
        raise DatasetFormatError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(shape)


def _find(path: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (path / name).exists():
            return path / name
    raise FileNotFoundError(f"{stem} not found under {path}")


def load_mnist(path: str | os.PathLike, split: str = "train") -> Dataset:
    """Load MNIST from the standard IDX files in directory ``path``."""
    prefix = {"train": "train", "test": "t10k"}.get(split)
    if prefix is None:
        raise MlkitError(f"unknown split {split!r}")
    path = Path(path)
    images = read_idx(_find(path, f"{prefix}-images-idx3-ubyte"), IDX_IMAGES_MAGIC)
    labels = read_idx(_find(path, f"{prefix}-labels-idx1-ubyte"), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError("image and label counts differ")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), 10)


def save_csv(ds: Dataset, path: str | os.PathLike) -> None:
    """Write ``label,x0,x1,...`` rows with full float precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"x{i}" for i in range(ds.dim)])
        for label, row in zip(ds.labels, ds.features):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv(path: str | os.PathLike, n_classes: int | None = None) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "label":
        raise DatasetFormatError(f"{path}: missing header")
    body = rows[1:]
    y = np.array([int(r[0]) for r in body], dtype=np.int64)
    X = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(len(body), len(rows[0]) - 1)
    return Dataset(X, y, n_classes if n_classes is not None else int(y.max()) + 1)


# -- training and evaluation ------------------------------------------------------


def train_epochs(
    model: MlpModel,
    ds: Dataset,
    epochs: int,
    adam: AdamState,
    seed: int,
    batch_size: int = 64,
) -> tuple[MlpModel, AdamState, list[float]]:
    """Mini-batch Adam for ``epochs`` passes; returns the model, optimizer and per-epoch mean loss."""
    if len(ds) == 0:
        raise MlkitError("cannot train on an empty dataset")
    if epochs < 0 or batch_size < 1:
        raise MlkitError("epochs must be >= 0 and batch_size >= 1")
    rng = np.random.default_rng(seed)
    params = model.params
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(ds))
        total = 0.0
        for start in range(0, len(ds), batch_size):
            idx = order[start : start + batch_size]
            loss, grad = loss_and_grad(model.with_params(params), ds.features[idx], ds.labels[idx])
            params, adam = adam_step(adam, params, grad)
            total += loss * len(idx)
        losses.append(total / len(ds))
    return model.with_params(params), adam, losses


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest class
    return np.argmax(forward(model, X), axis=1)


def evaluate(model: MlpModel, ds: Dataset) -> float:
    if len(ds) == 0:
        raise MlkitError("empty test set")
    return float(np.mean(predict(model, ds.features) == ds.labels))

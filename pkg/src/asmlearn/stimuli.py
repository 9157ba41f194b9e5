"""Labeled input distributions over the sensory area, plus MNIST IDX I/O."""
from __future__ import annotations

import gzip
import os
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import ConfigError

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
MNIST_ENV = "ASMLEARN_MNIST_DIR"
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class MnistFormatError(ValueError):
    pass


@dataclass(frozen=True)
class StimulusClass:
    """Core set of k sensory neurons; core fires w.p. r, the rest w.p. q*k/n."""
    core: np.ndarray
    r: float
    q: float
    n: int

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ConfigError(f"r must lie in (0, 1], got {self.r}")
        if not 0 <= self.q < 1:
            raise ConfigError(f"q must lie in [0, 1), got {self.q}")
        if self.r <= self.q:
            raise ConfigError(f"need r > q, got r={self.r}, q={self.q}")

    @property
    def k(self):
        return len(self.core)

    @property
    def off_core_prob(self):
        return self.q * self.k / self.n

    def to_dict(self):
        return {"core": [int(i) for i in self.core], "r": self.r, "q": self.q, "n": self.n}


def make_stimulus_class(k, n, r, q, rng, overlap_with: StimulusClass | None = None,
                        alpha: float = 0.0) -> StimulusClass:
    """Draw a core uniformly; optionally share exactly round(alpha*k) neurons with another core."""
    if not 0 < k <= n:
        raise ConfigError(f"need 0 < k <= n, got k={k}, n={n}")
    if overlap_with is None:
        core = rng.choice(n, size=k, replace=False)
        return StimulusClass(np.sort(core), r, q, n)
    shared = int(round(alpha * k))
    if alpha < 0 or shared > k or shared > len(overlap_with.core):
        raise ConfigError(f"infeasible overlap alpha={alpha} for k={k}")
    if n - len(overlap_with.core) < k - shared:
        raise ConfigError("not enough neurons outside the reference core")
    keep = rng.choice(overlap_with.core, size=shared, replace=False)
    outside = np.setdiff1d(np.arange(n), overlap_with.core)
    fresh = rng.choice(outside, size=k - shared, replace=False)
    return StimulusClass(np.sort(np.concatenate([keep, fresh])), r, q, n)


def make_stimulus_classes(count, k, n, r, q, rng, alpha=None):
    """``count`` classes; independent cores, or each sharing alpha*k with the first."""
    first = make_stimulus_class(k, n, r, q, rng)
    out = [first]
    for _ in range(count - 1):
        if alpha is None:
            out.append(make_stimulus_class(k, n, r, q, rng))
        else:
            out.append(make_stimulus_class(k, n, r, q, rng, overlap_with=first, alpha=alpha))
    return out


def sample_stimulus(cls: StimulusClass, rng, size=None) -> np.ndarray:
    """Binary activation vector(s) of length n, as float64."""
    shape = (cls.n,) if size is None else (size, cls.n)
    probs = np.full(cls.n, cls.off_core_prob)
    probs[cls.core] = cls.r
    return (rng.random(shape) < probs).astype(np.float64)


@dataclass(frozen=True)
class HalfspaceClass:
    """Positive: coordinate i on w.p. k/n + delta*v_i.  Negative: all at k/n."""
    v: np.ndarray
    delta: float
    n: int
    k: int
    allow_signed: bool = False

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != (self.n,):
            raise ConfigError(f"v must have length n={self.n}")
        if not np.isclose(np.linalg.norm(v), 1.0, rtol=0, atol=1e-9):
            raise ConfigError("v must have unit Euclidean norm")
        if not self.allow_signed and (v < 0).any():
            raise ConfigError("v must be nonnegative (pass allow_signed=True to override)")
        if self.delta < 0:
            raise ConfigError("margin must be nonnegative")
        lo = self.k / self.n + self.delta * v.min()
        hi = self.k / self.n + self.delta * v.max()
        if hi > 1 or lo < 0:
            raise ConfigError(f"positive-class firing probabilities leave [0, 1] (range {lo:.4g}..{hi:.4g})")

    def regime_warnings(self):
        """Messages when v falls outside the density regime the margin guarantee assumes."""
        l1 = float(np.abs(self.v).sum())
        msgs = []
        if l1 > np.sqrt(self.n) / 2:
            msgs.append(f"||v||_1 = {l1:.4g} exceeds sqrt(n)/2 = {np.sqrt(self.n) / 2:.4g}")
        if l1 < np.sqrt(self.k):
            msgs.append(f"||v||_1 = {l1:.4g} is small relative to k = {self.k}")
        return msgs

    def positive_probs(self):
        return self.k / self.n + self.delta * np.asarray(self.v, dtype=np.float64)

    def to_dict(self):
        return {"v": [float(x) for x in self.v], "delta": self.delta, "n": self.n, "k": self.k}


def make_halfspace_class(n, k, delta, support=None, rng=None, allow_signed=False, warn=True):
    """Halfspace with v uniform over ``support`` coordinates (default k of them).

    ``support`` may be an int (coordinates drawn with ``rng``) or an explicit
    index array.
    """
    if support is None:
        support = k
    if np.isscalar(support):
        if rng is None:
            idx = np.arange(int(support))
        else:
            idx = np.sort(rng.choice(n, size=int(support), replace=False))
    else:
        idx = np.asarray(support, dtype=np.int64)
    v = np.zeros(n)
    v[idx] = 1.0 / np.sqrt(len(idx))
    hs = HalfspaceClass(v, float(delta), n, k, allow_signed=allow_signed)
    if warn:
        for msg in hs.regime_warnings():
            warnings.warn(msg, stacklevel=2)
    return hs


def sample_halfspace(cls: HalfspaceClass, positive: bool, rng, size=None) -> np.ndarray:
    shape = (cls.n,) if size is None else (size, cls.n)
    probs = cls.positive_probs() if positive else np.full(cls.n, cls.k / cls.n)
    return (rng.random(shape) < probs).astype(np.float64)


# --- MNIST IDX -------------------------------------------------------------

def _open(path):
    path = Path(path)
    if not path.exists() and Path(str(path) + ".gz").exists():
        path = Path(str(path) + ".gz")
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path, limit=None):
    with _open(path) as f:
        header = f.read(16)
        if len(header) < 16:
            raise MnistFormatError(f"{path}: truncated header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IMAGE_MAGIC:
            raise MnistFormatError(f"{path}: bad magic {magic}, expected {IMAGE_MAGIC}")
        if (rows, cols) != (28, 28):
            raise MnistFormatError(f"{path}: images are {rows}x{cols}, expected 28x28")
        want = count if limit is None else min(count, int(limit))
        raw = f.read(want * rows * cols)
    if len(raw) != want * rows * cols:
        raise MnistFormatError(f"{path}: truncated pixel data ({len(raw)} bytes for {want} images)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(want, rows * cols), count


def read_idx_labels(path, limit=None):
    with _open(path) as f:
        header = f.read(8)
        if len(header) < 8:
            raise MnistFormatError(f"{path}: truncated header")
        magic, count = struct.unpack(">II", header)
        if magic != LABEL_MAGIC:
            raise MnistFormatError(f"{path}: bad magic {magic}, expected {LABEL_MAGIC}")
        want = count if limit is None else min(count, int(limit))
        raw = f.read(want)
    if len(raw) != want:
        raise MnistFormatError(f"{path}: truncated label data")
    labels = np.frombuffer(raw, dtype=np.uint8)
    if labels.size and labels.max() > 9:
        raise MnistFormatError(f"{path}: label out of range 0..9")
    return labels, count


def load_mnist(images_path, labels_path, limit=None, binarize=False):
    """Return (activations in [0, 1] as float64 of shape (count, 784), int labels).

    Pixels are divided by 255; ``binarize`` thresholds at 0.5 instead.
    """
    pixels, n_img = read_idx_images(images_path, limit)
    labels, n_lab = read_idx_labels(labels_path, limit)
    if n_img != n_lab:
        raise MnistFormatError(f"image count {n_img} != label count {n_lab}")
    x = pixels.astype(np.float64) / 255.0
    if binarize:
        x = (x >= 0.5).astype(np.float64)
    return x, labels.astype(np.int64)


def write_idx_images(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(-1, 784)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, pixels.shape[0], 28, 28))
        f.write(pixels.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def mnist_paths(data_dir=None, split="train"):
    data_dir = data_dir or os.environ.get(MNIST_ENV)
    if not data_dir:
        raise ConfigError(f"no MNIST directory given (flag or ${MNIST_ENV})")
    img, lab = MNIST_FILES[split]
    return Path(data_dir) / img, Path(data_dir) / lab


def stratified_limit(labels, limit, rng=None):
    """Indices of a class-balanced subset of at most ``limit`` examples, original order kept."""
    if limit is None or limit >= len(labels):
        return np.arange(len(labels))
    classes = np.unique(labels)
    per = int(limit) // len(classes)
    keep = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        keep.append(idx[:per] if rng is None else np.sort(rng.choice(idx, size=min(per, idx.size), replace=False)))
    return np.sort(np.concatenate(keep))

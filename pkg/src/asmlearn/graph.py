"""Random structure and sparse synaptic weights.

Weights are stored target-major: row ``i`` of the CSR arrays lists the
presynaptic sources of neuron ``i`` and the weight of each edge.  Synaptic
input is then a single sparse mat-vec.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

# Hard ceiling on expected edges per weight set (~2.4 GB at 12 bytes/edge).
MAX_EXPECTED_EDGES = 2 * 10**8
_ROW_CHUNK = 512


class ConfigError(ValueError):
    """Invalid model or experiment parameters."""


class SizingError(ConfigError):
    """Requested graph would not fit the edge budget."""


@dataclass(frozen=True)
class ModelConfig:
    n: int = 1000
    k: int = 100
    p: float = 0.1
    beta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n <= 0:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if int(self.k) != self.k or not 0 < self.k <= self.n:
            raise ConfigError(f"k must satisfy 0 < k <= n, got k={self.k}, n={self.n}")
        if not 0.0 < self.p < 1.0:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_dict(self):
        return {"n": int(self.n), "k": int(self.k), "p": float(self.p),
                "beta": float(self.beta), "seed": int(self.seed)}


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def make_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Return the generator for one named stream of a global seed.

    The seed and a hash of the label are mixed by ``SeedSequence``, so
    ``("graph", 1)`` and ``("stimuli", 1)`` are independent streams and both
    are stable across processes and platforms.
    """
    seed = int(seed)
    entropy = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *_label_words(stream_label)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, stream_label: str) -> int:
    """A 63-bit child seed, e.g. one per trial."""
    return int(make_rng(seed, stream_label).integers(0, 2**63 - 1))


class SparseWeights:
    """Nonnegative weights on a fixed edge set, shape (n_src, n_tgt).

    ``baseline[i]`` tracks what an edge into ``i`` that was never strengthened
    would weigh now: it starts at 1 and is divided by the same homeostatic
    normalizers as the real weights.
    """

    def __init__(self, n_src, n_tgt, indptr, indices, data=None):
        self.n_src = int(n_src)
        self.n_tgt = int(n_tgt)
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int32)
        if data is None:
            data = np.ones(indices.shape[0], dtype=np.float64)
        data = np.asarray(data, dtype=np.float64)
        if indptr.shape != (self.n_tgt + 1,) or indptr[-1] != indices.shape[0]:
            raise ValueError("inconsistent CSR structure")
        if data.shape != indices.shape:
            raise ValueError("one weight per edge required")
        self.matrix = sp.csr_matrix((data, indices, indptr), shape=(self.n_tgt, self.n_src))
        # csr_matrix may copy on dtype mismatch; always read arrays back from it.
        self.targets = np.repeat(np.arange(self.n_tgt, dtype=np.int32), np.diff(self.matrix.indptr))
        self.baseline = np.ones(self.n_tgt, dtype=np.float64)

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def data(self):
        return self.matrix.data

    @property
    def shape(self):
        return (self.n_src, self.n_tgt)

    @property
    def edge_count(self):
        return int(self.matrix.indices.shape[0])

    def incoming(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def in_degree(self):
        return np.diff(self.indptr)

    def incoming_sums(self):
        return np.bincount(self.targets, weights=self.data, minlength=self.n_tgt)

    def drive(self, activation):
        """Per-target weighted input for a source activation vector (or batch, one row each)."""
        activation = np.asarray(activation, dtype=np.float64)
        if activation.shape[-1] != self.n_src:
            raise ValueError(f"activation length {activation.shape[-1]} != source count {self.n_src}")
        if activation.ndim == 1:
            return self.matrix @ activation
        return np.asarray((self.matrix @ activation.T).T)

    def drive_from(self, sources):
        """Per-target input when exactly ``sources`` fire with unit activity."""
        x = np.zeros(self.n_src)
        x[np.asarray(sources, dtype=np.intp)] = 1.0
        return self.matrix @ x

    def weight(self, j, i):
        src, w = self.incoming(i)
        hit = np.flatnonzero(src == j)
        return float(w[hit[0]]) if hit.size else None

    def copy(self):
        out = SparseWeights(self.n_src, self.n_tgt, self.indptr.copy(), self.indices.copy(), self.data.copy())
        out.baseline = self.baseline.copy()
        return out

    def to_dense(self):
        """(n_src, n_tgt) dense array; for tests and tiny graphs."""
        return self.matrix.toarray().T

    @classmethod
    def from_edges(cls, n_src, n_tgt, edges, weights=None):
        """Build from (source, target) pairs; handy for hand-made toy graphs."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=np.float64)
        order = np.lexsort((edges[:, 0], edges[:, 1]))
        edges, w = edges[order], w[order]
        indptr = np.zeros(n_tgt + 1, dtype=np.int64)
        np.add.at(indptr, edges[:, 1] + 1, 1)
        return cls(n_src, n_tgt, np.cumsum(indptr), edges[:, 0], w)


@dataclass
class Fiber:
    """Afferent projection from a source population into an area."""
    weights: SparseWeights

    @property
    def n_src(self):
        return self.weights.n_src

    @property
    def n_tgt(self):
        return self.weights.n_tgt


@dataclass
class Area:
    n: int
    k: int
    recurrent: SparseWeights
    firing: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    inhibited: bool = False
    ever_fired: np.ndarray = None

    def __post_init__(self):
        if self.ever_fired is None:
            self.ever_fired = np.zeros(self.n, dtype=bool)
        if self.recurrent.shape != (self.n, self.n):
            raise ValueError("recurrent weights must be n x n")


def _check_budget(n_src, n_tgt, p):
    expected = float(n_src) * float(n_tgt) * p
    if expected > MAX_EXPECTED_EDGES:
        raise SizingError(
            f"{n_src}x{n_tgt} graph at p={p} expects {expected:.3g} edges, "
            f"budget is {MAX_EXPECTED_EDGES:.3g}")


def _sample_bipartite(n_src, n_tgt, p, rng, no_self_loops):
    if not 0.0 < p < 1.0:
        raise ConfigError(f"connection probability must lie in (0, 1), got {p}")
    _check_budget(n_src, n_tgt, p)
    counts = np.zeros(n_tgt, dtype=np.int64)
    chunks = []
    for lo in range(0, n_tgt, _ROW_CHUNK):
        hi = min(lo + _ROW_CHUNK, n_tgt)
        mask = rng.random((hi - lo, n_src)) < p
        if no_self_loops:
            rows = np.arange(lo, hi)
            ok = rows < n_src
            mask[rows[ok] - lo, rows[ok]] = False
        counts[lo:hi] = mask.sum(axis=1)
        chunks.append(np.nonzero(mask)[1].astype(np.int32))
    indptr = np.concatenate([[0], np.cumsum(counts)])
    indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int32)
    return SparseWeights(n_src, n_tgt, indptr, indices)


def sample_recurrent_graph(config: ModelConfig, rng, n=None) -> SparseWeights:
    """G(n, p) digraph without self-loops, all weights 1."""
    n = config.n if n is None else n
    return _sample_bipartite(n, n, config.p, rng, no_self_loops=True)


def sample_fiber(n_src, n_tgt, p, rng) -> Fiber:
    return Fiber(_sample_bipartite(n_src, n_tgt, p, rng, no_self_loops=False))


def make_area(config: ModelConfig, rng, n=None, k=None) -> Area:
    n = config.n if n is None else n
    k = config.k if k is None else k
    return Area(n=n, k=k, recurrent=sample_recurrent_graph(config, rng, n=n))


def renormalize_incoming(*weight_sets: SparseWeights) -> None:
    """Scale every neuron's incoming weights (summed across all sets) to 1.

    Neurons whose total incoming weight is 0 are left alone.
    """
    if not weight_sets:
        return
    n_tgt = weight_sets[0].n_tgt
    if any(w.n_tgt != n_tgt for w in weight_sets):
        raise ValueError("weight sets must share a target area")
    total = np.zeros(n_tgt)
    for w in weight_sets:
        total += w.incoming_sums()
    scale = np.where(total > 0, total, 1.0)
    for w in weight_sets:
        w.data[:] = w.data / scale[w.targets]
        w.baseline[:] = w.baseline / scale

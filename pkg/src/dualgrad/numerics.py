"""Deterministic numeric substrate: RNG, matrix-vector product, z-scoring.

All arrays are 64-bit floats.  Vectors are 1-D ``ndarray``s, matrices are
2-D row-major ``ndarray``s of shape (rows, cols).

Randomness comes from NumPy's PCG64 bit generator (O'Neill's permuted
congruential generator, 128-bit state, XSL-RR output), seeded through
``SeedSequence``.  A given ``(seed, stream)`` pair therefore yields the
same sequence on every platform and every run.  Independent streams are
derived from one user seed as ``SeedSequence(seed, spawn_key=(stream,))``,
i.e. child state = hash(parent seed, stream index); streams never share
state and may be consumed concurrently.
"""

from dataclasses import dataclass

import numpy as np


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def assert_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")


class Rng:
    """One deterministic random stream.

    ``Rng(seed)`` is the root stream; ``Rng(seed, stream=k)`` (or
    ``rng.spawn(k)``) is an independent child stream derived by hashing
    (seed, k).  Instances are not safe to share between concurrent users;
    spawn a child per user instead.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))
        )

    def spawn(self, stream: int) -> "Rng":
        return Rng(self.seed, stream)

    def normal(self, mean: float, std: float, n) -> np.ndarray:
        if std < 0:
            raise ValueError(f"std must be >= 0, got {std}")
        return self._gen.normal(mean, std, size=n)

    def uniform(self, lo: float, hi: float, size) -> np.ndarray:
        return self._gen.uniform(lo, hi, size=size)

    def integers(self, n: int) -> int:
        return int(self._gen.integers(n))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"


@dataclass
class NormStats:
    """Per-feature z-score statistics.  ``stds`` entries are always > 0:
    zero-variance features are recorded with std 1 so they pass through
    centered instead of dividing by zero."""

    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def identity(cls, n_features: int) -> "NormStats":
        return cls(means=np.zeros(n_features), stds=np.ones(n_features))


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-by-row dot product: result[i] = sum_j m[i, j] * v[j]."""
    m = as_matrix(m, "m")
    v = as_vector(v, "v")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec dimension mismatch: matrix is {m.shape}, vector has length {v.shape[0]}")
    return m @ v


def gauss_sample(rng: Rng, mean: float, std: float, n) -> np.ndarray:
    """n i.i.d. normal draws; advances rng deterministically.  std=0 gives
    the degenerate constant sample."""
    return rng.normal(mean, std, n)


def zscore_fit(x: np.ndarray) -> NormStats:
    """Per-column mean and population standard deviation (ddof=0)."""
    x = as_matrix(x, "x")
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 rows to fit z-score stats, got {x.shape[0]}")
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds = np.where(stds == 0.0, 1.0, stds)
    return NormStats(means=means, stds=stds)


def zscore_apply(stats: NormStats, x: np.ndarray) -> np.ndarray:
    x = as_matrix(x, "x")
    if stats.means.shape[0] != x.shape[1]:
        raise ValueError(
            f"z-score stats cover {stats.means.shape[0]} features but matrix has {x.shape[1]} columns"
        )
    return (x - stats.means) / stats.stds

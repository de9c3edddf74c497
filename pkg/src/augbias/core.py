"""Shared numeric primitives: float64 arrays, seeded streams, labeled datasets.

Everything downstream works on plain numpy float64 arrays. The helpers here
pin the conventions (dtype, finiteness checks, simplex tolerance, stream
derivation) in one place rather than wrap numpy wholesale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Label rows must sum to 1 within this tolerance to count as simplex points.
SIMPLEX_ATOL = 1e-9

ORIGINAL = "original"
AUGMENTED = "augmented"


class DegenerateEstimateError(RuntimeError):
    """An estimator was asked for a value its inputs cannot support."""


def as_vec(x, size: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite float64 1-d array, optionally checking its length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_mat(a, shape: tuple[int, int] | None = None, name: str = "a") -> np.ndarray:
    """Coerce to a finite float64 2-d array, optionally checking its shape."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {m.shape}")
    if shape is not None and m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def matvec(a, x) -> np.ndarray:
    """Matrix-vector product with explicit dimension validation."""
    m = as_mat(a, name="a")
    v = as_vec(x, name="x")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: ({m.shape[0]}x{m.shape[1]}) @ ({v.shape[0]},)")
    return m @ v


def softmax(scores) -> np.ndarray:
    """Softmax of a score vector, computed with max-subtraction.

    Shift invariance holds to rounding: softmax(v + c) == softmax(v).
    """
    s = as_vec(scores, name="scores")
    if s.shape[0] < 2:
        raise ValueError("softmax needs at least 2 classes")
    shifted = s - np.max(s)
    e = np.exp(shifted)
    return e / np.sum(e)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of an (n, K) score matrix."""
    s = np.asarray(scores, dtype=np.float64)
    shifted = s - np.max(s, axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=1, keepdims=True)


class Rng:
    """Counter-based generator; (seed, stream) pins the sample stream exactly.

    Independent streams for one experiment come from the same seed with
    distinct stream ids, so parallel sweeps stay reproducible without any
    shared mutable state.
    """

    __slots__ = ("seed", "stream", "gen")

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        stream = int(stream)
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be nonnegative")
        self.seed = seed
        self.stream = stream
        key = np.array([seed, stream], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def derive(self, stream: int) -> "Rng":
        """Fresh independent stream under the same seed."""
        return Rng(self.seed, stream)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


def sample_beta(alpha: float, rng: Rng) -> float:
    """One draw from Beta(alpha, alpha); alpha=1 is Uniform[0,1]."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return float(rng.gen.beta(alpha, alpha))


def sample_dirichlet(alpha: float, k: int, rng: Rng) -> np.ndarray:
    """One draw from Dirichlet(alpha, ..., alpha) on the k-simplex."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if k < 2:
        raise ValueError("k must be at least 2")
    return rng.gen.dirichlet(np.full(k, float(alpha)))


def _validate_labels(labels: np.ndarray) -> None:
    sums = labels.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_ATOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"label rows must sum to 1 within {SIMPLEX_ATOL}, worst error {worst:g}")
    if np.any(labels < -SIMPLEX_ATOL):
        raise ValueError("label rows must be nonnegative")


@dataclass(frozen=True)
class LabeledSet:
    """Inputs paired with simplex label rows, tagged original or augmented."""

    inputs: np.ndarray
    labels: np.ndarray
    provenance: str

    def __post_init__(self):
        x = as_mat(self.inputs, name="inputs")
        y = as_mat(self.labels, name="labels")
        if x.shape[0] != y.shape[0]:
            raise ValueError("inputs and labels must have the same number of rows")
        if x.shape[0] < 1:
            raise ValueError("need at least one example")
        if y.shape[1] < 2:
            raise ValueError("need at least 2 classes")
        if self.provenance not in (ORIGINAL, AUGMENTED):
            raise ValueError(f"provenance must be '{ORIGINAL}' or '{AUGMENTED}'")
        _validate_labels(y)
        x = x.copy()
        y = y.copy()
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def k(self) -> int:
        return self.labels.shape[1]

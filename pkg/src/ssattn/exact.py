"""Reference quadratic-cost softmax attention."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matcore import as_dense, softmax_rows_inplace


@dataclass(frozen=True)
class AttentionProblem:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    d_k: int

    def __post_init__(self):
        q = as_dense(self.q, "q")
        k = as_dense(self.k, "k")
        v = as_dense(self.v, "v")
        if q.shape[1] != k.shape[1]:
            raise ValueError(f"q and k must share the key dimension, got {q.shape[1]} and {k.shape[1]}")
        if not (q.shape[0] == k.shape[0] == v.shape[0]):
            raise ValueError(f"q, k, v row counts differ: {q.shape[0]}, {k.shape[0]}, {v.shape[0]}")
        if self.d_k < 1:
            raise ValueError("d_k must be >= 1")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_arrays(cls, q, k, v) -> "AttentionProblem":
        q = as_dense(q, "q")
        return cls(q, k, v, q.shape[1])

    @classmethod
    def random(cls, n: int, d: int, seed: int, d_v: int | None = None) -> "AttentionProblem":
        """Standard-normal Q, K, V drawn in that order from ``numpy.random.default_rng(seed)`` (PCG64)."""
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((n, d))
        k = rng.standard_normal((n, d))
        v = rng.standard_normal((n, d if d_v is None else d_v))
        return cls(q, k, v, d)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.d_k)


def scaled_softmax(a: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    """``row_softmax(scale * a @ b.T)`` with a single n-by-m buffer."""
    logits = a @ b.T
    logits *= scale
    return softmax_rows_inplace(logits)


def scores_from_logits(logits) -> np.ndarray:
    return softmax_rows_inplace(as_dense(logits, "logits").copy())


def exact_scores(p: AttentionProblem) -> np.ndarray:
    return scaled_softmax(p.q, p.k, p.scale)


def exact_attention(p: AttentionProblem) -> np.ndarray:
    return exact_scores(p) @ p.v

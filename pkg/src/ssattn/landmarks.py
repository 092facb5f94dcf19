"""Segment-means landmarks: contiguous average pooling of token rows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matcore import as_dense


@dataclass(frozen=True)
class LandmarkPair:
    q_tilde: np.ndarray
    k_tilde: np.ndarray
    m: int
    l: int


def pad_to_multiple(x, m: int) -> tuple[np.ndarray, int]:
    """Append zero rows until the row count is a multiple of ``m``.

    Returns the (possibly unchanged) matrix and the original row count.
    """
    if m < 1:
        raise ValueError(f"landmark count must be >= 1, got {m}")
    a = as_dense(x)
    n = a.shape[0]
    extra = (-n) % m
    if extra:
        a = np.vstack([a, np.zeros((extra, a.shape[1]))])
    return a, n


def segment_means(x, m: int, literal: bool = False) -> np.ndarray:
    """Average each of ``m`` contiguous row segments of ``x``.

    ``x`` must already have a row count divisible by ``m`` (see
    :func:`pad_to_multiple`). Segment ``j`` covers rows ``j*l .. (j+1)*l - 1``
    with ``l = n // m``.

    ``literal=True`` evaluates the printed index range instead: rows
    ``j*l .. j*l + m - 1`` divided by ``m``. It only exists for comparison
    and is undefined (raises) when ``m > l``.
    """
    a = as_dense(x)
    n, d = a.shape
    if m < 1:
        raise ValueError(f"landmark count must be >= 1, got {m}")
    if m > n:
        raise ValueError(f"landmark count {m} exceeds sequence length {n}; reduce m to at most {n}")
    if n % m:
        raise ValueError(f"sequence length {n} is not divisible by m={m}; pad first")
    l = n // m
    if not literal:
        if l == 1:
            return a.copy()
        return a.reshape(m, l, d).mean(axis=1)
    if m > l:
        raise ValueError(f"literal segment range needs m <= l, got m={m}, l={l}")
    starts = np.arange(m) * l
    idx = starts[:, None] + np.arange(m)[None, :]
    return a[idx].sum(axis=1) / m


def make_landmarks(q, k, m: int) -> LandmarkPair:
    q = as_dense(q, "q")
    k = as_dense(k, "k")
    if q.shape[0] != k.shape[0]:
        raise ValueError(f"q and k row counts differ: {q.shape[0]} vs {k.shape[0]}")
    return LandmarkPair(segment_means(q, m), segment_means(k, m), m, q.shape[0] // m)

"""Nyström baselines: explicit column form and the landmark three-softmax form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exact import AttentionProblem, scaled_softmax
from .landmarks import pad_to_multiple, segment_means
from .matcore import PinvResult, as_dense, pinv_iterative, pinv_svd

PINV_MODES = ("svd", "iterative")


class AllocationAudit:
    """Records the area (scalar count) of each temporary an attention
    pipeline creates, and the peak simultaneously-live area."""

    def __init__(self):
        self.sizes: dict[str, int] = {}
        self._live: dict[str, int] = {}
        self.peak = 0

    def alloc(self, name: str, arr: np.ndarray) -> np.ndarray:
        self.sizes[name] = arr.size
        self._live[name] = arr.size
        self.peak = max(self.peak, sum(self._live.values()))
        return arr

    def free(self, *names: str) -> None:
        for name in names:
            self._live.pop(name, None)

    @property
    def largest(self) -> int:
        return max(self.sizes.values(), default=0)


class _NullAudit(AllocationAudit):
    def alloc(self, name, arr):
        return arr

    def free(self, *names):
        pass


@dataclass
class LandmarkKernels:
    """The three softmax blocks of landmark attention on a (padded) problem.

    ``f`` is n-by-m (queries vs key landmarks), ``a_s`` m-by-m, ``b`` m-by-n.
    """

    f: np.ndarray
    a_s: np.ndarray
    b: np.ndarray
    v: np.ndarray
    n_orig: int
    padded: bool
    audit: AllocationAudit = field(default_factory=_NullAudit)


def landmark_kernels(p: AttentionProblem, m: int, audit: AllocationAudit | None = None) -> LandmarkKernels:
    audit = audit or _NullAudit()
    if m < 1:
        raise ValueError(f"landmark count must be >= 1, got {m}")
    if m > p.n:
        raise ValueError(f"landmark count {m} exceeds sequence length {p.n}; reduce m to at most {p.n}")
    q, k, v = p.q, p.k, p.v
    padded = p.n % m != 0
    if padded:
        q, _ = pad_to_multiple(q, m)
        k, _ = pad_to_multiple(k, m)
        v, _ = pad_to_multiple(v, m)
    q_t = audit.alloc("q_tilde", segment_means(q, m))
    k_t = audit.alloc("k_tilde", segment_means(k, m))
    f = audit.alloc("f", scaled_softmax(q, k_t, p.scale))
    a_s = audit.alloc("a_s", scaled_softmax(q_t, k_t, p.scale))
    b = audit.alloc("b", scaled_softmax(q_t, k, p.scale))
    audit.free("q_tilde", "k_tilde")
    return LandmarkKernels(f, a_s, b, v, p.n, padded, audit)


def pseudoinverse(a: np.ndarray, mode: str, iters: int = 30, tol: float = 1e-10, verify: bool = False) -> PinvResult:
    if mode == "svd":
        return PinvResult(pinv_svd(a), 0, 0.0, True)
    if mode == "iterative":
        return pinv_iterative(a, max_iters=iters, tol=tol, verify=verify)
    raise ValueError(f"unknown pinv mode {mode!r}; expected one of {PINV_MODES}")


def nystrom_raw(s, cols) -> np.ndarray:
    """``C A^+ R`` from the selected columns/rows of an explicit square matrix."""
    s = as_dense(s, "s")
    n = s.shape[0]
    if s.shape[1] != n:
        raise ValueError(f"nystrom_raw needs a square matrix, got {s.shape}")
    cols = np.asarray(cols, dtype=np.intp).ravel()
    if cols.size == 0:
        raise ValueError("at least one column index is required")
    if np.unique(cols).size != cols.size:
        raise ValueError(f"duplicate column indices in {cols.tolist()}")
    if cols.min() < 0 or cols.max() >= n:
        raise ValueError(f"column indices must lie in [0, {n})")
    c = s[:, cols]
    r = s[cols, :]
    return c @ pinv_svd(s[np.ix_(cols, cols)]) @ r


def nystrom_state(
    p: AttentionProblem,
    m: int,
    pinv_mode: str = "svd",
    pinv_iters: int = 30,
    verify: bool = False,
    audit: AllocationAudit | None = None,
) -> tuple[LandmarkKernels, PinvResult]:
    kern = landmark_kernels(p, m, audit)
    return kern, pseudoinverse(kern.a_s, pinv_mode, pinv_iters, verify=verify)


def nystrom_attention(
    p: AttentionProblem,
    m: int,
    pinv_mode: str = "svd",
    pinv_iters: int = 30,
    audit: AllocationAudit | None = None,
    state: tuple[LandmarkKernels, PinvResult] | None = None,
) -> np.ndarray:
    """Landmark Nyström attention output, evaluated right to left so no
    n-by-n matrix is formed."""
    kern, pinv = state or nystrom_state(p, m, pinv_mode, pinv_iters, audit=audit)
    out = kern.f @ (pinv.z @ (kern.b @ kern.v))
    return out[: kern.n_orig]


def nystrom_attention_materialized(
    p: AttentionProblem,
    m: int,
    pinv_mode: str = "svd",
    pinv_iters: int = 30,
    state: tuple[LandmarkKernels, PinvResult] | None = None,
) -> np.ndarray:
    kern, pinv = state or nystrom_state(p, m, pinv_mode, pinv_iters)
    s_hat = kern.f @ pinv.z @ kern.b
    n = kern.n_orig
    return s_hat[:n, :n]

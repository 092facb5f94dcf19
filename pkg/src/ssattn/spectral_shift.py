"""Spectral shifting on explicit matrices.

The approximation of a symmetric ``K`` is ``C U C^T + delta I`` where ``C``
gathers columns of ``K`` (or of ``K - shift I``). Two closed forms are
provided: the full one, fitted against all of ``K`` at O(n^2 c) cost, and
the sketched one, fitted only against the c-by-c intersection block.
Both fits minimise a Frobenius residual.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .matcore import as_dense, is_symmetric, numerical_rank, pinv_svd, svd_factors
from .nystrom import nystrom_raw

RANK_TOL = 1e-10


@dataclass
class SSFactors:
    u_ss: np.ndarray
    delta_ss: float
    a_s: np.ndarray
    rank_a: int
    shift: float = 0.0
    full_rank_convention: bool = False
    flags: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ColumnSelection:
    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("column selection is empty")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate column indices in {list(idx)}")
        if min(idx) < 0 or max(idx) >= self.n:
            raise ValueError(f"column indices must lie in [0, {self.n})")
        object.__setattr__(self, "indices", idx)

    @property
    def c(self) -> int:
        return len(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)


@dataclass(frozen=True)
class FlatTailSpec:
    """Eigenvalues ``head_eigs`` (all > theta) followed by ``n - k`` copies of theta."""

    n: int
    theta: float
    head_eigs: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        head = tuple(float(h) for h in self.head_eigs)
        object.__setattr__(self, "head_eigs", head)
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if len(head) > self.n:
            raise ValueError(f"head rank {len(head)} exceeds n={self.n}")
        low = [h for h in head if not h > self.theta]
        if low:
            raise ValueError(f"head eigenvalues must be strictly greater than theta={self.theta}; got {low}")

    @property
    def k(self) -> int:
        return len(self.head_eigs)

    @classmethod
    def random(cls, n: int, k: int, theta: float, seed: int, top: float = 10.0) -> "FlatTailSpec":
        """Head eigenvalues drawn uniformly from ``(theta, top]``."""
        rng = np.random.default_rng(seed)
        head = np.sort(rng.uniform(theta, top, size=k))[::-1]
        head = np.where(head <= theta, top, head)
        return cls(n, theta, tuple(head), seed)


def _shifted_columns(k_mat: np.ndarray, sel: ColumnSelection, shift: float) -> np.ndarray:
    c_mat = k_mat[:, sel.array].copy()
    if shift:
        c_mat[sel.array, np.arange(sel.c)] -= shift
    return c_mat


def ss_factors_full(k_mat, sel: ColumnSelection, shift_delta: float | None = None) -> SSFactors:
    """Closed-form minimiser of ``||K - C U C^T - delta I||_F`` over (U, delta).

    ``C`` holds the selected columns of ``K - shift_delta I``. Ranks and
    pseudoinverses use an absolute cutoff of ``1e-10 ||K||_2`` so that a
    shifted-away flat tail registers as exactly zero.
    """
    k_mat = as_dense(k_mat, "k_mat")
    n = k_mat.shape[0]
    if k_mat.shape[1] != n or not is_symmetric(k_mat):
        raise ValueError("ss_factors_full needs a symmetric square matrix")
    if sel.n != n:
        raise ValueError(f"selection is over {sel.n} columns but K is {n}x{n}")
    shift = float(shift_delta or 0.0)
    c_mat = _shifted_columns(k_mat, sel, shift)
    atol = RANK_TOL * np.linalg.norm(k_mat, 2)
    c_pinv = pinv_svd(c_mat, atol=atol)
    rank = numerical_rank(c_mat, atol=atol)
    proj = c_pinv @ k_mat
    flags = []
    if rank >= n:
        delta = 0.0
        flags.append("full_rank_convention")
    else:
        delta = (np.trace(k_mat) - np.trace(proj @ c_mat)) / (n - rank)
    # (C^T C)^+ = C^+ C^+^T; forming C^T C would square the rank cutoff
    u_ss = proj @ c_pinv.T - delta * (c_pinv @ c_pinv.T)
    a_s = c_mat[sel.array, :]
    return SSFactors(u_ss, float(delta), a_s, rank, shift, rank >= n, flags)


def ss_factors_modified(a_s) -> SSFactors:
    """Sketched closed form, computed from the c-by-c intersection block alone::

        delta = (tr(A) - tr(A^+ A^2)) / (c - rank(A))
        U     = A^+ - delta (A^2)^+

    A full-rank block makes delta 0/0; it is then set to 0 and U = A^+.
    The numerator vanishes for every square A (tr(A^+ A A) = tr(A)), so
    delta is zero up to rounding whenever the formula is defined.
    """
    a = as_dense(a_s, "a_s")
    c = a.shape[0]
    if a.shape[1] != c:
        raise ValueError(f"a_s must be square, got {a.shape}")
    factors = svd_factors(a)
    a_pinv = factors.pinv()
    rank = factors.rank(RANK_TOL)
    if rank == c or rank == 0:
        flags = ["full_rank_convention"] if rank == c else []
        return SSFactors(a_pinv, 0.0, a, rank, 0.0, rank == c, flags)
    a2 = a @ a
    delta = float((np.trace(a) - np.trace(a_pinv @ a2)) / (c - rank))
    u_ss = a_pinv - delta * pinv_svd(a2)
    return SSFactors(u_ss, delta, a, rank)


def ss_reconstruct(c_mat, f: SSFactors, n: int) -> np.ndarray:
    c_mat = as_dense(c_mat, "c_mat")
    if c_mat.shape[0] != n or c_mat.shape[1] != f.u_ss.shape[0]:
        raise ValueError(f"C has shape {c_mat.shape}; expected ({n}, {f.u_ss.shape[0]})")
    out = c_mat @ f.u_ss @ c_mat.T
    out[np.diag_indices(n)] += f.delta_ss
    return out


def ss_objective(k_mat, sel: ColumnSelection, f: SSFactors, mode: str = "full") -> float:
    """Frobenius norm of ``K - C U C^T - delta I`` (``full``) or of its
    ``P^T (.) P`` sketch (``sketched``)."""
    k_mat = as_dense(k_mat, "k_mat")
    n = k_mat.shape[0]
    c_mat = _shifted_columns(k_mat, sel, f.shift)
    if mode == "full":
        resid = k_mat - ss_reconstruct(c_mat, f, n)
    elif mode == "sketched":
        idx = sel.array
        c_sk = c_mat[idx, :]
        resid = k_mat[np.ix_(idx, idx)] - c_sk @ f.u_ss @ c_sk.T
        resid[np.diag_indices(sel.c)] -= f.delta_ss
    else:
        raise ValueError(f"unknown objective mode {mode!r}")
    return float(np.linalg.norm(resid))


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def flat_tail_spsd(spec: FlatTailSpec) -> np.ndarray:
    eigs = np.concatenate([np.asarray(spec.head_eigs, dtype=float), np.full(spec.n - spec.k, spec.theta)])
    if spec.k == 0:
        return spec.theta * np.eye(spec.n)
    v = random_orthogonal(spec.n, np.random.default_rng(spec.seed))
    k_mat = (v * eigs) @ v.T
    return 0.5 * (k_mat + k_mat.T)


def pivoted_columns(mat: np.ndarray, c: int) -> ColumnSelection:
    """First ``c`` pivots of a column-pivoted QR, i.e. greedy largest-residual columns."""
    _, _, piv = scipy.linalg.qr(mat, mode="economic", pivoting=True)
    return ColumnSelection(tuple(piv[:c]), mat.shape[1])


@dataclass
class FlatTailReport:
    n: int
    k: int
    c: int
    theta: float
    columns: list[int]
    k_fro: float
    ss_error: float
    nystrom_error: float
    ss_relative_error: float
    delta_ss: float
    ss_not_worse: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def flat_tail_check(spec: FlatTailSpec, c: int) -> FlatTailReport:
    """Compare shifted spectral-shifting and plain Nyström on one flat-tail matrix.

    Columns are the first ``c`` pivots of ``K - theta I``, which span its
    rank-k range whenever ``c >= k``.
    """
    if c < spec.k:
        raise ValueError(f"need c >= k columns, got c={c}, k={spec.k}")
    if c < 1 or c > spec.n:
        raise ValueError(f"c must lie in [1, {spec.n}], got {c}")
    k_mat = flat_tail_spsd(spec)
    shifted = k_mat - spec.theta * np.eye(spec.n)
    sel = pivoted_columns(shifted, c)
    f = ss_factors_full(k_mat, sel, shift_delta=spec.theta)
    ss_err = ss_objective(k_mat, sel, f, "full")
    nys_err = float(np.linalg.norm(k_mat - nystrom_raw(k_mat, sel.array)))
    k_fro = float(np.linalg.norm(k_mat))
    return FlatTailReport(
        n=spec.n,
        k=spec.k,
        c=c,
        theta=spec.theta,
        columns=list(sel.indices),
        k_fro=k_fro,
        ss_error=ss_err,
        nystrom_error=nys_err,
        ss_relative_error=ss_err / k_fro,
        delta_ss=f.delta_ss,
        ss_not_worse=ss_err <= nys_err,
    )

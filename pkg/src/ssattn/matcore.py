"""Dense-matrix primitives shared by every attention approximation.

Matrices are plain 2-D ``float64`` numpy arrays. :func:`as_dense` is the
single validation gate; everything else assumes its output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_KINDS = ("frobenius", "inf_induced", "spectral")


class NumericalError(RuntimeError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, iteration: int, residual: float):
        self.iteration = iteration
        self.residual = residual
        super().__init__(
            f"pseudoinverse iteration diverged at step {iteration}: "
            f"residual {residual:.3e} grew for 3 consecutive steps or overflowed"
        )


def as_dense(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a finite, non-empty 2-D float64 array.

    Raises ``ValueError`` naming the first non-finite entry, if any.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column, got {a.shape}")
    bad = ~np.isfinite(a)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"{name} has non-finite entry {a[i, j]!r} at ({i}, {j})")
    return a


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt


    def rank(self, tol: float = 1e-10) -> int:
        if not self.sigma.size or self.sigma[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.sigma > tol * self.sigma[0]))

    def pinv(self, tol: float = 1e-12) -> np.ndarray:
        keep = self.sigma > _cutoff(self.sigma, tol, None)
        if not keep.any():
            return np.zeros((self.vt.shape[1], self.u.shape[0]))
        return (self.vt[keep].T / self.sigma[keep]) @ self.u[:, keep].T


def svd_factors(m) -> SvdFactors:
    a = as_dense(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdFactors(u, s, vt)


def softmax_rows_inplace(a: np.ndarray) -> np.ndarray:
    """Row softmax that overwrites ``a``; no finiteness check."""
    a -= a.max(axis=1, keepdims=True)
    np.exp(a, out=a)
    a /= a.sum(axis=1, keepdims=True)
    return a


def row_softmax(m) -> np.ndarray:
    a = as_dense(m).copy()
    return softmax_rows_inplace(a)


def _cutoff(s: np.ndarray, tol: float, atol: float | None) -> float:
    if atol is not None:
        return atol
    return tol * (s[0] if s.size else 0.0)


def pinv_svd(m, tol: float = 1e-12, atol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``tol * sigma_max`` are treated as zero;
    ``atol`` replaces the relative cutoff with an absolute one.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = as_dense(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > _cutoff(s, tol, atol)
    if not keep.any():
        return np.zeros((a.shape[1], a.shape[0]))
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def numerical_rank(m, tol: float = 1e-10, atol: float | None = None) -> int:
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(as_dense(m), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > _cutoff(s, tol, atol)))


def norm(m, kind: str = "frobenius") -> float:
    a = as_dense(m)
    if kind == "frobenius":
        return float(np.sqrt(np.sum(a * a)))
    if kind == "inf_induced":
        return float(np.abs(a).sum(axis=1).max())
    if kind == "spectral":
        return float(np.linalg.norm(a, 2))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


@dataclass
class PinvResult:
    z: np.ndarray
    iterations: int
    residual: float
    converged: bool
    residuals: list[float] = field(default_factory=list)
    init_condition_violated: bool = False


def initial_guess(a: np.ndarray) -> np.ndarray:
    """Scaled-transpose start ``a.T / (||a||_1 ||a||_inf)``."""
    scale = np.abs(a).sum(axis=0).max() * np.abs(a).sum(axis=1).max()
    if scale == 0.0:
        return np.zeros_like(a.T)
    return a.T / scale


def _shifted(x: np.ndarray, k: float, diag) -> np.ndarray:
    """``k I + x``, written into ``x``."""
    x[diag] += k
    return x


def pinv_iterative(a, max_iters: int = 30, tol: float = 1e-10, verify: bool = False) -> PinvResult:
    """Approximate the pseudoinverse of a square matrix with the third-order
    iteration ``Z <- Z (13I - AZ(15I - AZ(7I - AZ))) / 4``.

    Stops once ``||A Z_{j+1} - A Z_j||_F <= tol ||A Z_j||_F`` or after
    ``max_iters`` steps. The reported residual is ``||A Z A - A||_F / ||A||_F``.

    With ``verify=True`` the start is checked against ``||A A^+ - A Z_0||_2 < 1``
    using an SVD pseudoinverse; a violation is flagged, not raised.
    """
    a = as_dense(a, "a")
    c = a.shape[0]
    if a.shape[1] != c:
        raise ValueError(f"pinv_iterative needs a square matrix, got {a.shape}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    z = initial_guess(a)
    a_norm = np.linalg.norm(a)
    if a_norm == 0.0:
        return PinvResult(z, 0, 0.0, True)

    violated = False
    if verify:
        gap = a @ pinv_svd(a) - a @ z
        violated = bool(np.linalg.norm(gap, 2) >= 1.0)

    diag = np.diag_indices(c)
    az = a @ z
    residuals: list[float] = []
    growth = 0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            z = 0.25 * z @ _shifted(-az @ _shifted(-az @ _shifted(-az, 7.0, diag), 15.0, diag), 13.0, diag)
            az_next = a @ z
            res = float(np.linalg.norm(az_next @ a - a) / a_norm)
        if not np.isfinite(res):
            raise DivergenceError(it, res)
        if residuals and res > residuals[-1] and res > 1e-8:
            growth += 1
            if growth >= 3:
                raise DivergenceError(it, res)
        else:
            growth = 0
        residuals.append(res)
        step = np.linalg.norm(az_next - az)
        ref = np.linalg.norm(az)
        az = az_next
        if step <= tol * ref:
            converged = True
            break
    return PinvResult(z, it, residuals[-1], converged, residuals, violated)


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    cumulative: np.ndarray


def is_symmetric(a: np.ndarray, tol: float = 1e-10) -> bool:
    if a.shape[0] != a.shape[1]:
        return False
    scale = max(np.abs(a).max(), 1.0)
    return bool(np.abs(a - a.T).max() <= tol * scale)


def spectrum(m) -> Spectrum:
    """Spectrum magnitudes sorted descending plus their normalized cumulative sum.

    Symmetric input uses eigenvalues (signed, ordered by magnitude); anything
    else uses singular values.
    """
    a = as_dense(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"spectrum needs a square matrix, got {a.shape}")
    if is_symmetric(a):
        w = np.linalg.eigvalsh(a)
        values = w[np.argsort(-np.abs(w), kind="stable")]
    else:
        values = np.linalg.svd(a, compute_uv=False)
    mags = np.abs(values)
    total = mags.sum()
    if total == 0.0:
        cumulative = np.ones_like(mags)
    else:
        cumulative = np.minimum(np.cumsum(mags) / total, 1.0)
        cumulative[-1] = 1.0
    return Spectrum(values, cumulative)

"""Linear-time attention by spectral shifting over segment-means landmarks.

With ``F = L(Q K~^T / sqrt(d))``, ``A = L(Q~ K~^T / sqrt(d))`` and
``B = L(Q~ K^T / sqrt(d))`` (``L`` the row softmax), the score matrix is
approximated by::

    S~ = F A^+ (I_c - delta A^+) B      [+ delta I_n  when diag_shift="include"]

and the output ``S~ V`` is evaluated right to left: ``B V`` first, then the
c-by-c corrections, then ``F``. Nothing n-by-n is ever formed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exact import AttentionProblem, exact_scores
from .matcore import pinv_svd, svd_factors
from .nystrom import AllocationAudit, LandmarkKernels, landmark_kernels, pseudoinverse
from .spectral_shift import ss_factors_modified

DELTA_MODES = ("paper_formula", "fixed", "full_oracle")
DIAG_SHIFTS = ("omit", "include")
DESK_SCALE = 4096


@dataclass(frozen=True)
class SSAttentionConfig:
    m: int
    pinv_mode: str = "svd"
    pinv_iters: int = 30
    delta_mode: str = "paper_formula"
    delta_value: float = 0.0
    diag_shift: str = "omit"
    tol: float = 1e-10
    # Use the display form (I - delta * A) in place of (I - delta * A^+).
    literal_display_form: bool = False
    desk_scale: int = DESK_SCALE
    # Check the iteration's start condition against an SVD pseudoinverse.
    verify: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.pinv_iters < 1:
            raise ValueError(f"pinv_iters must be >= 1, got {self.pinv_iters}")
        if self.pinv_mode not in ("svd", "iterative"):
            raise ValueError(f"unknown pinv_mode {self.pinv_mode!r}")
        if self.delta_mode not in DELTA_MODES:
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}; expected one of {DELTA_MODES}")
        if self.diag_shift not in DIAG_SHIFTS:
            raise ValueError(f"unknown diag_shift {self.diag_shift!r}; expected one of {DIAG_SHIFTS}")
        if not np.isfinite(self.delta_value):
            raise ValueError("delta_value must be finite")


@dataclass
class SSState:
    """Everything computed on the way to an output; handy for reports."""

    kernels: LandmarkKernels
    z: np.ndarray
    delta: float
    pinv_iterations: int = 0
    pinv_residual: float = 0.0
    flags: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def oracle_delta(p: AttentionProblem, kern: LandmarkKernels) -> float:
    """Full-matrix shift fitted against the exact scores, using the
    landmark column block ``F`` as the column sketch. Quadratic cost."""
    s = exact_scores(p)
    n = p.n
    f = kern.f[:n]
    atol = 1e-10 * np.linalg.norm(s, 2)
    f_pinv = pinv_svd(f, atol=atol)
    rank = int(np.count_nonzero(np.linalg.svd(f, compute_uv=False) > atol))
    if rank >= n:
        return 0.0
    return float((np.trace(s) - np.trace(f_pinv @ s @ f)) / (n - rank))


def prepare(p: AttentionProblem, cfg: SSAttentionConfig, audit: AllocationAudit | None = None) -> SSState:
    timings = {}
    t0 = time.perf_counter()
    kern = landmark_kernels(p, cfg.m, audit)
    timings["landmarks_softmax"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pinv = pseudoinverse(kern.a_s, cfg.pinv_mode, cfg.pinv_iters, cfg.tol, cfg.verify)
    timings["pinv"] = time.perf_counter() - t0
    z = kern.audit.alloc("z", pinv.z)

    flags = []
    if kern.padded:
        flags.append("padded")
    if not pinv.converged:
        flags.append("pinv_not_converged")
    if pinv.init_condition_violated:
        flags.append("pinv_init_condition_violated")

    t0 = time.perf_counter()
    if cfg.delta_mode == "fixed":
        delta = float(cfg.delta_value)
    elif cfg.delta_mode == "paper_formula":
        factors = ss_factors_modified(kern.a_s)
        delta = factors.delta_ss
        flags.extend(factors.flags)
    else:
        if p.n > cfg.desk_scale:
            raise ValueError(f"delta_mode='full_oracle' materialises n x n scores; n={p.n} exceeds desk scale {cfg.desk_scale}")
        delta = oracle_delta(p, kern)
    timings["delta"] = time.perf_counter() - t0
    return SSState(kern, z, delta, pinv.iterations, pinv.residual, flags, timings)


def _inner_matrix(state: SSState, cfg: SSAttentionConfig) -> np.ndarray:
    """The c-by-c operator ``Z (I - delta X)`` with X = Z (or A for the display form)."""
    x = state.kernels.a_s if cfg.literal_display_form else state.z
    c = x.shape[0]
    return state.z @ (np.eye(c) - state.delta * x)


def ss_attention(
    p: AttentionProblem,
    cfg: SSAttentionConfig,
    audit: AllocationAudit | None = None,
    state: SSState | None = None,
) -> np.ndarray:
    state = state or prepare(p, cfg, audit)
    kern = state.kernels
    audit = kern.audit
    t0 = time.perf_counter()
    bv = audit.alloc("bv", kern.b @ kern.v)
    audit.free("b")
    x = kern.a_s if cfg.literal_display_form else state.z
    inner = audit.alloc("inner", bv - state.delta * (x @ bv))
    mid = audit.alloc("mid", state.z @ inner)
    audit.free("bv", "inner")
    out = audit.alloc("out", kern.f @ mid)
    if cfg.diag_shift == "include" and state.delta:
        out += state.delta * kern.v
    state.timings["apply"] = time.perf_counter() - t0
    return out[: kern.n_orig]


def ss_attention_materialized(p: AttentionProblem, cfg: SSAttentionConfig, state: SSState | None = None) -> np.ndarray:
    state = state or prepare(p, cfg)
    kern = state.kernels
    s_tilde = kern.f @ _inner_matrix(state, cfg) @ kern.b
    n = kern.n_orig
    s_tilde = s_tilde[:n, :n]
    if cfg.diag_shift == "include":
        s_tilde[np.diag_indices(n)] += state.delta
    return s_tilde


def ss_entry_svd_form(p: AttentionProblem, cfg: SSAttentionConfig, i: int, j: int, state: SSState | None = None) -> float:
    """One entry of the approximate score matrix through the SVD of ``A``.

    With ``A = U diag(g) V^T`` the entry is
    ``F[i] V diag(1/g) U^T (I - delta V diag(1/g) U^T) B[:, j]``; singular
    values at or below ``1e-12 g_max`` are dropped, which turns ``1/g`` into
    the pseudoinverse when ``A`` is singular.
    """
    n = p.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"entry ({i}, {j}) outside a {n}x{n} score matrix")
    state = state or prepare(p, cfg)
    kern = state.kernels
    svd = svd_factors(kern.a_s)
    keep = svd.sigma > 1e-12 * svd.sigma[0]
    u = svd.u[:, keep]
    vt = svd.vt[keep]
    g_inv = 1.0 / svd.sigma[keep]

    row = kern.f[i]
    col = kern.b[:, j]
    # right part: (I - delta X) b_j, with X = V diag(1/g) U^T or A itself
    if cfg.literal_display_form:
        right = col - state.delta * (kern.a_s @ col)
    else:
        right = col - state.delta * (vt.T @ (g_inv * (u.T @ col)))
    value = float((row @ vt.T) @ (g_inv * (u.T @ right)))
    if cfg.diag_shift == "include" and i == j:
        value += state.delta
    return value


def row_sum_deviation(s_tilde: np.ndarray) -> float:
    """Largest ``|row sum - 1|``; the approximation is not renormalised."""
    return float(np.abs(s_tilde.sum(axis=1) - 1.0).max())


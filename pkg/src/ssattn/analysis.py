"""Error measurement, the a-priori error bound, spectra and runtime scaling."""
from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .exact import AttentionProblem, exact_attention
from .matcore import NORM_KINDS, as_dense, norm, pinv_svd, spectrum
from .nystrom import nystrom_attention
from .ss_attention import SSAttentionConfig, ss_attention

SCHEMA_VERSION = "1.0"


def approx_error(s, s_tilde, kind: str = "frobenius") -> tuple[float, float]:
    s = as_dense(s, "s")
    s_tilde = as_dense(s_tilde, "s_tilde")
    if s.shape != s_tilde.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {s_tilde.shape}")
    absolute = norm(s - s_tilde, kind)
    ref = norm(s, kind)
    if ref == 0.0:
        return absolute, (0.0 if absolute == 0.0 else float("inf"))
    return absolute, absolute / ref


def error_bound(a_s, delta_ss: float, z_star) -> float:
    """``1 + ||A^+|| (1 + delta ||A^+||) (1 - ||A^+ - Z||)`` in the induced inf-norm.

    Evaluated as written; it is not guaranteed to dominate the observed error.
    """
    a_s = as_dense(a_s, "a_s")
    z_star = as_dense(z_star, "z_star")
    if a_s.shape != z_star.shape or a_s.shape[0] != a_s.shape[1]:
        raise ValueError(f"a_s and z_star must be matching square matrices, got {a_s.shape}, {z_star.shape}")
    a_pinv = pinv_svd(a_s)
    ap = norm(a_pinv, "inf_induced")
    gap = norm(a_pinv - z_star, "inf_induced")
    return 1.0 + ap * (1.0 + delta_ss * ap) * (1.0 - gap)


@dataclass
class ApproxReport:
    method: str
    n: int
    m: int
    d_k: int
    d_v: int
    seed: int | None = None
    err_frobenius: float | None = None
    err_frobenius_rel: float | None = None
    err_inf_induced: float | None = None
    err_inf_induced_rel: float | None = None
    err_spectral: float | None = None
    err_spectral_rel: float | None = None
    output_err_frobenius_rel: float | None = None
    bound_value: float | None = None
    bound_respected: bool | None = None
    delta_used: float | None = None
    rank_s_tilde: int | None = None
    row_sum_deviation: float | None = None
    pinv_mode: str | None = None
    pinv_iterations: int | None = None
    pinv_residual: float | None = None
    runtimes: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["kind"] = "approx_report"
        return d

    def record_errors(self, s: np.ndarray, s_tilde: np.ndarray) -> None:
        for kind in NORM_KINDS:
            absolute, rel = approx_error(s, s_tilde, kind)
            setattr(self, f"err_{kind}", absolute)
            setattr(self, f"err_{kind}_rel", rel)


@dataclass
class SpectrumReport:
    label: str
    values: np.ndarray
    cumulative: np.ndarray

    def rows(self):
        for i, (v, c) in enumerate(zip(self.values, self.cumulative)):
            yield i + 1, float(v), float(c)

    def count_above(self, rel_tol: float = 1e-10) -> int:
        mags = np.abs(self.values)
        return int(np.count_nonzero(mags > rel_tol * mags.max())) if mags.size and mags.max() > 0 else 0


def spectrum_report(m, label: str) -> SpectrumReport:
    sp = spectrum(m)
    return SpectrumReport(label, sp.values, sp.cumulative)


def loglog_slope(ns: Sequence[float], times: Sequence[float]) -> float:
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(times, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class ScalingResult:
    d_k: int
    m: int
    n_lists: dict[str, list[int]]
    trials: int
    medians: dict[str, list[float]]
    slopes: dict[str, float | None]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["kind"] = "bench_report"
        return d


def method_runner(method: str, m: int, pinv_mode: str = "iterative") -> Callable[[AttentionProblem], np.ndarray]:
    if method == "exact":
        return exact_attention
    if method == "nystrom":
        return lambda p: nystrom_attention(p, m, pinv_mode=pinv_mode)
    if method == "ss":
        cfg = SSAttentionConfig(m=m, pinv_mode=pinv_mode)
        return lambda p: ss_attention(p, cfg)
    raise ValueError(f"unknown method {method!r}")


def time_median(fn: Callable[[], object], trials: int, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def scaling_study(
    d_k: int,
    m: int,
    n_list: Sequence[int],
    trials: int = 3,
    seed: int = 0,
    methods: Sequence[str] = ("exact", "nystrom", "ss"),
    threads: int = 1,
    n_lists: dict[str, Sequence[int]] | None = None,
) -> ScalingResult:
    """Median-of-trials wall-clock time per method and n, and the slope of
    log(time) against log(n). ``n_lists`` overrides ``n_list`` per method."""
    if trials < 3:
        raise ValueError("trials must be >= 3")
    n_list = list(n_list)
    per_method = {meth: list((n_lists or {}).get(meth, n_list)) for meth in methods}
    for meth, ns in per_method.items():
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ValueError(f"n list for {meth} must be non-empty, positive and strictly ascending: {ns}")
    medians: dict[str, list[float]] = {}
    slopes: dict[str, float | None] = {}
    with threadpool_limits(limits=threads):
        for meth in methods:
            run = method_runner(meth, m)
            row = []
            for n in per_method[meth]:
                p = AttentionProblem.random(n, d_k, seed)
                row.append(time_median(lambda: run(p), trials))
            medians[meth] = row
            slopes[meth] = loglog_slope(per_method[meth], row) if len(row) > 1 else None
    return ScalingResult(d_k, m, per_method, trials, medians, slopes)

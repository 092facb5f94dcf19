import math

import numpy as np
import pytest

from ssattn.matcore import numerical_rank, pinv_svd, row_softmax, spectrum
from ssattn.nystrom import nystrom_raw
from ssattn.spectral_shift import (
    ColumnSelection,
    FlatTailSpec,
    SSFactors,
    flat_tail_spsd,
    pivoted_columns,
    ss_factors_full,
    ss_factors_modified,
    ss_objective,
    ss_reconstruct,
    flat_tail_check,
)


def random_spsd(rng, n, rank=None):
    g = rng.standard_normal((n, rank or n))
    return g @ g.T


def perturbation_never_improves(k_mat, sel, f, mode, rng, trials=200, eps=1e-3):
    base = ss_objective(k_mat, sel, f, mode)
    for _ in range(trials):
        du = rng.standard_normal(f.u_ss.shape)
        trial = SSFactors(f.u_ss + eps * du, f.delta_ss + eps * rng.standard_normal(), f.a_s, f.rank_a, f.shift)
        if ss_objective(k_mat, sel, trial, mode) < base - 1e-12 * max(base, 1.0):
            return False
    return True


class TestFull:
    def test_identity_single_column_objective(self):
        n = 6
        sel = ColumnSelection((2,), n)
        f = ss_factors_full(np.eye(n), sel)
        c_mat = np.eye(n)[:, [2]]
        explicit = np.linalg.norm(np.eye(n) - (c_mat @ f.u_ss @ c_mat.T + f.delta_ss * np.eye(n)))
        assert ss_objective(np.eye(n), sel, f) == pytest.approx(explicit, abs=1e-15)
        assert f.delta_ss == pytest.approx(1.0)

    def test_flat_tail_exact_with_shift(self):
        spec = FlatTailSpec.random(128, 6, 0.3, seed=1)
        k_mat = flat_tail_spsd(spec)
        sel = pivoted_columns(k_mat - spec.theta * np.eye(128), 8)
        f = ss_factors_full(k_mat, sel, shift_delta=spec.theta)
        c_mat = k_mat[:, sel.array] - spec.theta * np.eye(128)[:, sel.array]
        assert np.linalg.norm(k_mat - ss_reconstruct(c_mat, f, 128)) <= 1e-6 * np.linalg.norm(k_mat)
        assert f.delta_ss == pytest.approx(spec.theta, rel=1e-10)

    def test_pure_shift(self):
        theta = 0.7
        k_mat = theta * np.eye(20)
        sel = ColumnSelection((3,), 20)
        f = ss_factors_full(k_mat, sel, shift_delta=theta)
        assert ss_objective(k_mat, sel, f) <= 1e-10 * np.linalg.norm(k_mat)
        assert f.delta_ss == pytest.approx(theta, abs=1e-12)

    def test_closed_form_is_local_min(self, rng):
        k_mat = random_spsd(rng, 30)
        sel = ColumnSelection(tuple(rng.choice(30, 5, replace=False)), 30)
        f = ss_factors_full(k_mat, sel)
        assert ss_objective(k_mat, sel, f) > 0
        assert perturbation_never_improves(k_mat, sel, f, "full", rng)

    def test_delta_zero_prototype_is_nystrom(self, rng):
        s = random_spsd(rng, 25)
        cols = [1, 4, 9, 16]
        f = SSFactors(pinv_svd(s[np.ix_(cols, cols)]), 0.0, s[np.ix_(cols, cols)], 4)
        np.testing.assert_allclose(ss_reconstruct(s[:, cols], f, 25), nystrom_raw(s, cols), atol=1e-10 * np.abs(s).max())

    def test_rejects_non_symmetric(self, rng):
        with pytest.raises(ValueError, match="symmetric"):
            ss_factors_full(rng.standard_normal((5, 5)), ColumnSelection((0,), 5))

    def test_full_rank_convention(self, rng):
        k_mat = random_spsd(rng, 4)
        f = ss_factors_full(k_mat, ColumnSelection((0, 1, 2, 3), 4))
        assert f.delta_ss == 0.0 and f.full_rank_convention


class TestModified:
    def test_identity(self):
        f = ss_factors_modified(np.eye(4))
        assert f.delta_ss == 0.0 and f.full_rank_convention
        np.testing.assert_allclose(f.u_ss, np.eye(4))

    def test_diag_rank_deficient(self):
        f = ss_factors_modified(np.diag([2.0, 0.0]))
        assert abs(f.delta_ss) <= 1e-10
        np.testing.assert_allclose(f.u_ss, np.diag([0.5, 0.0]), atol=1e-12)
        assert f.rank_a == 1 and not f.full_rank_convention

    def test_softmax_duplicate_rows(self, rng):
        logits = rng.standard_normal((8, 8))
        logits[5] = logits[2]
        logits[7] = logits[0]
        a = row_softmax(logits)
        f = ss_factors_modified(a)
        assert f.rank_a == 6
        assert abs(f.delta_ss) <= 1e-8

    def test_sketched_objective_local_min(self, rng):
        k_mat = random_spsd(rng, 30, rank=3)
        sel = ColumnSelection(tuple(rng.choice(30, 5, replace=False)), 30)
        f = ss_factors_modified(k_mat[np.ix_(sel.array, sel.array)])
        assert ss_objective(k_mat, sel, f, "sketched") <= 1e-8 * np.linalg.norm(k_mat)
        assert perturbation_never_improves(k_mat, sel, f, "sketched", rng)

    def test_trace_identity_random_family(self, rng):
        for i in range(200):
            c = int(rng.integers(1, 40))
            kind = i % 4
            if kind == 0:
                a = rng.standard_normal((c, c))
                a = a + a.T
            elif kind == 1:
                a = rng.standard_normal((c, c))
            elif kind == 2:
                a = row_softmax(rng.standard_normal((c, c)) * 3)
            else:
                r = int(rng.integers(0, c + 1))
                a = rng.standard_normal((c, r)) @ rng.standard_normal((r, c)) if r else np.zeros((c, c))
            lhs = np.trace(pinv_svd(a) @ a @ a) if a.any() else 0.0
            assert abs(lhs - np.trace(a)) <= 1e-8 * abs(np.trace(a)) + 1e-10, i


class TestFlatTail:
    def test_k_zero_is_scaled_identity(self):
        np.testing.assert_array_equal(flat_tail_spsd(FlatTailSpec(10, 0.4)), 0.4 * np.eye(10))

    def test_spectrum_recovered(self):
        spec = FlatTailSpec(64, 0.5, (9.0, 4.0, 2.0, 0.75), seed=3)
        k_mat = flat_tail_spsd(spec)
        assert np.abs(k_mat - k_mat.T).max() <= 1e-12
        expected = np.concatenate([spec.head_eigs, np.full(60, 0.5)])
        np.testing.assert_allclose(spectrum(k_mat).values, expected, atol=1e-10)

    def test_shifted_rank(self):
        spec = FlatTailSpec.random(64, 5, 0.2, seed=4)
        assert numerical_rank(flat_tail_spsd(spec) - 0.2 * np.eye(64)) == 5

    def test_strict_inequality(self):
        with pytest.raises(ValueError, match="strictly greater"):
            FlatTailSpec(10, 0.5, (2.0, 0.5))
        with pytest.raises(ValueError):
            FlatTailSpec(10, 0.0)


class TestFlatTailCheck:
    def test_reference_instance(self):
        rep = flat_tail_check(FlatTailSpec.random(256, 8, 0.5, seed=5), 16)
        assert rep.ss_error <= 1e-6 * rep.k_fro
        assert rep.nystrom_error > rep.ss_error and rep.ss_not_worse

    def test_pure_shift_analytic_nystrom_residual(self):
        n, theta = 256, 0.5
        rep = flat_tail_check(FlatTailSpec(n, theta), 1)
        assert rep.ss_error <= 1e-12
        assert rep.nystrom_error == pytest.approx(math.sqrt(n - 1) * theta, abs=1e-8)

    def test_insufficient_columns(self):
        with pytest.raises(ValueError, match="c >= k"):
            flat_tail_check(FlatTailSpec.random(32, 4, 0.5, seed=0), 3)

    def test_gap_sweep_keeps_advantage(self):
        # head eigenvalues approach theta from above; ordering is monitored, not tuned
        for gap in (5.0, 1.0, 0.1, 0.01):
            spec = FlatTailSpec(128, 1.0, tuple(1.0 + gap * np.linspace(1, 0.5, 4)), seed=6)
            rep = flat_tail_check(spec, 8)
            assert rep.ss_not_worse

import numpy as np
import pytest

from conftest import invertible_problems, rel_fro
from ssattn.exact import AttentionProblem, exact_attention, exact_scores
from ssattn.matcore import numerical_rank
from ssattn.nystrom import AllocationAudit, nystrom_attention, nystrom_attention_materialized, nystrom_raw


def low_rank_spsd(rng, n, k):
    g = rng.standard_normal((n, k))
    return g @ g.T


class TestRaw:
    def test_exact_for_low_rank_spsd(self, rng):
        s = low_rank_spsd(rng, 40, 5)
        cols = [0, 7, 13, 21, 30, 33]
        assert np.linalg.matrix_rank(s[:, cols]) == 5
        assert np.linalg.norm(nystrom_raw(s, cols) - s) <= 1e-8 * np.linalg.norm(s)

    def test_all_columns(self, rng):
        s = rng.standard_normal((12, 12))
        np.testing.assert_allclose(nystrom_raw(s, range(12)), s, atol=1e-10 * np.abs(s).max() * 12)

    def test_identity_single_column(self):
        out = nystrom_raw(np.eye(5), [0])
        expected = np.zeros((5, 5))
        expected[0, 0] = 1
        np.testing.assert_array_equal(out, expected)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            nystrom_raw(np.eye(4), [1, 1])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            nystrom_raw(np.eye(4), [4])


class TestLandmark:
    def test_m_equals_n_is_exact(self):
        for p in invertible_problems(5, n_max=64, seed=1):
            assert rel_fro(nystrom_attention(p, p.n), exact_attention(p)) <= 1e-8

    def test_single_token(self):
        p = AttentionProblem.random(1, 3, seed=2)
        np.testing.assert_allclose(nystrom_attention(p, 1), p.v, rtol=1e-15)

    def test_random_error_finite_below_one(self):
        p = AttentionProblem.random(128, 16, seed=3)
        err = rel_fro(nystrom_attention_materialized(p, 16), exact_scores(p))
        assert np.isfinite(err) and 0 < err < 1

    def test_pipeline_matches_materialized(self):
        for seed in range(5):
            p = AttentionProblem.random(96, 8, seed=seed)
            out = nystrom_attention(p, 12)
            ref = nystrom_attention_materialized(p, 12) @ p.v
            assert rel_fro(out, ref) <= 1e-10

    def test_rank_at_most_m(self):
        for seed, m in [(4, 4), (5, 8), (6, 16)]:
            p = AttentionProblem.random(64, 8, seed=seed)
            assert numerical_rank(nystrom_attention_materialized(p, m)) <= m

    def test_iterative_pinv_close_to_svd(self):
        p = AttentionProblem.random(128, 16, seed=7)
        a = nystrom_attention(p, 16, pinv_mode="svd")
        b = nystrom_attention(p, 16, pinv_mode="iterative")
        assert rel_fro(b, a) <= 1e-6

    def test_no_quadratic_temporaries(self):
        p = AttentionProblem.random(512, 8, seed=8)
        audit = AllocationAudit()
        nystrom_attention(p, 16, audit=audit)
        assert audit.largest <= 512 * 16

    def test_m_too_large(self):
        with pytest.raises(ValueError, match="reduce m"):
            nystrom_attention(AttentionProblem.random(4, 2, seed=0), 5)

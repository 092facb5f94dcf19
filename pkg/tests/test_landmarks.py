import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssattn.exact import AttentionProblem, exact_attention
from ssattn.landmarks import make_landmarks, pad_to_multiple, segment_means
from ssattn.ss_attention import SSAttentionConfig, ss_attention


def segment_means_loop(x, m):
    n = x.shape[0]
    l = n // m
    out = []
    for j in range(m):
        acc = np.zeros(x.shape[1])
        for i in range(j * l, (j + 1) * l):
            acc += x[i]
        out.append(acc / l)
    return np.array(out)


def test_two_segments():
    r = np.arange(12.0).reshape(4, 3)
    np.testing.assert_allclose(segment_means(r, 2), [(r[0] + r[1]) / 2, (r[2] + r[3]) / 2])


def test_m_equals_n_is_identity():
    x = np.random.default_rng(0).standard_normal((6, 4))
    assert np.array_equal(segment_means(x, 6), x)


def test_equal_rows():
    v = np.array([1.5, -2.0, 3.0])
    np.testing.assert_allclose(segment_means(np.tile(v, (8, 1)), 4), np.tile(v, (4, 1)), rtol=1e-15)


def test_matches_loop_oracle():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((48, 5))
    for m in (1, 2, 3, 4, 6, 8, 12, 16, 24, 48):
        np.testing.assert_allclose(segment_means(x, m), segment_means_loop(x, m), rtol=1e-13, atol=1e-15)


def test_rejects_bad_m():
    x = np.ones((4, 2))
    with pytest.raises(ValueError):
        segment_means(x, 0)
    with pytest.raises(ValueError, match="reduce m"):
        segment_means(x, 5)
    with pytest.raises(ValueError, match="pad"):
        segment_means(x, 3)


def test_literal_form_differs_when_l_ne_m():
    # n = 8, m = 2 -> l = 4: the literal range averages rows 0..1 and 4..5
    x = np.arange(16.0).reshape(8, 2)
    np.testing.assert_allclose(segment_means(x, 2, literal=True), [(x[0] + x[1]) / 2, (x[4] + x[5]) / 2])
    with pytest.raises(ValueError):
        segment_means(np.ones((8, 2)), 4, literal=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_mean_of_means(m, l, d, seed):
    x = np.random.default_rng(seed).standard_normal((m * l, d))
    np.testing.assert_allclose(segment_means(x, m).mean(axis=0), x.mean(axis=0), atol=1e-12)


def test_permutation_covariance():
    rng = np.random.default_rng(2)
    m, l = 4, 3
    x = rng.standard_normal((m * l, 2))
    seg_perm = rng.permutation(m)
    within = [rng.permutation(l) for _ in range(m)]
    order = np.concatenate([seg * l + within[seg] for seg in seg_perm])
    np.testing.assert_allclose(segment_means(x[order], m), segment_means(x, m)[seg_perm], atol=1e-15)


def test_landmark_rows_in_segment_hull():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((20, 3))
    lm = segment_means(x, 5)
    for j in range(5):
        seg = x[j * 4:(j + 1) * 4]
        assert np.all(lm[j] >= seg.min(axis=0) - 1e-15) and np.all(lm[j] <= seg.max(axis=0) + 1e-15)


def test_make_landmarks():
    rng = np.random.default_rng(4)
    q, k = rng.standard_normal((12, 3)), rng.standard_normal((12, 3))
    pair = make_landmarks(q, k, 4)
    assert pair.q_tilde.shape == (4, 3) and pair.k_tilde.shape == (4, 3) and pair.l == 3


class TestPadding:
    def test_five_by_two(self):
        x = np.ones((5, 3))
        padded, n = pad_to_multiple(x, 2)
        assert n == 5 and padded.shape == (6, 3)
        assert not padded[5].any()

    def test_already_divisible(self):
        x = np.ones((6, 2))
        padded, n = pad_to_multiple(x, 3)
        assert n == 6 and padded.shape == (6, 2)

    def test_end_to_end_shape(self):
        p = AttentionProblem.random(7, 3, seed=5)
        out = ss_attention(p, SSAttentionConfig(m=4))
        assert out.shape == (7, 3)
        assert exact_attention(p).shape == out.shape
        assert np.all(np.isfinite(out))

import numpy as np
import pytest

from ssattn.exact import AttentionProblem, exact_scores


def rel_fro(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def invertible_problems(count, n_max=128, d_max=32, seed=0, cond_max=1e10):
    """Seeded problems with m = n whose score matrix is numerically invertible."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(1, n_max + 1))
        d = int(rng.integers(1, d_max + 1))
        p = AttentionProblem.random(n, d, int(rng.integers(2**31)))
        if np.linalg.cond(exact_scores(p)) <= cond_max:
            out.append(p)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

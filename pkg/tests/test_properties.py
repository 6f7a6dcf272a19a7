"""Property-based checks of the numeric invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorprop.attention import AttentionConfig, QKV, head_avg_attention_map, self_attention
from anchorprop.tensorcore import cosine_sim, matmul, softmax_rows

COMMON = settings(max_examples=200, deadline=None, derandomize=True)

finite32 = st.floats(min_value=-50.0, max_value=50.0, width=32,
                     allow_nan=False, allow_infinity=False)


def matrices(max_rows=6, max_cols=8):
    return st.tuples(
        st.integers(1, max_rows), st.integers(1, max_cols)
    ).flatmap(lambda s: arrays(np.float32, s, elements=finite32))


@COMMON
@given(matrices())
def test_softmax_rows_sum_to_one(m):
    out = softmax_rows(m, temperature=1.0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert out.min() >= 0.0


@COMMON
@given(matrices(), st.floats(min_value=-20.0, max_value=20.0, width=32))
def test_softmax_shift_invariance(m, c):
    shifted = (m + np.float32(c)).astype(np.float32)
    np.testing.assert_allclose(
        softmax_rows(m), softmax_rows(shifted), atol=1e-6
    )


@COMMON
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.25, 1.0, 4.0, 16.0]))
def test_argmax_temperature_invariance_single_head(seed, temperature):
    rng = np.random.default_rng(seed)
    q = QKV(*[rng.standard_normal((5, 4)).astype(np.float32) for _ in range(3)])
    k = QKV(*[rng.standard_normal((7, 4)).astype(np.float32) for _ in range(3)])
    base = head_avg_attention_map(q, k, AttentionConfig(1, 4, temperature=1.0))
    other = head_avg_attention_map(q, k, AttentionConfig(1, 4, temperature=temperature))
    assert np.array_equal(
        base.scores.argmax(axis=1), other.scores.argmax(axis=1)
    )


@COMMON
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_attention_permutation_equivariance(seed, heads):
    rng = np.random.default_rng(seed)
    n, dim = 6, 8
    qkv = QKV(*[rng.standard_normal((n, dim)).astype(np.float32) for _ in range(3)])
    cfg = AttentionConfig(heads, dim)
    out = self_attention(qkv, cfg)
    perm = rng.permutation(n)
    permuted = QKV(qkv.q, qkv.k[perm], qkv.v[perm])
    np.testing.assert_allclose(self_attention(permuted, cfg), out, atol=1e-6)


@COMMON
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_attention_convex_combination_bounds(seed, heads):
    rng = np.random.default_rng(seed)
    n, dim = 5, 8
    qkv = QKV(*[rng.standard_normal((n, dim)).astype(np.float32) for _ in range(3)])
    cfg = AttentionConfig(heads, dim)
    out = self_attention(qkv, cfg)
    hd = cfg.head_dim
    for h in range(heads):
        cols = slice(h * hd, (h + 1) * hd)
        assert np.all(out[:, cols] >= qkv.v[:, cols].min(axis=0) - 1e-6)
        assert np.all(out[:, cols] <= qkv.v[:, cols].max(axis=0) + 1e-6)


@COMMON
@given(st.integers(0, 2**32 - 1))
def test_matmul_identity_exact(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((4, 5)).astype(np.float32)
    assert np.array_equal(matmul(np.eye(4, dtype=np.float32), m), m)


@COMMON
@given(st.integers(0, 2**32 - 1), st.floats(min_value=0.01, max_value=100.0))
def test_cosine_positive_scale_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(6) + 0.1
    assert abs(cosine_sim(u, alpha * u) - 1.0) <= 1e-6

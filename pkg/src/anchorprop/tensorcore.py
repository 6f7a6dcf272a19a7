"""Dense numeric kernels: matmul, row softmax, cosine similarity.

Matrices are 2-D float32 numpy arrays, row-major and dense. The precision
contract for every kernel is: values are stored in 32-bit, accumulation
happens in at least 64-bit. That fixed contract is what makes the
bit-exactness guarantees of the parallel pipeline testable.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - threadpoolctl is a declared dependency
    threadpool_limits = None

from .errors import DegenerateVectorError, NumericError, ShapeError

DTYPE = np.float32

_MIN_NORM = 1e-12


@contextmanager
def single_thread_blas():
    """Pin BLAS to one thread for the duration of the context.

    Keeps GEMM results independent of the host's BLAS threading and gives
    worker-level parallelism sole ownership of the cores.
    """
    if threadpool_limits is None:
        yield
    else:
        with threadpool_limits(limits=1, user_api="blas"):
            yield


def as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float32 view of `a` (copying if needed)."""
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=DTYPE)


def require_finite(a: np.ndarray, name: str = "matrix") -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name}: contains NaN or Inf")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with 64-bit accumulation, stored back to float32."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    out = a.astype(np.float64) @ b.astype(np.float64)
    return out.astype(DTYPE)


def softmax_rows(m: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of m / temperature.

    Stable under large logits: the per-row max is subtracted before
    exponentiation (exp of -inf is 0). Exponentials are evaluated in
    float32 and normalized against a 64-bit row sum, which keeps row
    sums within 1e-6 of 1 while staying fast on wide score matrices.
    """
    m = as_matrix(m, "logits")
    require_finite(m, "logits")
    if not temperature > 0:
        raise NumericError(f"temperature must be > 0, got {temperature}")
    return _softmax_rows_unchecked(m, temperature)


def _softmax_rows_unchecked(m: np.ndarray, temperature: float) -> np.ndarray:
    """softmax_rows without validation, for hot paths; rows along axis -1."""
    z = m / DTYPE(temperature)
    z -= z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    denom = e.sum(axis=-1, keepdims=True, dtype=np.float64)
    e *= (1.0 / denom).astype(DTYPE)
    return e


def cosine_sim(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between u and v, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"cosine_sim: lengths differ, {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu <= _MIN_NORM or nv <= _MIN_NORM:
        raise DegenerateVectorError(f"cosine_sim: norm too small ({nu:.3g}, {nv:.3g})")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))

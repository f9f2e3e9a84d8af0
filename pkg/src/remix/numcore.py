"""Minimal dense-vector numerics shared by the losses, encoder, and tests.

Everything here is a pure function over numpy arrays. Similarities are
cosine over unit-normalized vectors, and every softmax goes through the
max-subtracted log-sum-exp kernel so no raw exponentials are ever summed.
"""
from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyPoolError,
    NonFiniteEvaluationError,
    ZeroVectorError,
)

NORM_FLOOR = 1e-12


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent named RNG stream derived from one root seed.

    Streams with different names never overlap, so toggling one consumer
    (sampler, augmentation, ...) does not perturb the others.
    """
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])
    )


def normalize(v: np.ndarray) -> np.ndarray:
    """Project a vector onto the unit sphere, preserving direction."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n <= NORM_FLOOR:
        raise ZeroVectorError(f"cannot normalize vector with norm {n:g}")
    return v / n


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise normalize; raises if any row is degenerate."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1)
    if np.any(norms <= NORM_FLOOR):
        raise ZeroVectorError("row with (near-)zero norm")
    return x / norms[..., None]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"{a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def log_softmax_term(target: float, pool: np.ndarray) -> float:
    """target - logsumexp(pool), stable under large magnitudes.

    `target` must be one of the pool's values so the result is <= 0.
    """
    pool = np.asarray(pool, dtype=np.float64)
    if pool.size == 0:
        raise EmptyPoolError("softmax pool is empty")
    m = float(np.max(pool))
    return float(target - (m + np.log(np.sum(np.exp(pool - m)))))


def finite_diff_grad(
    fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one probe per axis."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for k in range(xf.size):
        step = np.zeros_like(xf)
        step[k] = h
        hi = fn((xf + step).reshape(x.shape))
        lo = fn((xf - step).reshape(x.shape))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteEvaluationError(f"non-finite evaluation at axis {k}")
        flat[k] = (hi - lo) / (2.0 * h)
    return grad

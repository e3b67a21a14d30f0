"""Seeded random streams built on the counter-based Philox generator.

Philox output depends only on (key, counter), so a seed gives the same
stream on every platform and numpy build.  Independent instances use
separate keys rather than jumps within one stream.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for ``(seed, stream)``; both are reduced to 64 bits and packed into the Philox key."""
    key = ((int(stream) & _MASK64) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def random_orthonormal(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """n x k matrix with orthonormal columns (QR of a Gaussian, signs fixed)."""
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    return Q * np.where(np.diag(R) < 0.0, -1.0, 1.0)


def matrix_with_spectrum(rng: np.random.Generator, l: int, m: int, sigma) -> np.ndarray:
    """Random l x m matrix whose leading singular values are ``sigma`` (the rest zero)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    k = sigma.size
    return (random_orthonormal(rng, l, k) * sigma) @ random_orthonormal(rng, m, k).T

"""Seeded random problem instances with controlled spectra.

All builders draw from a caller-supplied generator so that a
``(seed, stream)`` pair reproduces the instance exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import FixedRankPoint, NormalVector
from .rng import random_orthonormal


def gapped_matrix(rng: np.random.Generator, l: int, m: int, r: int, *, top=(1.0, 2.0), tail=(0.1, 0.9)) -> np.ndarray:
    """Random l x m matrix with ``sigma_1..r`` drawn from ``top`` and the rest from ``tail``.

    With the defaults the relative gap ``(sigma_r - sigma_{r+1}) / sigma_1`` is at least 0.05.
    """
    p = min(l, m)
    sig = np.concatenate([
        np.sort(rng.uniform(*top, r))[::-1],
        np.sort(rng.uniform(*tail, p - r))[::-1],
    ])
    return (random_orthonormal(rng, l, p) * sig) @ random_orthonormal(rng, m, p).T


def random_rotation(rng: np.random.Generator, r: int) -> np.ndarray:
    return random_orthonormal(rng, r, r)


def random_point(rng: np.random.Generator, l: int, m: int, r: int, *, sigma=(0.5, 2.0)) -> FixedRankPoint:
    """Point with orthonormal U and a well-conditioned Z in a random gauge."""
    U = random_orthonormal(rng, l, r)
    Z = random_orthonormal(rng, m, r) * rng.uniform(*sigma, r)
    return FixedRankPoint(U, Z @ random_rotation(rng, r))


@dataclass(frozen=True)
class CurvatureInstance:
    """A point, a rank-k normal vector and their singular data."""

    point: FixedRankPoint
    normal: NormalVector
    sigma: np.ndarray
    tail_sigma: np.ndarray

    def expected_spectrum(self) -> np.ndarray:
        """Sorted eigenvalues ``+-tail_j / sigma_i`` padded with zeros to the tangent dimension."""
        p = self.point
        dim = (p.l + p.m) * p.r - p.r**2
        k = (self.tail_sigma[None, :] / self.sigma[:, None]).ravel()
        vals = np.concatenate([k, -k, np.zeros(dim - 2 * k.size)])
        return np.sort(vals)


def curvature_instance(
    rng: np.random.Generator, l: int, m: int, r: int, k: int, *, sigma=(1.0, 2.0), tail=(0.1, 0.9)
) -> CurvatureInstance:
    Q = random_orthonormal(rng, l, r + k)
    P = random_orthonormal(rng, m, r + k)
    s = rng.uniform(*sigma, r)
    t = rng.uniform(*tail, k)
    point = FixedRankPoint(Q[:, :r], (P[:, :r] * s) @ random_rotation(rng, r))
    N = (Q[:, r:] * t) @ P[:, r:].T
    return CurvatureInstance(point, NormalVector(point, N), s, t)


def equispaced_target(rng: np.random.Generator, l: int, m: int, lo: float = 1.0, hi: float = 10.0):
    """Target with singular values equally spaced from ``hi`` down to ``lo``; returns (target, sigma)."""
    p = min(l, m)
    sig = hi - (hi - lo) * np.arange(p) / (p - 1)
    return (random_orthonormal(rng, l, p) * sig) @ random_orthonormal(rng, m, p).T, sig

"""Geodesics, the exponential map and parallel transport along geodesics."""

from __future__ import annotations

import numpy as np

from . import config
from .errors import GeodesicError
from .manifold import FixedRankPoint, TangentVector, gauge_fix, project_tangent, right_gram_solve

__all__ = ["geodesic_rhs", "geodesic_path", "exp_map"]


def geodesic_rhs(U, VU, Z, VZ):
    """Second-order geodesic system written as a first-order one.

    ``U'' = -U U'^T U' - 2 U' Z'^T Z (Z^T Z)^{-1}`` and ``Z'' = Z U'^T U'``.
    """
    VtV = VU.T @ VU
    aU = -U @ VtV - 2.0 * right_gram_solve(Z, VU @ (VZ.T @ Z))
    aZ = Z @ VtV
    return VU, aU, VZ, aZ


def _rk4_step(state, h):
    k1 = geodesic_rhs(*state)
    k2 = geodesic_rhs(*(s + 0.5 * h * k for s, k in zip(state, k1)))
    k3 = geodesic_rhs(*(s + 0.5 * h * k for s, k in zip(state, k2)))
    k4 = geodesic_rhs(*(s + h * k for s, k in zip(state, k3)))
    return tuple(s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4))


def _regauge(U, VU, Z, VZ):
    # U = Q Rf; keeps both U Z^T and the dense velocity unchanged.
    Q, Rf = np.linalg.qr(U)
    d = np.where(np.diag(Rf) < 0.0, -1.0, 1.0)
    Q, Rf = Q * d, Rf * d[:, None]
    VU = np.linalg.solve(Rf.T, VU.T).T
    return Q, VU, Z @ Rf.T, VZ @ Rf.T


def geodesic_path(
    p: FixedRankPoint,
    X: TangentVector,
    n_steps: int = config.GEODESIC_STEPS,
    *,
    t1: float = 1.0,
    drift_tol: float = 1e-10,
    eps_rank: float | None = None,
):
    """Integrate the geodesic from ``p`` with initial velocity ``X`` by RK4.

    Returns ``(times, points, velocities)`` sampled at every step.  The
    horizontality constraint ``U^T U' = 0`` is re-imposed after each step and
    the gauge is re-orthonormalized whenever ``|U^T U - I|`` exceeds
    ``drift_tol``.

    Raises
    ------
    GeodesicError
        If ``sigma_min(Z)`` falls below ``eps_rank * sigma_max(Z)``.
    """
    eps_rank = p.eps_rank if eps_rank is None else eps_rank
    h = t1 / n_steps
    state = (p.U, X.XU, p.Z, X.XZ)
    times = [0.0]
    points = [p]
    velocities = [X]
    r = p.r
    for n in range(1, n_steps + 1):
        try:
            U, VU, Z, VZ = _rk4_step(state, h)
        except np.linalg.LinAlgError:
            raise GeodesicError(n * h, 0.0) from None
        VU = VU - U @ (U.T @ VU)
        if np.linalg.norm(U.T @ U - np.eye(r)) > drift_tol:
            U, VU, Z, VZ = _regauge(U, VU, Z, VZ)
        s = np.linalg.svd(Z, compute_uv=False)
        t = n * h
        if not np.all(np.isfinite(s)) or not s[-1] > eps_rank * s[0]:
            raise GeodesicError(t, float(s[-1]))
        state = (U, VU, Z, VZ)
        q = FixedRankPoint(U, Z, p.eps_rank)
        times.append(t)
        points.append(q)
        velocities.append(TangentVector(q, VU, VZ))
    return np.array(times), points, velocities


def exp_map(
    p: FixedRankPoint, X: TangentVector, n_steps: int = config.GEODESIC_STEPS, **kwargs
) -> tuple[FixedRankPoint, TangentVector]:
    """Endpoint of the unit-time geodesic and the parallel-transported velocity.

    The endpoint is gauge-fixed; the velocity is re-expressed in the new gauge.
    """
    if X.XU.any() or X.XZ.any():
        _, points, velocities = geodesic_path(p, X, n_steps, **kwargs)
        end, vel = points[-1], velocities[-1]
    else:
        end, vel = p, X
    fixed = gauge_fix(end)
    return fixed, project_tangent(fixed, vel.dense())

"""Truncated SVD as the orthogonal projection onto the rank-r manifold.

Besides the projection itself this module provides its closed-form
differential, the a-priori bound on how far that differential departs from
the plain tangent projection, and the ODE right-hand side that transports
the best rank-r approximation of a time-dependent matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import config
from .errors import RankDeficientError, ShapeError, SkeletonProximityError
from .linalg import as_dense, svd
from .manifold import FixedRankPoint, TangentVector, gauge_fix, project_normal, project_tangent
from .trajectory import Trajectory

__all__ = [
    "GapReport",
    "TrackedFactors",
    "truncate",
    "decompose",
    "tracked_from_point",
    "differential",
    "deviation_bound",
    "best_rank_rhs",
    "track_best_rank",
]


@dataclass(frozen=True)
class GapReport:
    sigma_r: float
    sigma_r_plus_1: float
    relative_gap: float

    @classmethod
    def from_values(cls, sigma_1: float, sigma_r: float, sigma_r_plus_1: float) -> GapReport:
        rel = 0.0 if sigma_1 == 0.0 else (sigma_r - sigma_r_plus_1) / sigma_1
        return cls(float(sigma_r), float(sigma_r_plus_1), float(rel))

    @classmethod
    def from_sigma(cls, sigma: np.ndarray, r: int) -> GapReport:
        nxt = sigma[r] if r < sigma.size else 0.0
        return cls.from_values(sigma[0], sigma[r - 1], nxt)

    def line(self) -> str:
        return f"{self.sigma_r:.17g} {self.sigma_r_plus_1:.17g} {self.relative_gap:.17g}"


@dataclass(frozen=True)
class TrackedFactors:
    """A rank-r point together with the singular triplets of the discarded part.

    ``sigma``, ``Ut``, ``Vt`` hold the top-r triplets of ``dense(point)``;
    ``tail_sigma``, ``Un``, ``Vn`` hold the k retained normal triplets.
    """

    point: FixedRankPoint
    sigma: np.ndarray
    Ut: np.ndarray
    Vt: np.ndarray
    tail_sigma: np.ndarray
    Un: np.ndarray
    Vn: np.ndarray

    @property
    def k(self) -> int:
        return self.tail_sigma.size

    def gap(self) -> GapReport:
        nxt = self.tail_sigma[0] if self.k else 0.0
        return GapReport.from_values(max(self.sigma[0], nxt), self.sigma[-1], nxt)

    def orthogonality_defect(self) -> float:
        if self.k == 0:
            return 0.0
        return float(max(np.abs(self.point.U.T @ self.Un).max(), np.abs(self.Vt.T @ self.Vn).max()))


def _check_gap(gap: GapReport, eps_gap: float, time=None):
    if not gap.relative_gap > eps_gap:
        raise SkeletonProximityError(gap, time)


def _tail(sig, U, V, r, cutoff):
    tail = sig[r:]
    keep = tail > cutoff * sig[0] if sig[0] > 0 else np.zeros(tail.size, dtype=bool)
    return tail[keep], U[:, r:][:, keep], V[:, r:][:, keep]


def decompose(
    amb,
    r: int,
    *,
    eps_gap: float = config.EPS_GAP,
    eps_rank: float = config.EPS_RANK,
    cutoff: float = config.NORMAL_TRIPLET_CUTOFF,
) -> tuple[TrackedFactors, GapReport]:
    """SVD of ``amb`` split into the rank-r projection and its normal triplets."""
    amb = as_dense(amb)
    if not 1 <= r <= min(amb.shape):
        raise ShapeError(f"rank {r} out of range for shape {amb.shape}")
    f = svd(amb)
    gap = GapReport.from_sigma(f.sigma, r)
    if not f.sigma[r - 1] > eps_rank * f.sigma[0]:
        raise RankDeficientError(f"numerical rank of the input is below {r}")
    _check_gap(gap, eps_gap)
    point = FixedRankPoint(f.U[:, :r].copy(), f.V[:, :r] * f.sigma[:r], eps_rank)
    t, Un, Vn = _tail(f.sigma, f.U, f.V, r, cutoff)
    tracked = TrackedFactors(point, f.sigma[:r].copy(), f.U[:, :r].copy(), f.V[:, :r].copy(), t, Un, Vn)
    return tracked, gap


def truncate(amb, r: int, **kwargs) -> tuple[FixedRankPoint, GapReport]:
    """Best rank-r approximation ``sum_{i<=r} sigma_i u_i v_i^T``.

    Raises
    ------
    SkeletonProximityError
        When the relative gap ``(sigma_r - sigma_{r+1}) / sigma_1`` is not
        above ``eps_gap``.
    RankDeficientError
        When the numerical rank of ``amb`` is below r.
    """
    tracked, gap = decompose(amb, r, **kwargs)
    return tracked.point, gap


def tracked_from_point(
    point: FixedRankPoint, amb, *, cutoff: float = config.NORMAL_TRIPLET_CUTOFF
) -> TrackedFactors:
    """Pair a point with the normal component of ``amb`` at that point.

    The top triplets come from the SVD of Z and the tail from the SVD of
    ``(I - Pi_T) amb``, so the two families are orthogonal by construction.
    """
    # LAPACK SVD here: this runs at every integrator stage and the
    # coefficient formulas are invariant under singular-vector sign flips.
    zu, zs, zvt = np.linalg.svd(point.Z, full_matrices=False)
    Ut = point.U @ zvt.T
    N = project_normal(point, amb).N
    nu, ns, nvt = np.linalg.svd(N, full_matrices=False)
    scale = max(zs[0], ns[0])
    keep = ns > cutoff * scale
    return TrackedFactors(point, zs, Ut, zu, ns[keep], nu[:, keep], nvt.T[:, keep])


def _curvature_coefficients(tf: TrackedFactors, direction: np.ndarray):
    """Coefficients of ``u_{r+j} v_i^T`` (k x r) and ``u_i v_{r+j}^T`` (r x k)."""
    s = tf.sigma
    t = tf.tail_sigma
    P = tf.Un.T @ direction @ tf.Vt  # u_{r+j}^T X v_i
    Q = tf.Ut.T @ direction @ tf.Vn  # u_i^T X v_{r+j}
    w = t[None, :] / (s[:, None] ** 2 - t[None, :] ** 2)  # r x k
    # Weights follow from expanding kappa / (1 - kappa) over the +- principal pairs.
    C1 = w.T * (t[:, None] * P + s[None, :] * Q.T)
    C2 = w * (s[:, None] * P.T + t[None, :] * Q)
    return C1, C2


def differential(amb, r: int, direction, **kwargs) -> TangentVector:
    """Derivative of the rank-r truncation at ``amb`` along ``direction``.

    Equal to the tangent projection of the direction plus a curvature
    correction that couples each retained triplet i with each discarded
    triplet j through ``sigma_{r+j} / (sigma_i^2 - sigma_{r+j}^2)``.
    """
    direction = as_dense(direction, "direction")
    tf, _ = decompose(amb, r, **kwargs)
    if direction.shape != tf.point.shape:
        raise ShapeError("direction shape does not match the matrix")
    X = project_tangent(tf.point, direction)
    if tf.k == 0:
        return X
    C1, C2 = _curvature_coefficients(tf, direction)
    corr = tf.Un @ C1 @ tf.Vt.T + tf.Ut @ C2 @ tf.Vn.T
    return X + project_tangent(tf.point, corr)


def deviation_bound(amb, r: int, direction, **kwargs) -> float:
    """Upper bound ``sigma_{r+1} / (sigma_r - sigma_{r+1}) * |direction|`` on the curvature correction."""
    direction = as_dense(direction, "direction")
    _, gap = decompose(amb, r, **kwargs)
    return gap.sigma_r_plus_1 / (gap.sigma_r - gap.sigma_r_plus_1) * float(np.linalg.norm(direction))


def best_rank_rhs(tracked: TrackedFactors, amb_dot, *, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Velocities ``(dU, dZ)`` of the factors of the best rank-r approximation."""
    p = tracked.point
    amb_dot = np.asarray(amb_dot, dtype=np.float64)
    if amb_dot.shape != p.shape:
        raise ShapeError("amb_dot shape does not match the tracked point")
    if tracked.orthogonality_defect() > tol:
        raise ValueError(
            f"tracked factors inconsistent: normal triplets not orthogonal to the point "
            f"({tracked.orthogonality_defect():.2e})"
        )
    U, Z = p.U, p.Z
    AZ = amb_dot @ Z
    dU_lin = AZ - U @ (U.T @ AZ)
    dZ = amb_dot.T @ U
    if tracked.k:
        C1, C2 = _curvature_coefficients(tracked, amb_dot)
        dU_lin = dU_lin + tracked.Un @ (C1 @ (tracked.Vt.T @ Z))
        dZ = dZ + tracked.Vn @ (C2.T @ (tracked.Ut.T @ U))
    return p.gram_solve(dU_lin), dZ


def track_best_rank(
    path: Callable[[float], tuple[np.ndarray, np.ndarray]],
    t0: float,
    t1: float,
    dt: float,
    r: int,
    *,
    record_stride: int = 1,
    eps_gap: float = config.EPS_GAP,
) -> Trajectory:
    """Integrate the best-rank-r factor ODE along ``t -> (amb(t), amb_dot(t))`` with RK4.

    The gap is monitored after every step; on collapse a
    ``SkeletonProximityError`` is raised carrying the failing time and the
    partial trajectory in its ``trajectory`` attribute.
    """
    n_steps = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / n_steps
    amb0, _ = path(t0)
    point, _ = truncate(amb0, r, eps_gap=eps_gap)
    traj = Trajectory()

    def record(t, p, amb):
        tf = tracked_from_point(p, amb)
        gap = tf.gap()
        resid = project_tangent(p, amb - p.dense()).dense()
        traj.append(
            t,
            p,
            gap_sigma_r=gap.sigma_r,
            gap_sigma_r1=gap.sigma_r_plus_1,
            residual_norm=np.linalg.norm(resid),
            reconstruction_error=np.linalg.norm(amb - p.dense()),
        )
        return gap

    def rhs(t, U, Z):
        amb, amb_dot = path(t)
        q = FixedRankPoint(U, Z)
        return best_rank_rhs(tracked_from_point(q, amb), amb_dot)

    record(t0, point, amb0)
    for n in range(1, n_steps + 1):
        t = t0 + (n - 1) * h
        U, Z = point.U, point.Z
        k1 = rhs(t, U, Z)
        k2 = rhs(t + h / 2, U + h / 2 * k1[0], Z + h / 2 * k1[1])
        k3 = rhs(t + h / 2, U + h / 2 * k2[0], Z + h / 2 * k2[1])
        k4 = rhs(t + h, U + h * k3[0], Z + h * k3[1])
        U = U + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Z = Z + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        point = gauge_fix(FixedRankPoint(U, Z))
        tn = t0 + n * h
        amb, _ = path(tn)
        tf = tracked_from_point(point, amb)
        gap = tf.gap()
        if not gap.relative_gap > eps_gap:
            err = SkeletonProximityError(gap, tn)
            err.trajectory = traj
            raise err
        if n % record_stride == 0 or n == n_steps:
            record(tn, point, amb)
    return traj

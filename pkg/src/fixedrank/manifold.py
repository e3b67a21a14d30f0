"""Embedded geometry of the manifold of l x m matrices of rank r.

Points are stored as ``R = U Z^T`` with orthonormal ``U`` (l x r) and full
rank ``Z`` (m x r).  Tangent vectors use the horizontal parameterization
``X = X_U Z^T + U X_Z^T`` with ``U^T X_U = 0``, which removes the rotation
ambiguity ``(U, Z) -> (U P, Z P)``.  The metric is the Frobenius product of
the dense values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from . import config
from .errors import BaseMismatchError, RankDeficientError, ShapeError
from .linalg import as_dense, frobenius_inner, orth_complement, svd, thin_qr

__all__ = [
    "FixedRankPoint",
    "TangentVector",
    "NormalVector",
    "CurvatureSpectrum",
    "factor_from_dense",
    "project_tangent",
    "project_normal",
    "metric",
    "christoffel",
    "weingarten",
    "curvature_spectrum",
    "covariant_derivative",
    "gauge_fix",
    "tangent_basis",
    "operator_matrix",
    "random_tangent",
    "projector_difference_norm",
]


def right_gram_solve(Z: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``M (Z^T Z)^{-1}`` without any rank check (integrator inner loops)."""
    G = Z.T @ Z
    return np.linalg.solve(G, M.T).T


@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    """A rank-r matrix in factored form ``U Z^T``."""

    U: np.ndarray
    Z: np.ndarray
    eps_rank: float = field(default=config.EPS_RANK, repr=False)

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        Z = np.asarray(self.Z, dtype=np.float64)
        if U.ndim != 2 or Z.ndim != 2 or U.shape[1] != Z.shape[1]:
            raise ShapeError(f"incompatible factor shapes U{U.shape}, Z{Z.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Z", Z)

    @property
    def l(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[0]

    @property
    def r(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.l, self.m

    def dense(self) -> np.ndarray:
        return self.U @ self.Z.T

    @cached_property
    def z_singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.Z, compute_uv=False)

    @cached_property
    def _gram_factor(self):
        s = self.z_singular_values
        if not s[-1] > self.eps_rank * s[0]:
            raise RankDeficientError(
                f"degenerate point: sigma_r(Z)={s[-1]:.3e} <= {self.eps_rank:g} * sigma_1(Z)={s[0]:.3e}"
            )
        return sla.cho_factor(self.Z.T @ self.Z)

    def gram_solve(self, M: np.ndarray) -> np.ndarray:
        """Return ``M (Z^T Z)^{-1}``."""
        return sla.cho_solve(self._gram_factor, M.T).T

    def orthonormality_defect(self) -> float:
        return float(np.linalg.norm(self.U.T @ self.U - np.eye(self.r)))

    def validate(self, tol: float = 1e-10) -> FixedRankPoint:
        if self.orthonormality_defect() > tol:
            raise RankDeficientError(f"U is not orthonormal (defect {self.orthonormality_defect():.3e})")
        self._gram_factor
        return self

    def rotated(self, P: np.ndarray) -> FixedRankPoint:
        """Same matrix in another gauge: ``(U P, Z P)`` for orthogonal P."""
        return FixedRankPoint(self.U @ P, self.Z @ P, self.eps_rank)

    def same_as(self, other: FixedRankPoint) -> bool:
        return self is other or (
            self.U.shape == other.U.shape
            and self.Z.shape == other.Z.shape
            and np.array_equal(self.U, other.U)
            and np.array_equal(self.Z, other.Z)
        )


def _check_base(a, b):
    if not a.same_as(b):
        raise BaseMismatchError("vectors are anchored at different base points")


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Horizontal pair ``(X_U, X_Z)`` at ``base``; dense value ``X_U Z^T + U X_Z^T``."""

    base: FixedRankPoint
    XU: np.ndarray
    XZ: np.ndarray

    def __post_init__(self):
        if self.XU.shape != self.base.U.shape or self.XZ.shape != self.base.Z.shape:
            raise ShapeError(
                f"tangent components {self.XU.shape}, {self.XZ.shape} do not match base "
                f"{self.base.U.shape}, {self.base.Z.shape}"
            )

    def dense(self) -> np.ndarray:
        return self.XU @ self.base.Z.T + self.base.U @ self.XZ.T

    def horizontality_defect(self) -> float:
        return float(np.linalg.norm(self.base.U.T @ self.XU))

    def norm(self) -> float:
        return float(np.sqrt(max(metric(self, self), 0.0)))

    def __add__(self, other: TangentVector) -> TangentVector:
        _check_base(self.base, other.base)
        return TangentVector(self.base, self.XU + other.XU, self.XZ + other.XZ)

    def __sub__(self, other: TangentVector) -> TangentVector:
        _check_base(self.base, other.base)
        return TangentVector(self.base, self.XU - other.XU, self.XZ - other.XZ)

    def __mul__(self, c: float) -> TangentVector:
        return TangentVector(self.base, c * self.XU, c * self.XZ)

    __rmul__ = __mul__

    def __neg__(self) -> TangentVector:
        return TangentVector(self.base, -self.XU, -self.XZ)

    @classmethod
    def zero(cls, base: FixedRankPoint) -> TangentVector:
        return cls(base, np.zeros_like(base.U), np.zeros_like(base.Z))


@dataclass(frozen=True, eq=False)
class NormalVector:
    """Matrix ``N`` with ``U^T N = 0`` and ``N Z = 0`` at ``base``."""

    base: FixedRankPoint
    N: np.ndarray

    def __post_init__(self):
        if self.N.shape != self.base.shape:
            raise ShapeError(f"normal vector shape {self.N.shape} does not match base {self.base.shape}")

    def dense(self) -> np.ndarray:
        return self.N

    def normality_defect(self) -> float:
        """``max(|U^T N|, |N Z| / |Z|) / |N|`` (0 for N = 0)."""
        nN = np.linalg.norm(self.N)
        if nN == 0.0:
            return 0.0
        zn = np.linalg.norm(self.base.Z)
        return float(max(np.linalg.norm(self.base.U.T @ self.N), np.linalg.norm(self.N @ self.base.Z) / zn) / nN)


@dataclass(frozen=True)
class CurvatureSpectrum:
    """Nonzero principal curvatures with unit principal directions."""

    entries: list[tuple[float, TangentVector]]
    nonzero_count: int

    @property
    def kappas(self) -> np.ndarray:
        return np.array([k for k, _ in self.entries])


def factor_from_dense(R, r: int, *, eps_rank: float = config.EPS_RANK) -> FixedRankPoint:
    """Factor the best rank-r part of ``R`` as ``U Z^T`` with ``Z = V_r diag(sigma_1..r)``."""
    R = as_dense(R, "R")
    if not 1 <= r <= min(R.shape):
        raise ShapeError(f"rank {r} out of range for shape {R.shape}")
    f = svd(R)
    if not f.sigma[r - 1] > eps_rank * f.sigma[0]:
        raise RankDeficientError(
            f"rank-deficient input: sigma_{r}={f.sigma[r - 1]:.3e}, sigma_1={f.sigma[0]:.3e}"
        )
    return FixedRankPoint(f.U[:, :r].copy(), f.V[:, :r] * f.sigma[:r], eps_rank)


def project_tangent(base: FixedRankPoint, amb) -> TangentVector:
    """Frobenius-orthogonal projection of ``amb`` onto the tangent space at ``base``."""
    amb = np.asarray(amb, dtype=np.float64)
    if amb.shape != base.shape:
        raise ShapeError(f"ambient shape {amb.shape} does not match base {base.shape}")
    U, Z = base.U, base.Z
    AZ = amb @ Z
    XU = base.gram_solve(AZ - U @ (U.T @ AZ))
    XZ = amb.T @ U
    return TangentVector(base, XU, XZ)


def project_normal(base: FixedRankPoint, amb) -> NormalVector:
    """``(I - U U^T) amb (I - Z (Z^T Z)^{-1} Z^T)``."""
    amb = np.asarray(amb, dtype=np.float64)
    if amb.shape != base.shape:
        raise ShapeError(f"ambient shape {amb.shape} does not match base {base.shape}")
    U, Z = base.U, base.Z
    A1 = amb - U @ (U.T @ amb)
    N = A1 - base.gram_solve(A1 @ Z) @ Z.T
    return NormalVector(base, N)


def metric(X: TangentVector, Y: TangentVector) -> float:
    """``Tr(Z^T Z X_U^T Y_U + X_Z^T Y_Z)``."""
    _check_base(X.base, Y.base)
    Z = X.base.Z
    return float(np.vdot(X.XU @ (Z.T @ Z), Y.XU) + np.vdot(X.XZ, Y.XZ))


def christoffel(X: TangentVector, Y: TangentVector) -> NormalVector:
    """``Gamma(X, Y) = -(I - Pi_T)(X_U Y_Z^T + Y_U X_Z^T)``."""
    _check_base(X.base, Y.base)
    S = X.XU @ Y.XZ.T + Y.XU @ X.XZ.T
    return NormalVector(X.base, -project_normal(X.base, S).N)


def weingarten(base: FixedRankPoint, N: NormalVector, X: TangentVector) -> TangentVector:
    """Weingarten map ``L_R(N) X = (N X_Z (Z^T Z)^{-1}, N^T X_U)``."""
    _check_base(base, N.base)
    _check_base(base, X.base)
    return TangentVector(base, base.gram_solve(N.N @ X.XZ), N.N.T @ X.XU)


def curvature_spectrum(
    base: FixedRankPoint, N: NormalVector, *, eps_rank: float = config.EPS_RANK
) -> CurvatureSpectrum:
    """Nonzero principal curvatures ``+-sigma_{r+j} / sigma_i`` and their directions.

    ``sigma_i, u_i, v_i`` come from the SVD of ``dense(base)``; the normal
    triplets from the SVD of ``N``, keeping those above ``eps_rank * sigma_1(N)``.
    """
    _check_base(base, N.base)
    r = base.r
    top = svd(base.dense())
    s, Ur, Vr = top.sigma[:r], top.U[:, :r], top.V[:, :r]
    nf = svd(N.N)
    if nf.sigma[0] == 0.0:
        return CurvatureSpectrum([], 0)
    keep = nf.sigma > eps_rank * nf.sigma[0]
    t, Un, Vn = nf.sigma[keep], nf.U[:, keep], nf.V[:, keep]
    entries = []
    root2 = np.sqrt(2.0)
    for i in range(r):
        for j in range(t.size):
            a = np.outer(Un[:, j], Vr[:, i])
            b = np.outer(Ur[:, i], Vn[:, j])
            kappa = t[j] / s[i]
            entries.append((kappa, project_tangent(base, (a + b) / root2)))
            entries.append((-kappa, project_tangent(base, (a - b) / root2)))
    return CurvatureSpectrum(entries, len(entries))


def covariant_derivative(X: TangentVector, Y: TangentVector, dY_U, dY_Z) -> TangentVector:
    """Levi-Civita derivative of the field Y along X.

    ``dY_U`` and ``dY_Z`` are the ordinary directional derivatives of the
    field components along X, supplied by the caller.
    """
    _check_base(X.base, Y.base)
    base = X.base
    U, Z = base.U, base.Z
    dY_U = np.asarray(dY_U, dtype=np.float64)
    dY_Z = np.asarray(dY_Z, dtype=np.float64)
    if dY_U.shape != U.shape or dY_Z.shape != Z.shape:
        raise ShapeError("directional derivative shapes do not match the base")
    S = X.XU @ Y.XZ.T + Y.XU @ X.XZ.T
    cU = dY_U + U @ (X.XU.T @ Y.XU) + base.gram_solve(S @ Z)
    cZ = dY_Z - Z @ (Y.XU.T @ X.XU)
    cU = cU - U @ (U.T @ cU)
    return TangentVector(base, cU, cZ)


def gauge_fix(p: FixedRankPoint, *, max_defect: float = config.GAUGE_PRECONDITION) -> FixedRankPoint:
    """Re-orthonormalize U by QR and absorb the triangular factor into Z."""
    defect = np.linalg.norm(p.U.T @ p.U - np.eye(p.r), 2)
    if defect > max_defect:
        raise RankDeficientError(f"gauge_fix precondition violated: |U^T U - I| = {defect:.3e}")
    Q, Rf = thin_qr(p.U)
    d = np.abs(np.diag(Rf))
    if d.min() <= config.EPS_RANK * d.max():
        raise RankDeficientError("U is numerically rank deficient")
    return FixedRankPoint(Q, p.Z @ Rf.T, p.eps_rank)


def tangent_basis(base: FixedRankPoint) -> np.ndarray:
    """Orthonormal basis of the tangent space as a ``(dim, l, m)`` array.

    ``dim = (l + m) r - r^2``.
    """
    U, Z = base.U, base.Z
    Uc = orth_complement(U)
    Qz, _ = thin_qr(Z)
    Vfull = np.hstack([Qz, orth_complement(Qz)])
    first = np.einsum("ia,jb->abij", U, Vfull).reshape(-1, base.l, base.m)
    second = np.einsum("ic,jb->cbij", Uc, Qz).reshape(-1, base.l, base.m)
    return np.concatenate([first, second])


def operator_matrix(base: FixedRankPoint, op, basis: np.ndarray | None = None) -> np.ndarray:
    """Matrix of a tangent-space linear map ``op`` in the orthonormal ``tangent_basis``."""
    if basis is None:
        basis = tangent_basis(base)
    images = np.stack([op(project_tangent(base, E)).dense() for E in basis])
    return np.einsum("aij,bij->ab", basis, images)


def random_tangent(base: FixedRankPoint, rng: np.random.Generator) -> TangentVector:
    """Tangent projection of a standard-normal ambient matrix."""
    return project_tangent(base, rng.standard_normal(base.shape))


def projector_difference_norm(
    p1: FixedRankPoint, p2: FixedRankPoint, *, iters: int = 200, rng: np.random.Generator | None = None
) -> float:
    """Operator norm of ``Pi_T(p1) - Pi_T(p2)`` by power iteration.

    The difference of two orthogonal projectors is symmetric, so iterating it
    converges to its eigenvalue of largest magnitude.
    """
    if p1.shape != p2.shape:
        raise ShapeError("points live in different ambient spaces")
    rng = np.random.default_rng(0) if rng is None else rng

    def apply(A):
        return project_tangent(p1, A).dense() - project_tangent(p2, A).dense()

    x = rng.standard_normal(p1.shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = apply(x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        est = ny
        x = y / ny
    return float(est)

"""Dense linear-algebra substrate.

The SVD is a one-sided (Hestenes) Jacobi kernel using a round-robin pair
ordering so that each round of disjoint rotations is applied as one
vectorized numpy update.  One-sided Jacobi computes small singular values to
high relative accuracy, which matters because curvatures scale like
``1 / sigma_r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import config
from .errors import ShapeError, SvdConvergenceError, SylvesterError

__all__ = [
    "SvdFactorization",
    "as_dense",
    "svd",
    "thin_qr",
    "frobenius_inner",
    "solve_sylvester",
    "orth_complement",
]


def as_dense(A, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be two-dimensional, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ShapeError(f"{name} must be non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return A


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD ``A = U diag(sigma) V^T`` with p = min(l, m) triplets."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@lru_cache(maxsize=64)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    # Circle method; index n (when n is odd) is a bye.
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        p, q = [], []
        for k in range(size // 2):
            a, b = players[k], players[size - 1 - k]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.intp), np.array(q, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _jacobi_columns(W: np.ndarray, tol: float, max_sweeps: int):
    """Orthogonalize the columns of ``W`` in place; returns the accumulated rotation."""
    n = W.shape[1]
    V = np.eye(n)
    rounds = _round_robin(n)
    worst = 0.0
    for _ in range(max_sweeps):
        rotated = False
        worst = 0.0
        for p, q in rounds:
            Wp, Wq = W[:, p], W[:, q]
            alpha = np.einsum("ij,ij->j", Wp, Wp)
            beta = np.einsum("ij,ij->j", Wq, Wq)
            gamma = np.einsum("ij,ij->j", Wp, Wq)
            scale = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                off = np.where(scale > 0.0, np.abs(gamma) / scale, 0.0)
            worst = max(worst, float(off.max(initial=0.0)))
            active = off > tol
            if not np.any(active):
                continue
            rotated = True
            p, q = p[active], q[active]
            Wp, Wq = Wp[:, active], Wq[:, active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            W[:, p] = c * Wp - s * Wq
            W[:, q] = s * Wp + c * Wq
            Vp, Vq = V[:, p], V[:, q]
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
        if not rotated:
            return V
    raise SvdConvergenceError(max_sweeps, worst)


def _complete_basis(U: np.ndarray, missing: np.ndarray) -> None:
    """Fill the columns ``missing`` of U with unit vectors orthogonal to the rest."""
    l = U.shape[0]
    keep = np.setdiff1d(np.arange(U.shape[1]), missing)
    basis = [U[:, j] for j in keep]
    candidates = iter(range(l))
    for j in missing:
        while True:
            e = np.zeros(l)
            e[next(candidates)] = 1.0
            for _ in range(2):
                for b in basis:
                    e -= (b @ e) * b
            norm = np.linalg.norm(e)
            if norm > 0.5:
                e /= norm
                break
        U[:, j] = e
        basis.append(e)


def svd(A, *, tol: float = config.SVD_TOL, max_sweeps: int = config.SVD_MAX_SWEEPS) -> SvdFactorization:
    """Thin SVD by one-sided Jacobi.

    Singular values are returned in descending order.  Signs are fixed so
    that the largest-magnitude entry of every left singular vector (lowest
    row index on ties) is nonnegative; the right vector follows.

    Raises
    ------
    SvdConvergenceError
        If some column pair still has relative Gram coupling above ``tol``
        after ``max_sweeps`` sweeps.
    """
    A = as_dense(A)
    l, m = A.shape
    transposed = l < m
    W = (A.T if transposed else A).copy()
    V = _jacobi_columns(W, tol, max_sweeps)

    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    W = W[:, order]
    V = V[:, order]
    tiny = np.finfo(np.float64).tiny / np.finfo(np.float64).eps
    zero = sigma <= tiny
    U = np.zeros_like(W)
    U[:, ~zero] = W[:, ~zero] / sigma[~zero]
    if np.any(zero):
        sigma[zero] = 0.0
        _complete_basis(U, np.flatnonzero(zero))

    if transposed:
        U, V = V, U
    rows = np.argmax(np.abs(U), axis=0)
    flip = U[rows, np.arange(U.shape[1])] < 0.0
    U[:, flip] *= -1.0
    V[:, flip] *= -1.0
    return SvdFactorization(U=U, sigma=sigma, V=V)


def thin_qr(A) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a nonnegative diagonal in the triangular factor."""
    A = as_dense(A)
    if A.shape[1] > A.shape[0]:
        raise ShapeError(f"thin_qr needs cols <= rows, got shape {A.shape}")
    Q, Rf = np.linalg.qr(A, mode="reduced")
    d = np.where(np.diag(Rf) < 0.0, -1.0, 1.0)
    return Q * d, Rf * d[:, None]


def orth_complement(U: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(U) (U orthonormal)."""
    l, r = U.shape
    Q = np.linalg.qr(U, mode="complete")[0]
    return Q[:, r:]


def frobenius_inner(A, B) -> float:
    """``Tr(A^T B)``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch in Frobenius product: {A.shape} vs {B.shape}")
    return float(np.vdot(A, B))


def solve_sylvester(A_spd, M_psd, C, *, sep_tol: float = config.SYLVESTER_SEP) -> np.ndarray:
    """Solve ``X A - M X = C`` for symmetric A (r x r) and M (l' x l').

    Both operands are diagonalized with ``eigh``; in the eigenbases the
    equation decouples entrywise into ``Y_ij (a_j - mu_i) = C'_ij``.
    The solve is refused when ``min |a_j - mu_i|`` drops below
    ``sep_tol * max(1, |a|_max, |mu|_max)``.
    """
    A = as_dense(A_spd, "A")
    M = as_dense(M_psd, "M")
    C = as_dense(C, "C")
    r = A.shape[0]
    lp = M.shape[0]
    if A.shape != (r, r) or M.shape != (lp, lp) or C.shape != (lp, r):
        raise ShapeError(f"incompatible Sylvester shapes A{A.shape} M{M.shape} C{C.shape}")
    a, P = np.linalg.eigh(0.5 * (A + A.T))
    mu, Q = np.linalg.eigh(0.5 * (M + M.T))
    denom = a[None, :] - mu[:, None]
    i, j = np.unravel_index(np.argmin(np.abs(denom)), denom.shape)
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(mu).max()))
    if abs(denom[i, j]) <= sep_tol * scale:
        raise SylvesterError(float(a[j]), float(mu[i]), float(abs(denom[i, j])))
    Y = (Q.T @ C @ P) / denom
    return Q @ Y @ P.T

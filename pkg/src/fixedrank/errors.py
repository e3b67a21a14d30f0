"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class LowRankError(Exception):
    """Base class for all numerical failures raised by this package."""


class ShapeError(LowRankError, ValueError):
    """Operands have incompatible shapes."""


class SvdConvergenceError(LowRankError):
    """The Jacobi SVD kernel hit its sweep limit before converging."""

    def __init__(self, sweeps: int, residual: float):
        super().__init__(
            f"one-sided Jacobi SVD did not converge after {sweeps} sweeps "
            f"(max relative off-diagonal {residual:.3e})"
        )
        self.sweeps = sweeps
        self.residual = residual


class SylvesterError(LowRankError):
    """Spectra of the two Sylvester operands are not separated."""

    def __init__(self, a_eig: float, m_eig: float, separation: float):
        super().__init__(
            f"near-singular Sylvester equation: eigenvalue {a_eig:.6e} of A "
            f"and {m_eig:.6e} of M are {separation:.3e} apart"
        )
        self.a_eig = a_eig
        self.m_eig = m_eig
        self.separation = separation


class RankDeficientError(LowRankError):
    """A matrix expected to have rank r is numerically rank deficient."""


class BaseMismatchError(LowRankError):
    """Tangent or normal vectors anchored at different points were combined."""


class GeodesicError(LowRankError):
    """The geodesic integrator left the manifold (rank collapse)."""

    def __init__(self, time: float, sigma_min: float):
        super().__init__(
            f"geodesic left the manifold at t={time:.6g} "
            f"(sigma_min(Z)={sigma_min:.3e})"
        )
        self.time = time
        self.sigma_min = sigma_min


class SkeletonProximityError(LowRankError):
    """The matrix lies on (or too close to) the set sigma_r = sigma_{r+1}."""

    def __init__(self, gap, time: float | None = None):
        where = "" if time is None else f" at t={time:.6g}"
        super().__init__(
            f"skeleton proximity{where}: sigma_r={gap.sigma_r:.6e}, "
            f"sigma_r+1={gap.sigma_r_plus_1:.6e}, relative gap={gap.relative_gap:.3e}"
        )
        self.gap = gap
        self.time = time


class DivergenceError(LowRankError):
    """A time integration produced non-finite or overflowing values."""

    def __init__(self, time: float):
        super().__init__(f"integration diverged at t={time:.6g}")
        self.time = time


class LineSearchError(LowRankError):
    """Armijo backtracking exhausted its trial budget."""


class FormatError(LowRankError, ValueError):
    """A matrix, point or descriptor file could not be parsed."""

    def __init__(self, path, message: str, line: int | None = None):
        where = f"{path}" if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line

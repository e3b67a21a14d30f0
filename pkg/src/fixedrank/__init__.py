"""Geometry, projection, dynamics and optimization on the manifold of fixed-rank matrices."""

from .dynamics import DoRunConfig, VectorField, dense_reference, do_rhs, evaluate_error_bound, integrate_do
from .errors import (
    BaseMismatchError,
    DivergenceError,
    FormatError,
    GeodesicError,
    LineSearchError,
    LowRankError,
    RankDeficientError,
    ShapeError,
    SkeletonProximityError,
    SvdConvergenceError,
    SylvesterError,
)
from .geodesic import exp_map, geodesic_path
from .linalg import SvdFactorization, frobenius_inner, solve_sylvester, svd, thin_qr
from .manifold import (
    CurvatureSpectrum,
    FixedRankPoint,
    NormalVector,
    TangentVector,
    christoffel,
    covariant_derivative,
    curvature_spectrum,
    gauge_fix,
    metric,
    project_normal,
    project_tangent,
    weingarten,
)
from .optim import OptimConfig, OptimTrace, distance_J, grad_J, gradient_flow, hess_J_apply, minimize, newton_direction
from .projection import GapReport, best_rank_rhs, deviation_bound, differential, track_best_rank, truncate
from .trajectory import Trajectory

__version__ = "0.1.0"

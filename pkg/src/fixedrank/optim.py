"""Riemannian minimization of ``J(R) = 1/2 |R - target|^2`` over rank-r matrices.

Gradient descent, Fletcher-Reeves conjugate gradient and Newton's method
share one driver, ``minimize``.  Iterates move along geodesics (the
exponential map with a short integrator).  ``gradient_flow`` integrates the
continuous steepest-descent ODE, whose only stable equilibrium is the
truncated SVD of the target.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config
from .errors import BaseMismatchError, GeodesicError, LineSearchError, RankDeficientError, ShapeError, SylvesterError
from .geodesic import exp_map
from .linalg import as_dense, solve_sylvester, svd, thin_qr
from .manifold import (
    FixedRankPoint,
    TangentVector,
    gauge_fix,
    metric,
    project_tangent,
    random_tangent,
    right_gram_solve,
)
from .trajectory import Trajectory, format_real

__all__ = [
    "OptimConfig",
    "OptimTrace",
    "distance_J",
    "grad_J",
    "hess_J_apply",
    "newton_direction",
    "saddle_probe",
    "random_init",
    "minimize",
    "gradient_flow",
]

TRACE_COLUMNS = ("iter", "J", "grad_norm", "step_size", "status")


@dataclass(frozen=True)
class OptimConfig:
    """Settings for ``minimize``.

    ``step_rule`` is ``"fixed"`` (step ``alpha``) or ``"armijo"`` (start at
    ``alpha0``, shrink by ``beta`` until the sufficient-decrease constant
    ``c`` is met).  Newton always tries the full step first.
    """

    method: str = "gd"
    step_rule: str = "armijo"
    alpha: float = 0.5
    alpha0: float = 1.0
    beta: float = 0.5
    c: float = 1e-4
    max_iters: int = 5000
    grad_tol: float = 1e-8
    max_backtracks: int = 60
    retraction_steps: int = config.RETRACTION_STEPS
    restart_every: int | None = None
    saddle_probes: int = 10
    strict_line_search: bool = False
    record_trace: bool = True

    def __post_init__(self):
        if self.method not in ("gd", "cg", "newton"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.step_rule not in ("fixed", "armijo"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not (self.alpha > 0 and self.alpha0 > 0 and self.grad_tol > 0 and self.max_iters >= 0):
            raise ValueError("step sizes, tolerance and iteration budget must be positive")
        if not (0 < self.beta < 1 and 0 < self.c < 1):
            raise ValueError("armijo parameters must satisfy 0 < beta, c < 1")


@dataclass
class OptimTrace:
    iters: list[int] = field(default_factory=list)
    J: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    step_size: list[float] = field(default_factory=list)
    status: str = "running"
    min_rayleigh: float | None = None

    def record(self, k: int, J: float, g: float, step: float) -> None:
        self.iters.append(k)
        self.J.append(float(J))
        self.grad_norm.append(float(g))
        self.step_size.append(float(step))

    def __len__(self) -> int:
        return len(self.iters)

    def write_csv(self, path) -> None:
        """One row per iterate; the last row carries the terminal status."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            n = len(self.iters)
            for i in range(n):
                st = self.status if i == n - 1 else "iterate"
                w.writerow([self.iters[i], format_real(self.J[i]), format_real(self.grad_norm[i]),
                            format_real(self.step_size[i]), st])


def _target(p: FixedRankPoint, target) -> np.ndarray:
    target = as_dense(target, "target")
    if target.shape != p.shape:
        raise ShapeError(f"target shape {target.shape} does not match point shape {p.shape}")
    return target


def distance_J(p: FixedRankPoint, target) -> float:
    D = p.dense() - _target(p, target)
    return 0.5 * float(np.vdot(D, D))


def grad_J(p: FixedRankPoint, target) -> TangentVector:
    """Riemannian gradient: tangent projection of ``R - target``."""
    return project_tangent(p, p.dense() - _target(p, target))


def _normal_part(p: FixedRankPoint, target: np.ndarray) -> np.ndarray:
    """``(I - U U^T) target (I - Z G^{-1} Z^T)``."""
    U, Z = p.U, p.Z
    T = target - U @ (U.T @ target)
    return T - p.gram_solve(T @ Z) @ Z.T


def hess_J_apply(p: FixedRankPoint, target, X: TangentVector) -> TangentVector:
    """Riemannian Hessian of J applied to X: ``(X_U - N X_Z G^{-1}, X_Z - N^T X_U)``."""
    if not X.base.same_as(p):
        raise BaseMismatchError("tangent vector is anchored at a different point")
    N = _normal_part(p, _target(p, target))
    return TangentVector(p, X.XU - p.gram_solve(N @ X.XZ), X.XZ - N.T @ X.XU)


def newton_direction(p: FixedRankPoint, target, *, sep_tol: float = config.SYLVESTER_SEP) -> TangentVector:
    """Solve ``Hess J [X] = -grad J`` through a Sylvester equation.

    With ``A = Z^T Z``, ``B = -N``, ``E = (I - U U^T) target Z`` and
    ``F = target^T U - Z``, ``X_U`` solves ``X_U A - B B^T X_U = E - B F``
    and ``X_Z = F - B^T X_U``.

    Raises
    ------
    SylvesterError
        When the spectra of ``Z^T Z`` and ``N N^T`` are not separated.
    """
    target = _target(p, target)
    U, Z = p.U, p.Z
    N = _normal_part(p, target)
    TZ = target @ Z
    E = TZ - U @ (U.T @ TZ)
    F = target.T @ U - Z
    XU = solve_sylvester(Z.T @ Z, N @ N.T, E + N @ F, sep_tol=sep_tol)
    XU = XU - U @ (U.T @ XU)
    return TangentVector(p, XU, F + N.T @ XU)


def saddle_probe(p: FixedRankPoint, target, rng: np.random.Generator, n_probes: int = 10) -> float:
    """Smallest Hessian Rayleigh quotient over a few probe directions.

    The first probe pairs the weakest retained singular triplet of R with the
    strongest singular triplet of the normal residual, the direction of
    largest curvature and hence of most negative Hessian curvature at a
    critical point; the remaining probes are random.
    """
    target = _target(p, target)
    probes = []
    N = _normal_part(p, target)
    if np.any(N):
        fz = svd(p.Z)
        u_r = p.U @ fz.V[:, -1]
        v_r = fz.U[:, -1]
        fn = svd(N)
        phi = (np.outer(fn.U[:, 0], v_r) + np.outer(u_r, fn.V[:, 0])) / np.sqrt(2.0)
        probes.append(project_tangent(p, phi))
    while len(probes) < n_probes:
        probes.append(random_tangent(p, rng))
    best = np.inf
    for X in probes:
        nx = metric(X, X)
        if nx > 0:
            best = min(best, metric(hess_J_apply(p, target, X), X) / nx)
    return float(best)


def random_init(target, r: int, rng: np.random.Generator) -> FixedRankPoint:
    """Seeded start: orthonormal U from QR, Z Gaussian scaled to ``|target| / sqrt(r)``."""
    target = as_dense(target, "target")
    l, m = target.shape
    U, _ = thin_qr(rng.standard_normal((l, r)))
    Z = rng.standard_normal((m, r))
    Z *= np.linalg.norm(target) / np.sqrt(r) / np.linalg.norm(Z)
    return FixedRankPoint(U, Z)


def _decrease(R: np.ndarray, Rn: np.ndarray, resid: np.ndarray) -> float:
    # J(Rn) - J(R) without cancellation between two large values of J.
    D = Rn - R
    return float(np.vdot(D, resid) + 0.5 * np.vdot(D, D))


def _step(p, d, alpha, n_steps):
    return exp_map(p, d * alpha, n_steps)[0]


def minimize(
    target,
    r: int,
    init: FixedRankPoint | None = None,
    cfg: OptimConfig = OptimConfig(),
    *,
    rng: np.random.Generator | None = None,
    callback=None,
) -> tuple[FixedRankPoint, OptimTrace]:
    """Minimize J from ``init`` (or a seeded random start) with the configured method.

    Terminal status is ``converged`` (``|grad J| <= grad_tol``),
    ``saddle_detected`` (converged, but a Hessian probe is negative),
    ``max_iters`` or ``stalled`` (line search exhausted at the rounding
    floor).  ``callback(k, point)`` is invoked on every iterate.

    The Armijo test compares the decrease against ``c * alpha * <grad, d>``
    with a slack of a few ulps of the residual size, since near convergence
    the true decrease is far below the rounding error of J itself.
    """
    target = as_dense(target, "target")
    l, m = target.shape
    if not 1 <= r <= min(l, m):
        raise ShapeError(f"rank {r} out of range for shape {target.shape}")
    rng = np.random.default_rng(0) if rng is None else rng
    p = random_init(target, r, rng) if init is None else init
    if p.shape != target.shape or p.r != r:
        raise ShapeError("initial point does not match target shape and rank")

    trace = OptimTrace()
    restart = cfg.restart_every or min(l, m) * r
    d_prev = None
    g_prev_sq = None
    since_restart = 0
    eps = np.finfo(float).eps
    step = 0.0

    for k in range(cfg.max_iters + 1):
        R = p.dense()
        resid = R - target
        g = project_tangent(p, resid)
        gn = g.norm()
        J = 0.5 * float(np.vdot(resid, resid))
        if cfg.record_trace:
            trace.record(k, J, gn, step)
        if callback is not None:
            callback(k, p)
        if gn <= cfg.grad_tol:
            trace.status = "converged"
            trace.min_rayleigh = saddle_probe(p, target, rng, cfg.saddle_probes)
            if trace.min_rayleigh < -1e-10:
                trace.status = "saddle_detected"
            break
        if k == cfg.max_iters:
            trace.status = "max_iters"
            break

        full_step = False
        if cfg.method == "newton":
            try:
                d = newton_direction(p, target)
                full_step = True
            except SylvesterError:
                d = -g
        elif cfg.method == "cg" and d_prev is not None and since_restart < restart:
            beta = gn**2 / g_prev_sq
            d = -g + project_tangent(p, d_prev.dense()) * beta
            if metric(d, g) >= 0.0:
                d, since_restart = -g, 0
        else:
            d, since_restart = -g, 0

        slope = metric(g, d)
        noise = 64.0 * eps * (1.0 + np.linalg.norm(R)) * (1.0 + np.linalg.norm(resid))
        if full_step:
            alpha = 1.0
            try:
                p_new = _step(p, d, alpha, cfg.retraction_steps)
            except GeodesicError:
                d, full_step = -g, False
                slope = -(gn**2)
        if not full_step and cfg.step_rule == "fixed":
            alpha = cfg.alpha
            p_new = _step(p, d, alpha, cfg.retraction_steps)
        elif not full_step:
            alpha = cfg.alpha0
            p_new = None
            for _ in range(cfg.max_backtracks):
                try:
                    cand = _step(p, d, alpha, cfg.retraction_steps)
                except (GeodesicError, RankDeficientError):
                    alpha *= cfg.beta
                    continue
                if _decrease(R, cand.dense(), resid) <= cfg.c * alpha * slope + noise:
                    p_new = cand
                    break
                alpha *= cfg.beta
            if p_new is None:
                if cfg.strict_line_search:
                    raise LineSearchError(f"armijo backtracking exhausted at iteration {k} (|grad|={gn:.3e})")
                trace.status = "stalled"
                break
        if cfg.method == "cg":
            d_prev, g_prev_sq = d * alpha, gn**2
            since_restart += 1
        p = p_new
        step = alpha
    return p, trace


def _flow_rhs(target, U, Z):
    TZ = target @ Z
    return right_gram_solve(Z, TZ - U @ (U.T @ TZ)), target.T @ U - Z


def gradient_flow(
    target,
    r: int,
    init: FixedRankPoint,
    dt: float,
    t1: float,
    *,
    record_stride: int = 1,
) -> Trajectory:
    """RK4 integration of the steepest-descent flow of J, gauge-fixed every step.

    ``U' = (I - U U^T) target Z (Z^T Z)^{-1}``, ``Z' = target^T U - Z``.
    Diagnostics ``J`` and ``grad_norm`` are recorded per sample.

    Raises
    ------
    RankDeficientError
        If the flow drives ``Z`` to numerical rank deficiency.
    """
    target = _target(init, target)
    if init.r != r:
        raise ShapeError("initial point rank differs from r")
    n_steps = max(1, int(round(t1 / dt)))
    h = t1 / n_steps
    traj = Trajectory()

    def rec(t, p):
        resid = p.dense() - target
        traj.append(t, p, J=0.5 * float(np.vdot(resid, resid)), grad_norm=project_tangent(p, resid).norm())

    p = init
    rec(0.0, p)
    for n in range(1, n_steps + 1):
        U, Z = p.U, p.Z
        try:
            k1 = _flow_rhs(target, U, Z)
            k2 = _flow_rhs(target, U + h / 2 * k1[0], Z + h / 2 * k1[1])
            k3 = _flow_rhs(target, U + h / 2 * k2[0], Z + h / 2 * k2[1])
            k4 = _flow_rhs(target, U + h * k3[0], Z + h * k3[1])
        except np.linalg.LinAlgError:
            raise RankDeficientError(f"gradient flow lost rank at t={n * h:.6g}") from None
        U = U + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Z = Z + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        p = gauge_fix(FixedRankPoint(U, Z, init.eps_rank))
        s = p.z_singular_values
        if not s[-1] > p.eps_rank * s[0]:
            raise RankDeficientError(f"gradient flow lost rank at t={n * h:.6g}")
        if n % record_stride == 0 or n == n_steps:
            rec(n * h, p)
    return traj

import numpy as np
from hypothesis import HealthCheck, settings

from fixedrank.instances import random_point
from fixedrank.manifold import project_tangent, random_tangent
from fixedrank.rng import make_rng

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")


def point_and_rng(seed, l=6, m=5, r=2):
    rng = make_rng(seed)
    return random_point(rng, l, m, r), rng


def rel(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


def scaled_tangent(p, rng, size):
    X = random_tangent(p, rng)
    return X * (size / X.norm())


def tangential_acceleration_residual(times, points) -> float:
    """Largest ``|Pi_T(R'')| / |R''|`` from a fourth-order stencil on the sampled path."""
    R = np.stack([q.dense() for q in points])
    h = times[1] - times[0]
    worst = 0.0
    for k in range(2, len(times) - 2):
        acc = (-R[k + 2] + 16 * R[k + 1] - 30 * R[k] + 16 * R[k - 1] - R[k - 2]) / (12 * h * h)
        worst = max(worst, np.linalg.norm(project_tangent(points[k], acc).dense()) / np.linalg.norm(acc))
    return worst


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

"""Default numerical tolerances. Every public routine takes them as keyword overrides."""

EPS_RANK = 1e-12
"""sigma_r(Z) must exceed EPS_RANK * sigma_1(Z) for a point to be on the manifold."""

EPS_GAP = 1e-10
"""Minimum relative gap (sigma_r - sigma_{r+1}) / sigma_1 for truncation to be well posed."""

SVD_TOL = 1e-14
SVD_MAX_SWEEPS = 60

SYLVESTER_SEP = 1e-12
"""Relative spectral separation below which the Sylvester solve is refused."""

NORMAL_TRIPLET_CUTOFF = 1e-14
"""Normal singular triplets below this fraction of sigma_1 are dropped from sums."""

GAUGE_PRECONDITION = 0.1
GEODESIC_STEPS = 64
RETRACTION_STEPS = 16

"""Numerical tolerances and resource caps shared across the package."""

from __future__ import annotations

import math
import os

LN2 = math.log(2.0)

# Hermiticity is checked relative to the largest entry magnitude.
TOL_HERM_REL = 1e-10
# Eigenvalues above -TOL_PSD are accepted as "nonnegative".
TOL_PSD = 1e-9
# Relative eigenvalue cutoff deciding numerical rank / support membership.
TOL_RANK = 1e-9
# Trace-one tolerance for density operators.
TOL_TRACE = 1e-9

# Default cap on total Hilbert-space dimension of any constructed operator.
DEFAULT_DIM_CAP = 256

# Interior smoothing weight used inside gradient evaluations when an
# output operator is rank deficient (values are recomputed unsmoothed).
GRAD_SMOOTHING = 1e-8


def dim_cap() -> int:
    """Resource cap on operator dimension; DIVLAB_DIM_CAP overrides it."""
    raw = os.environ.get("DIVLAB_DIM_CAP")
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"DIVLAB_DIM_CAP must be an integer, got {raw!r}") from exc
    if cap < 2:
        raise ValueError(f"DIVLAB_DIM_CAP must be >= 2, got {cap}")
    return cap

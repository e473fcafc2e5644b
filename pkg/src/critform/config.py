"""Default tolerances and environment overrides."""
from __future__ import annotations

import os

# Every threshold that gates a verdict lives here so reports can echo it.
DEFAULT_TOLERANCES: dict[str, float] = {
    "tol_psd": 1e-10,    # nonnegativity slack, relative to an operator-norm bound
    "tol_ineq": 1e-10,   # inequality slack, absolute after unit-measure normalization
    "tol_solve": 1e-9,   # linear-solve relative residual
    "tol_green": 1e-8,   # relative stabilization of the vanishing-shift trace
    "tol_cap": 1e-6,     # capacity floor below which the limit counts as zero
    "tol_gs": 1e-6,      # ground-state window stabilization
    "tol_eig": 1e-8,     # certificate slack for pencil eigenvalues
    "tol_exc": 1e-8,     # excessivity residual slack
}

ENV_PREFIX = "CRITFORM_TOL_"
ENV_THREADS = "CRITFORM_THREADS"


def env_overrides() -> dict[str, float | int]:
    """Collect recognized environment overrides (echoed into reports)."""
    found: dict[str, float | int] = {}
    for key in DEFAULT_TOLERANCES:
        raw = os.environ.get(ENV_PREFIX + key[len("tol_"):].upper())
        if raw is not None:
            found[key] = float(raw)
    threads = os.environ.get(ENV_THREADS)
    if threads is not None:
        found["threads"] = int(threads)
    return found


def tolerances(overrides: dict[str, float] | None = None) -> dict[str, float]:
    """Resolved tolerance table: defaults, then environment, then explicit overrides."""
    tols = dict(DEFAULT_TOLERANCES)
    for key, val in env_overrides().items():
        if key in tols:
            tols[key] = float(val)
    if overrides:
        for key, val in overrides.items():
            if key not in tols:
                raise KeyError(f"unknown tolerance key: {key!r}")
            tols[key] = float(val)
    return tols

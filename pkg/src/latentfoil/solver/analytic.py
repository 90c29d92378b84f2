"""A cheap closed-form stand-in solver for exercising the pipeline end to end.

The six free PARSEC variables are scaled to [0, 1] over the design space.
The pseudo-Cp is affine in them: a fixed base curve plus one smooth feature
per variable. The QoI are smooth nonlinear functions of the same variables.
Because Cp is affine, any average of training curves (which is what a
VAE decoder tends to produce) is itself the Cp of some design, so the
1% validation test measures the learned models rather than the curvature of
the stand-in. Nothing here is physical.
"""

from __future__ import annotations

import numpy as np

from ..geometry import ParsecParams, StationGrid, default_grid

TABLE1_LOWER = np.array([0.015, 0.3, 0.09, 0.3, -0.15, -0.02])
TABLE1_UPPER = np.array([0.04, 0.45, 0.15, 0.45, -0.09, 0.02])


def scaled(params: ParsecParams, lower=TABLE1_LOWER, upper=TABLE1_UPPER) -> np.ndarray:
    return (params.free_vector() - lower) / (upper - lower)


def _features(xs: np.ndarray):
    nose = np.exp(-xs / 0.03)
    recovery = (1.0 - xs) ** 0.7
    crest = np.exp(-((xs - 0.3) / 0.2) ** 2)
    shift = (xs - 0.3) / 0.2 * crest  # derivative-like term: moves the crest
    aft = xs ** 2
    return nose, recovery, crest, shift, aft


def pseudo_cp(u, grid: StationGrid) -> np.ndarray:
    r, xu, zu, xl, zl, zt = u
    nose, recovery, crest, shift, aft = _features(grid.x_surface)
    upper = (-0.7 * recovery - 0.3 * crest - 0.6 * nose
             - 0.4 * r * nose + 0.15 * xu * shift - 0.5 * zu * recovery + 0.12 * zt * aft)
    lower = (0.15 * recovery + 0.1 * crest - 0.6 * nose
             - 0.4 * r * nose - 0.12 * xl * shift + 0.3 * zl * recovery - 0.12 * zt * aft)
    return np.concatenate([upper[::-1], lower[1:]])


def pseudo_qoi(u) -> tuple[float, float, float, float]:
    """(cl, cd, cm, area) as smooth functions of the scaled variables."""
    r, xu, zu, xl, zl, zt = u
    cl = 0.5 + 0.5 * zu + 0.3 * zl + 0.3 * zt + 0.1 * xu
    cd = (0.008 + 0.004 * (xu - 0.65) ** 2 + 0.003 * (xl - 0.4) ** 2 + 0.003 * zu ** 2
          + 0.002 * (r - 0.3) ** 2 + 0.002 * zl + 0.002 * zt ** 2)
    cm = -0.02 - 0.08 * zt - 0.02 * zl + 0.01 * xu
    # thickness-driven area, roughly that of the PARSEC family
    z_up = 0.09 + 0.06 * zu
    z_lo = -0.15 + 0.06 * zl
    area = 0.66 * (z_up - z_lo) + 0.4 * (0.015 + 0.025 * r)
    return cl, cd, cm, area


class AnalyticSolver:
    """Same interface as the built-in solver; every design converges."""

    name = "analytic-standin"

    def __init__(self, grid: StationGrid | None = None):
        self.grid = grid if grid is not None else default_grid()

    def evaluate_params(self, params: ParsecParams, cond=None):
        from . import SolverResult

        u = scaled(params)
        cl, cd, cm, area = pseudo_qoi(u)
        return SolverResult(pseudo_cp(u, self.grid), cl, cd, cm, area, True)

"""Aerodynamic evaluation of airfoil shapes.

The built-in solver couples the panel method with an uncoupled integral
boundary layer; :mod:`latentfoil.solver.xfoil` drives an external Xfoil
binary behind the same ``evaluate_params`` interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (AirfoilShape, GeometryError, ParsecParams, StationGrid, airfoil_area,
                        default_grid, evaluate_airfoil)
from .boundary_layer import boundary_layer_march, march_surface
from .panel import (SolverError, cp_to_edge_velocity, edge_velocity_to_cp,
                    panel_solve_inviscid, prandtl_glauert)

__all__ = [
    "FlowConditions", "SolverResult", "SolverError", "BuiltinSolver", "evaluate",
    "panel_solve_inviscid", "boundary_layer_march", "march_surface", "cp_to_edge_velocity",
    "edge_velocity_to_cp", "prandtl_glauert", "failed_result",
]


@dataclass(frozen=True)
class FlowConditions:
    reynolds: float = 6.0e6
    mach: float = 0.25
    alpha_deg: float = 7.0

    def __post_init__(self):
        if not self.reynolds > 0:
            raise ValueError(f"reynolds must be positive, got {self.reynolds}")
        if not 0.0 <= self.mach < 0.7:
            raise ValueError(f"mach {self.mach} outside [0, 0.7)")
        if not abs(self.alpha_deg) < 20.0:
            raise ValueError(f"|alpha| must be below 20 deg, got {self.alpha_deg}")

    @property
    def alpha(self) -> float:
        return math.radians(self.alpha_deg)

    def to_dict(self) -> dict:
        return {"reynolds": self.reynolds, "mach": self.mach, "alpha_deg": self.alpha_deg}


@dataclass
class SolverResult:
    cp: np.ndarray
    cl: float
    cd: float
    cm: float
    area: float
    converged: bool
    transition_x: tuple = (math.nan, math.nan)
    message: str = ""
    extra: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def l_over_d(self) -> float:
        if not self.converged or not math.isfinite(self.cd) or self.cd <= 0:
            return 0.0
        return self.cl / self.cd

    @property
    def qoi(self) -> np.ndarray:
        """(L/D, Cd, Cm, area) in the regressor's output order."""
        return np.array([self.l_over_d, self.cd, self.cm, self.area])


def failed_result(n_stations: int, message: str, area: float = 0.0) -> SolverResult:
    return SolverResult(np.zeros(n_stations), 0.0, math.inf, 0.0, area, False, message=message)


def evaluate(shape: AirfoilShape, cond: FlowConditions) -> SolverResult:
    """Panel method + boundary layer on a shape; Cp is returned at its nodes."""
    area = airfoil_area(shape)
    try:
        inv = panel_solve_inviscid(shape.x, shape.z, cond.alpha, cond.mach)
    except SolverError as exc:
        return failed_result(len(shape.x), str(exc), area)
    if not (np.all(np.isfinite(inv.cp)) and math.isfinite(inv.cl) and math.isfinite(inv.cm)):
        return failed_result(len(shape.x), "non-finite inviscid solution", area)
    ue = cp_to_edge_velocity(inv.cp, cond.mach)
    bl = boundary_layer_march(inv.s, inv.vt, ue, shape.x, cond.reynolds)
    return SolverResult(inv.cp, inv.cl, bl.cd if bl.converged else math.inf, inv.cm, area,
                        bl.converged, bl.transition_x, bl.message,
                        extra={"cl_circulation": inv.cl_circulation})


class BuiltinSolver:
    """Default ground-truth solver: PARSEC -> panel method -> boundary layer."""

    name = "builtin-panel-ibl"

    def __init__(self, grid: StationGrid | None = None):
        self.grid = grid if grid is not None else default_grid()

    def evaluate_shape(self, shape: AirfoilShape, cond: FlowConditions) -> SolverResult:
        return evaluate(shape, cond)

    def evaluate_params(self, params: ParsecParams, cond: FlowConditions) -> SolverResult:
        try:
            shape = evaluate_airfoil(params, self.grid)
        except GeometryError as exc:
            return failed_result(self.grid.n_stations, f"invalid geometry: {exc}")
        return evaluate(shape, cond)

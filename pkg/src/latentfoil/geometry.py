"""PARSEC airfoil construction on a shared two-sided tanh station grid.

Each surface is ``z(x) = sum_n a_n x**(n - 1/2)`` for ``n = 1..6``. The
leading-edge radius pins ``a_1``; the crest location, crest curvature and
trailing-edge height/slope give a 5x5 linear system for ``a_2..a_6``.

Stations are ordered the usual Selig way: upper trailing edge -> leading
edge -> lower trailing edge, with the leading-edge point shared.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, least_squares

N_SURFACE = 100
LE_SPACING = 0.001
TE_SPACING = 0.005

FREE_NAMES = ("r_le", "x_up", "z_up", "x_lo", "z_lo", "z_te")
FIXED_NAMES = ("zxx_up", "zxx_lo", "dz_te", "alpha_te", "beta_te")

# Half-integer exponents of the PARSEC polynomial.
_POWERS = np.arange(1, 7) - 0.5


class GeometryError(ValueError):
    """Raised for invalid PARSEC parameters or unusable airfoil shapes."""


class GridError(ValueError):
    """Raised when no stretching exists for the requested end spacings."""


class CalibrationError(RuntimeError):
    pass


# Five PARSEC variables held fixed during design. Produced by
# fit_fixed_parsec_defaults() against the shipped NACA 0012 table (thickness
# scaled to the baseline crests) with the six free variables at baseline; regenerate with
# ``python -m latentfoil.geometry``.
FIXED_DEFAULTS = {
    "zxx_up": -0.8231995594562387,
    "zxx_lo": 0.8232000342040113,
    "dz_te": 0.0,
    "alpha_te": -6.03296255703632e-07,
    "beta_te": 0.2860292279867862,
}


@dataclass(frozen=True)
class ParsecParams:
    r_le: float
    x_up: float
    z_up: float
    x_lo: float
    z_lo: float
    z_te: float
    zxx_up: float = FIXED_DEFAULTS["zxx_up"]
    zxx_lo: float = FIXED_DEFAULTS["zxx_lo"]
    dz_te: float = FIXED_DEFAULTS["dz_te"]
    alpha_te: float = FIXED_DEFAULTS["alpha_te"]
    beta_te: float = FIXED_DEFAULTS["beta_te"]

    @classmethod
    def from_free(cls, values, **fixed) -> "ParsecParams":
        """Build from the six free variables (in ``FREE_NAMES`` order)."""
        values = [float(v) for v in values]
        if len(values) != len(FREE_NAMES):
            raise GeometryError(f"expected {len(FREE_NAMES)} free values, got {len(values)}")
        kwargs = dict(FIXED_DEFAULTS)
        kwargs.update(fixed)
        kwargs.update(zip(FREE_NAMES, values))
        return cls(**kwargs)

    @classmethod
    def baseline(cls, **fixed) -> "ParsecParams":
        return cls.from_free([0.0275, 0.375, 0.12, 0.375, -0.12, 0.0], **fixed)

    def free_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FREE_NAMES])

    def fixed_dict(self) -> dict:
        return {n: getattr(self, n) for n in FIXED_NAMES}

    def replace(self, **changes) -> "ParsecParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class StationGrid:
    """199 chordwise stations shared by every airfoil in a dataset."""

    x_surface: np.ndarray = field(repr=False)  # LE -> TE, shared by both surfaces

    @property
    def n_surface(self) -> int:
        return len(self.x_surface)

    @property
    def n_stations(self) -> int:
        return 2 * self.n_surface - 1

    @property
    def x(self) -> np.ndarray:
        xs = self.x_surface
        return np.concatenate([xs[::-1], xs[1:]])

    @property
    def surface(self) -> np.ndarray:
        """'upper'/'lower' label per station (the LE point counts as upper)."""
        n = self.n_surface
        return np.array(["upper"] * n + ["lower"] * (n - 1))

    def to_dict(self) -> dict:
        return {"kind": "vinokur", "n_surface": self.n_surface,
                "x_surface": [float(v) for v in self.x_surface]}

    @classmethod
    def from_dict(cls, data: dict) -> "StationGrid":
        return cls(np.asarray(data["x_surface"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, StationGrid):
            return NotImplemented
        return np.array_equal(self.x_surface, other.x_surface)

    def __hash__(self):
        return hash(self.x_surface.tobytes())


@dataclass(frozen=True)
class SurfaceCoeffs:
    a: np.ndarray

    def z(self, x):
        x = np.asarray(x, dtype=float)
        return np.power.outer(x, _POWERS) @ self.a

    def dz(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.power.outer(x, _POWERS - 1) @ (self.a * _POWERS)

    def d2z(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.power.outer(x, _POWERS - 2) @ (self.a * _POWERS * (_POWERS - 1))


@dataclass(frozen=True)
class AirfoilShape:
    """Closed contour in station order (upper TE -> LE -> lower TE).

    ``n_upper`` counts the upper-surface points including the LE point, which
    is also the first lower-surface point.
    """

    x: np.ndarray
    z: np.ndarray
    n_upper: int
    grid: StationGrid | None = None

    def __post_init__(self):
        if len(self.x) != len(self.z):
            raise GeometryError("x and z lengths differ")

    def upper(self):
        """Upper surface ordered LE -> TE."""
        k = self.n_upper
        return self.x[:k][::-1], self.z[:k][::-1]

    def lower(self):
        """Lower surface ordered LE -> TE."""
        k = self.n_upper - 1
        return self.x[k:], self.z[k:]


# --------------------------------------------------------------------------
# station grid
# --------------------------------------------------------------------------

def _stretch_parameter(b: float) -> float:
    if b > 1.0:
        hi = 1.0
        while math.sinh(hi) / hi < b:
            hi *= 2.0
        return brentq(lambda y: math.sinh(y) / y - b, 1e-12, hi, xtol=1e-12, rtol=1e-15)
    return brentq(lambda y: math.sin(y) / y - b, 1e-12, math.pi - 1e-12, xtol=1e-12, rtol=1e-15)


def vinokur_grid(n_points: int, d0: float, d1: float) -> np.ndarray:
    """Two-sided tanh stretching on [0, 1] with end spacings ``d0`` and ``d1``.

    Matches the end slopes of the mapping to the requested spacings; for
    ``d0 == d1 == 1/(n_points-1)`` the grid is uniform.
    """
    if n_points < 3:
        raise GridError("need at least 3 points")
    if d0 <= 0 or d1 <= 0 or d0 + d1 >= 1.0:
        raise GridError(f"infeasible end spacings d0={d0}, d1={d1}")
    n_int = n_points - 1
    xi = np.linspace(0.0, 1.0, n_points)
    a = math.sqrt(d1 / d0)
    b = 1.0 / (n_int * math.sqrt(d0 * d1))
    if abs(b - 1.0) < 1e-12:
        u = xi
    else:
        dy = _stretch_parameter(b)
        if b > 1.0:
            u = 0.5 * (1.0 + np.tanh(dy * (xi - 0.5)) / math.tanh(0.5 * dy))
        else:
            u = 0.5 * (1.0 + np.tan(dy * (xi - 0.5)) / math.tan(0.5 * dy))
    s = u / (a + (1.0 - a) * u)
    s[0], s[-1] = 0.0, 1.0
    if np.any(np.diff(s) <= 0):
        raise GridError(f"stretching for d0={d0}, d1={d1} is not monotone")
    return s


def station_grid(n_surface: int = N_SURFACE, le_spacing: float = LE_SPACING,
                 te_spacing: float = TE_SPACING) -> StationGrid:
    return StationGrid(vinokur_grid(n_surface, le_spacing, te_spacing))


# --------------------------------------------------------------------------
# PARSEC
# --------------------------------------------------------------------------

def _surface_targets(params: ParsecParams, surface: str):
    if surface == "upper":
        return (math.sqrt(2.0 * params.r_le), params.x_up, params.z_up, params.zxx_up,
                params.z_te + 0.5 * params.dz_te,
                math.tan(params.alpha_te - 0.5 * params.beta_te))
    if surface == "lower":
        return (-math.sqrt(2.0 * params.r_le), params.x_lo, params.z_lo, params.zxx_lo,
                params.z_te - 0.5 * params.dz_te,
                math.tan(params.alpha_te + 0.5 * params.beta_te))
    raise ValueError(f"unknown surface {surface!r}")


def solve_parsec_surface(params: ParsecParams, surface: str) -> SurfaceCoeffs:
    if not params.r_le > 0:
        raise GeometryError(f"r_le must be positive, got {params.r_le}")
    a1, xc, zc, zxx, zte, slope = _surface_targets(params, surface)
    crest = "x_up" if surface == "upper" else "x_lo"
    if not 0.0 < xc < 1.0:
        raise GeometryError(f"{crest}={xc} outside (0, 1)")

    p = _POWERS
    rows = np.array([
        xc ** p,
        p * xc ** (p - 1),
        p * (p - 1) * xc ** (p - 2),
        np.ones(6),
        p,
    ])
    rhs = np.array([zc, 0.0, zxx, zte, slope]) - rows[:, 0] * a1
    mat = rows[:, 1:]
    if np.linalg.cond(mat) > 1e12:
        raise GeometryError(f"PARSEC system singular for {crest}={xc}")
    # LAPACK gesv: LU with partial pivoting
    rest = np.linalg.solve(mat, rhs)
    return SurfaceCoeffs(np.concatenate([[a1], rest]))


def evaluate_airfoil(params: ParsecParams, grid: StationGrid | None = None) -> AirfoilShape:
    grid = grid if grid is not None else default_grid()
    xs = grid.x_surface
    z_up = solve_parsec_surface(params, "upper").z(xs)
    z_lo = solve_parsec_surface(params, "lower").z(xs)
    z_up[0] = z_lo[0] = 0.0
    gap = z_up[1:] - z_lo[1:]
    if np.any(gap[:-1] < 0.0) or gap[-1] < -1e-12:
        i = int(np.argmin(gap)) + 1
        raise GeometryError(f"upper and lower surfaces cross near x={xs[i]:.4f}")
    x = np.concatenate([xs[::-1], xs[1:]])
    z = np.concatenate([z_up[::-1], z_lo[1:]])
    return AirfoilShape(x, z, grid.n_surface, grid)


def airfoil_area(shape: AirfoilShape) -> float:
    xu, zu = shape.upper()
    xl, zl = shape.lower()
    if len(xu) == len(xl) and np.allclose(xu, xl, rtol=0, atol=1e-14):
        return float(np.trapezoid(zu - zl, xu))
    # general contour: shoelace
    x, z = shape.x, shape.z
    return float(0.5 * abs(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1))))


_DEFAULT_GRID: StationGrid | None = None


def default_grid() -> StationGrid:
    global _DEFAULT_GRID
    if _DEFAULT_GRID is None:
        _DEFAULT_GRID = station_grid()
    return _DEFAULT_GRID


# --------------------------------------------------------------------------
# coordinate files
# --------------------------------------------------------------------------

def read_selig(path) -> tuple[str, np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    name = lines[0].strip()
    pts = np.array([[float(t) for t in ln.split()] for ln in lines[1:] if ln.strip()])
    return name, pts[:, 0], pts[:, 1]


def write_selig(path, shape: AirfoilShape, name: str = "airfoil") -> None:
    out = [name]
    for xv, zv in zip(shape.x, shape.z):
        out.append(f"{xv + 0.0:.6f} {zv + 0.0:.6f}")
    Path(path).write_text("\n".join(out) + "\n")


def naca0012_coordinates() -> tuple[np.ndarray, np.ndarray]:
    ref = resources.files("latentfoil") / "data" / "naca0012.dat"
    with resources.as_file(ref) as p:
        _, x, z = read_selig(p)
    return x, z


def shape_from_coordinates(x, z, grid: StationGrid | None = None) -> AirfoilShape:
    """Re-interpolate a Selig-ordered point set onto the station grid."""
    grid = grid if grid is not None else default_grid()
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    i_le = int(np.argmin(x))
    xu, zu = x[: i_le + 1][::-1], z[: i_le + 1][::-1]
    xl, zl = x[i_le:], z[i_le:]
    xs = grid.x_surface
    zu_s = np.interp(xs, xu, zu)
    zl_s = np.interp(xs, xl, zl)
    zl_s[0] = zu_s[0]
    return AirfoilShape(np.concatenate([xs[::-1], xs[1:]]),
                        np.concatenate([zu_s[::-1], zl_s[1:]]), grid.n_surface, grid)


def fit_fixed_parsec_defaults(ref_x=None, ref_z=None, free=None, scale_thickness: bool = True,
                              max_rms: float = 0.01) -> dict:
    """Least-squares fit of the five fixed PARSEC variables to a reference airfoil.

    The free variables stay pinned (baseline by default) and the trailing edge
    is kept closed. With ``scale_thickness`` the reference is first scaled so
    its maximum thickness equals the pinned crest-to-crest thickness; a 12%
    section cannot be matched by 24%-thick crests otherwise.
    """
    if ref_x is None:
        ref_x, ref_z = naca0012_coordinates()
    free = ParsecParams.baseline().free_vector() if free is None else np.asarray(free)
    ref_x = np.asarray(ref_x, dtype=float)
    ref_z = np.asarray(ref_z, dtype=float)
    if scale_thickness:
        shape = shape_from_coordinates(ref_x, ref_z)
        xu, zu = shape.upper()
        _, zl = shape.lower()
        ref_z = ref_z * (free[2] - free[4]) / float(np.max(zu - zl))
    i_le = int(np.argmin(ref_x))
    xu, zu = ref_x[: i_le + 1], ref_z[: i_le + 1]
    xl, zl = ref_x[i_le:], ref_z[i_le:]

    def build(v):
        return ParsecParams.from_free(free, zxx_up=v[0], zxx_lo=v[1], dz_te=0.0,
                                      alpha_te=v[2], beta_te=v[3])

    def residual(v):
        p = build(v)
        up = solve_parsec_surface(p, "upper").z(xu) - zu
        lo = solve_parsec_surface(p, "lower").z(xl) - zl
        return np.concatenate([up, lo])

    sol = least_squares(residual, x0=[-0.5, 0.5, 0.0, 0.2], method="lm")
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    if not sol.success or rms > max_rms:
        raise CalibrationError(f"PARSEC calibration residual rms={rms:.4g} exceeds {max_rms}")
    p = build(sol.x)
    return p.fixed_dict()


if __name__ == "__main__":
    fitted = fit_fixed_parsec_defaults()
    for k, v in fitted.items():
        print(f'    "{k}": {float(v)!r},')
    base = ParsecParams.baseline(**fitted)
    print("baseline area", airfoil_area(evaluate_airfoil(base)))

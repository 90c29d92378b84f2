"""Subprocess adapter for an external Xfoil executable."""

from __future__ import annotations

import math
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import (AirfoilShape, GeometryError, ParsecParams, StationGrid, airfoil_area,
                        default_grid, evaluate_airfoil, write_selig)
from .panel import SolverError

XFOIL_ENV = "LATENTFOIL_XFOIL"


class XfoilError(SolverError):
    pass


class XfoilUnavailable(XfoilError):
    pass


class XfoilTimeout(XfoilError):
    pass


class XfoilNotConverged(XfoilError):
    pass


class XfoilParseError(XfoilError):
    pass


@dataclass(frozen=True)
class XfoilConfig:
    executable: str | None = None
    timeout: float = 30.0
    iterations: int = 200
    repanel: bool = True

    def resolve(self) -> str:
        exe = self.executable or os.environ.get(XFOIL_ENV) or shutil.which("xfoil")
        if not exe:
            raise XfoilUnavailable("no Xfoil executable configured "
                                   f"(set executable or ${XFOIL_ENV})")
        path = shutil.which(exe) or (exe if os.path.isfile(exe) else None)
        if path is None:
            raise XfoilUnavailable(f"Xfoil executable not found: {exe}")
        return path


def build_script(coord_file: str, polar_file: str, cp_file: str, cond, config: XfoilConfig) -> str:
    lines = [f"LOAD {coord_file}"]
    if config.repanel:
        lines.append("PANE")
    lines += [
        "OPER",
        f"VISC {cond.reynolds:.6g}",
        f"MACH {cond.mach:.6g}",
        f"ITER {config.iterations}",
        "PACC",
        polar_file,
        "",
        f"ALFA {cond.alpha_deg:.6g}",
        "PACC",
        f"CPWR {cp_file}",
        "",
        "QUIT",
    ]
    return "\n".join(lines) + "\n"


def parse_polar(text: str) -> dict:
    """Last data row of an Xfoil polar file."""
    rows = []
    after_rule = False
    for line in text.splitlines():
        if line.strip().startswith("------"):
            after_rule = True
            continue
        if not after_rule or not line.strip():
            continue
        try:
            rows.append([float(t) for t in line.split()])
        except ValueError as exc:
            raise XfoilParseError(f"bad polar row: {line!r}") from exc
    if not after_rule:
        raise XfoilParseError("polar file has no header rule")
    if not rows:
        raise XfoilNotConverged("polar file contains no converged point")
    r = rows[-1]
    if len(r) < 5:
        raise XfoilParseError(f"short polar row: {r}")
    out = {"alpha": r[0], "cl": r[1], "cd": r[2], "cdp": r[3], "cm": r[4]}
    if len(r) >= 7:
        out["xtr_top"], out["xtr_bot"] = r[5], r[6]
    return out


def parse_cp(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            rows.append([float(t) for t in line.split()])
        except ValueError:
            continue
    if len(rows) < 4:
        raise XfoilParseError("Cp dump has too few rows")
    arr = np.array(rows)
    return arr[:, 0], arr[:, -1]  # x is first, Cp last (2- or 3-column dumps)


def cp_onto_grid(x, cp, grid: StationGrid) -> np.ndarray:
    """Piecewise-linear per-surface interpolation of a Selig-ordered Cp dump."""
    x = np.asarray(x, dtype=float)
    cp = np.asarray(cp, dtype=float)
    i_le = int(np.argmin(x))
    xu, cu = x[: i_le + 1][::-1], cp[: i_le + 1][::-1]
    xl, cl_ = x[i_le:], cp[i_le:]
    xs = grid.x_surface
    up = np.interp(xs, *_monotone(xu, cu))
    lo = np.interp(xs, *_monotone(xl, cl_))
    lo[0] = up[0]
    return np.concatenate([up[::-1], lo[1:]])


def _monotone(x, y):
    keep = np.concatenate([[True], np.diff(x) > 0])
    keep &= np.maximum.accumulate(x) == x
    return x[keep], y[keep]


def xfoil_evaluate(shape: AirfoilShape, cond, config: XfoilConfig | None = None,
                   grid: StationGrid | None = None):
    from . import SolverResult

    config = config or XfoilConfig()
    exe = config.resolve()
    grid = grid or shape.grid or default_grid()
    with tempfile.TemporaryDirectory(prefix="latentfoil-xfoil-") as tmp:
        tmp = Path(tmp)
        write_selig(tmp / "foil.dat", shape, "latentfoil")
        script = build_script("foil.dat", "polar.txt", "cp.txt", cond, config)
        try:
            subprocess.run([exe], input=script, text=True, cwd=tmp, capture_output=True,
                           timeout=config.timeout, check=False)
        except subprocess.TimeoutExpired:
            raise XfoilTimeout(f"Xfoil exceeded {config.timeout} s") from None
        except OSError as exc:
            raise XfoilUnavailable(f"cannot run {exe}: {exc}") from None
        if not (tmp / "polar.txt").exists():
            raise XfoilParseError("Xfoil wrote no polar file")
        polar = parse_polar((tmp / "polar.txt").read_text())
        if not (tmp / "cp.txt").exists():
            raise XfoilParseError("Xfoil wrote no Cp dump")
        x_cp, cp = parse_cp((tmp / "cp.txt").read_text())
    cd = polar["cd"]
    if not (math.isfinite(cd) and cd > 0):
        raise XfoilNotConverged(f"non-physical cd {cd}")
    return SolverResult(cp_onto_grid(x_cp, cp, grid), polar["cl"], cd, polar["cm"],
                        airfoil_area(shape), True,
                        (polar.get("xtr_top", math.nan), polar.get("xtr_bot", math.nan)))


class XfoilSolver:
    name = "xfoil"

    def __init__(self, config: XfoilConfig | None = None, grid: StationGrid | None = None):
        self.config = config or XfoilConfig()
        self.grid = grid or default_grid()
        self.config.resolve()

    def evaluate_shape(self, shape: AirfoilShape, cond):
        return xfoil_evaluate(shape, cond, self.config, self.grid)

    def evaluate_params(self, params: ParsecParams, cond):
        from . import failed_result

        try:
            shape = evaluate_airfoil(params, self.grid)
        except GeometryError as exc:
            return failed_result(self.grid.n_stations, f"invalid geometry: {exc}")
        try:
            return xfoil_evaluate(shape, cond, self.config, self.grid)
        except (XfoilNotConverged, XfoilTimeout, XfoilParseError) as exc:
            return failed_result(self.grid.n_stations, f"xfoil: {exc}", airfoil_area(shape))

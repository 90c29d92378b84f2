"""Hess-Smith panel method: constant sources per panel plus one uniform vortex."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


class SolverError(RuntimeError):
    """Raised when the inviscid system cannot be formed or solved."""


@dataclass(frozen=True)
class InviscidSolution:
    cp: np.ndarray        # at contour nodes, compressibility-corrected
    cp_incomp: np.ndarray  # at contour nodes, incompressible
    vt: np.ndarray        # signed tangential velocity at nodes (along node order)
    s: np.ndarray         # arc length of nodes from the first node
    cl: float
    cm: float
    cl_circulation: float
    panel_cp: np.ndarray
    panel_vt: np.ndarray


def prandtl_glauert(cp, mach: float):
    return np.asarray(cp) / math.sqrt(1.0 - mach * mach)


def cp_to_edge_velocity(cp, mach: float = 0.0):
    """Edge speed (fraction of freestream) from a corrected Cp."""
    cp0 = np.asarray(cp, dtype=float) * math.sqrt(1.0 - mach * mach)
    return np.sqrt(np.maximum(1.0 - cp0, 0.0))


def edge_velocity_to_cp(ue, mach: float = 0.0):
    return prandtl_glauert(1.0 - np.asarray(ue, dtype=float) ** 2, mach)


def _influence(xn, zn):
    """Normal/tangential influence coefficients for a clockwise contour."""
    dx = np.diff(xn)
    dz = np.diff(zn)
    length = np.hypot(dx, dz)
    bad = np.flatnonzero(length < 1e-12)
    if bad.size:
        raise SolverError(f"degenerate panel at index {int(bad[0])}")
    tx, tz = dx / length, dz / length
    nx, nz = -tz, tx  # outward for clockwise ordering
    xc = 0.5 * (xn[:-1] + xn[1:])
    zc = 0.5 * (zn[:-1] + zn[1:])

    # control point i relative to the start of panel j, in panel-j coordinates
    rx = xc[:, None] - xn[None, :-1]
    rz = zc[:, None] - zn[None, :-1]
    xi = rx * tx[None, :] + rz * tz[None, :]
    eta = rx * nx[None, :] + rz * nz[None, :]
    lj = length[None, :]
    r1 = xi ** 2 + eta ** 2
    r2 = (xi - lj) ** 2 + eta ** 2
    dtheta = np.arctan2(eta, xi - lj) - np.arctan2(eta, xi)
    log_r = np.log(r1 / r2)
    np.fill_diagonal(dtheta, math.pi)
    np.fill_diagonal(log_r, 0.0)

    # unit source: (u, w) = (log_r / 4pi, dtheta / 2pi); unit vortex: (dtheta / 2pi, -log_r / 4pi)
    us, ws = log_r / (2.0 * TWO_PI), dtheta / TWO_PI
    uv, wv = ws, -us
    # rotate local (t_j, n_j) velocity components into panel i's normal and tangent
    t_dot_n = tx[None, :] * nx[:, None] + tz[None, :] * nz[:, None]
    n_dot_n = nx[None, :] * nx[:, None] + nz[None, :] * nz[:, None]
    t_dot_t = tx[None, :] * tx[:, None] + tz[None, :] * tz[:, None]
    n_dot_t = nx[None, :] * tx[:, None] + nz[None, :] * tz[:, None]
    an_src = us * t_dot_n + ws * n_dot_n
    at_src = us * t_dot_t + ws * n_dot_t
    an_vor = (uv * t_dot_n + wv * n_dot_n).sum(axis=1)
    at_vor = (uv * t_dot_t + wv * n_dot_t).sum(axis=1)
    return (an_src, at_src, an_vor, at_vor), (tx, tz, nx, nz, length, xc, zc)


def panel_solve_inviscid(x, z, alpha: float, mach: float = 0.0,
                         moment_ref=(0.25, 0.0)) -> InviscidSolution:
    """Solve potential flow about a closed contour.

    ``x, z`` are node coordinates in Selig order (upper TE -> LE -> lower TE);
    ``alpha`` is in radians. Cp, cl and cm carry the Prandtl-Glauert factor.
    """
    if not 0.0 <= mach < 1.0:
        raise SolverError(f"mach {mach} outside [0, 1)")
    # work clockwise: lower TE -> LE -> upper TE
    xn = np.asarray(x, dtype=float)[::-1]
    zn = np.asarray(z, dtype=float)[::-1]
    n = len(xn) - 1
    (an_src, at_src, an_vor, at_vor), (tx, tz, nx, nz, length, xc, zc) = _influence(xn, zn)

    ca, sa = math.cos(alpha), math.sin(alpha)
    mat = np.empty((n + 1, n + 1))
    rhs = np.empty(n + 1)
    mat[:n, :n] = an_src
    mat[:n, n] = an_vor
    rhs[:n] = -(ca * nx + sa * nz)
    # Kutta: equal and opposite tangential velocity on the two trailing-edge panels
    mat[n, :n] = at_src[0] + at_src[-1]
    mat[n, n] = at_vor[0] + at_vor[-1]
    rhs[n] = -(ca * (tx[0] + tx[-1]) + sa * (tz[0] + tz[-1]))
    try:
        sol = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular influence matrix: {exc}") from None
    if not np.all(np.isfinite(sol)):
        raise SolverError("non-finite panel strengths")
    q, gamma = sol[:n], sol[n]

    vt = ca * tx + sa * tz + at_src @ q + at_vor * gamma
    cp_inc = 1.0 - vt ** 2
    cp = prandtl_glauert(cp_inc, mach)

    # force coefficient from pressure on outward normals
    fx = -np.sum(cp * nx * length)
    fz = -np.sum(cp * nz * length)
    chord = float(np.max(xn) - np.min(xn))
    cl = (fz * ca - fx * sa) / chord
    mx = xc - moment_ref[0]
    mz = zc - moment_ref[1]
    # nose-up positive: minus the counter-clockwise moment
    cm = float(np.sum(cp * length * (mx * nz - mz * nx))) / chord ** 2
    cl_circ = 2.0 * gamma * float(np.sum(length)) / chord / math.sqrt(1.0 - mach * mach)

    # back to Selig order; node values by arc-length interpolation of panel values
    s_mid_cw = np.cumsum(length) - 0.5 * length
    s_nodes_cw = np.concatenate([[0.0], np.cumsum(length)])
    vt_nodes_cw = np.interp(s_nodes_cw, s_mid_cw, vt)
    cp_nodes_cw = np.interp(s_nodes_cw, s_mid_cw, cp_inc)
    total = s_nodes_cw[-1]
    s_nodes = total - s_nodes_cw[::-1]
    # traversal reverses, so signed tangential velocity flips
    return InviscidSolution(
        cp=prandtl_glauert(cp_nodes_cw[::-1], mach),
        cp_incomp=cp_nodes_cw[::-1],
        vt=-vt_nodes_cw[::-1],
        s=s_nodes,
        cl=float(cl),
        cm=cm,
        cl_circulation=float(cl_circ),
        panel_cp=cp[::-1],
        panel_vt=-vt[::-1],
    )

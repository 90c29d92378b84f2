"""Integral boundary layer: Thwaites laminar, Michel transition, Head turbulent.

Drag comes from the Squire-Young formula at the trailing edge of each
surface. Separation ahead of the trailing-edge region fails the surface;
nothing is modelled past it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TURBULENT_SEPARATION_H = 2.8
LAMINAR_SEPARATION_H = 3.5
LAMINAR_SEPARATION_LAMBDA = -0.09
TRANSITION_H = 1.4
# Separation this close to the trailing edge is tolerated (see march_surface).
TE_SEPARATION_X = 0.8


@dataclass
class SurfaceLayer:
    s: np.ndarray
    ue: np.ndarray
    theta: np.ndarray
    h: np.ndarray
    cf: np.ndarray
    transition_index: int | None
    laminar_separation: bool
    separated: bool
    cd: float
    message: str = ""
    separation_index: int | None = None

    @property
    def converged(self) -> bool:
        return not self.separated and math.isfinite(self.cd) and self.cd > 0


@dataclass
class BoundaryLayerResult:
    cd: float
    transition_x: tuple
    converged: bool
    upper: SurfaceLayer | None = None
    lower: SurfaceLayer | None = None
    message: str = ""
    surfaces: dict = field(default_factory=dict)


def thwaites_shape(lam):
    """Thwaites shape factor and shear correlation l(lambda) (Cebeci-Bradshaw fit)."""
    lam = min(max(lam, -0.1), 0.1)
    if lam >= 0.0:
        h = 2.61 - 3.75 * lam + 5.24 * lam * lam
        ell = 0.22 + 1.57 * lam - 1.8 * lam * lam
    else:
        h = 2.088 + 0.0731 / (lam + 0.14)
        ell = 0.22 + 1.402 * lam + 0.018 * lam / (lam + 0.107)
    return h, ell


def michel_transition(re_theta, re_x) -> bool:
    return re_theta > 1.174 * (1.0 + 22400.0 / re_x) * re_x ** 0.46


def head_h1(h):
    if h <= 1.6:
        return 3.3 + 0.8234 * (h - 1.1) ** -1.287
    return 3.3 + 1.5501 * (h - 0.6778) ** -3.064


def head_h_from_h1(h1):
    if h1 <= 3.32:
        return 3.0  # beyond the correlation: treated as separated
    if h1 >= 5.3:
        return 1.1 + 0.86 * (h1 - 3.3) ** -0.777
    return 0.6778 + 1.1538 * (h1 - 3.3) ** -0.326


def ludwieg_tillmann(h, re_theta):
    return 0.246 * 10.0 ** (-0.678 * h) * max(re_theta, 1.0) ** -0.268


def _head_rhs(theta, ue_h1_theta, ue, due, nu):
    """d(theta)/ds and d(ue*H1*theta)/ds for Head's method."""
    h1 = ue_h1_theta / (ue * theta)
    h = head_h_from_h1(h1)
    re_theta = ue * theta / nu
    cf = ludwieg_tillmann(h, re_theta)
    dtheta = 0.5 * cf - (h + 2.0) * theta / ue * due
    entrain = ue * 0.0306 * max(h1 - 3.0, 1e-6) ** -0.6169
    return dtheta, entrain, h, cf


def squire_young(theta, h, ue):
    return 2.0 * theta * ue ** (0.5 * (h + 5.0))


def march_surface(s, ue, reynolds: float, transition: float | None = None,
                  x=None, te_separation_x: float | None = None,
                  substeps: int = 4) -> SurfaceLayer:
    """March one surface from the stagnation point (``s[0] == 0``, ``ue[0] ~ 0``).

    ``transition`` forces turbulent flow from that arc length on (0 means
    fully turbulent after the first station); ``None`` uses Michel's criterion.
    Laminar separation triggers transition.

    Turbulent separation (H > 2.8) fails the surface unless ``x`` (chord
    position per station) is given and separation happens at or behind
    ``te_separation_x``. In that case the momentum equation is carried to the
    trailing edge with H frozen at the separation value and zero skin friction,
    and Squire-Young is applied there.
    """
    s = np.asarray(s, dtype=float)
    ue = np.asarray(ue, dtype=float)
    n = len(s)
    nu = 1.0 / reynolds
    theta = np.zeros(n)
    h = np.zeros(n)
    cf = np.zeros(n)
    if n < 2 or not np.all(np.isfinite(ue)) or np.max(np.abs(ue)) < 1e-9:
        return SurfaceLayer(s, ue, theta, h, cf, None, False, True, math.inf, "no edge flow")
    if np.any(np.diff(s) <= 0):
        return SurfaceLayer(s, ue, theta, h, cf, None, False, True, math.inf,
                            "arc length not increasing")

    # laminar part: Thwaites integral
    integral = 0.0
    tr_index = None
    lam_sep = False
    ue_min = 1e-6
    for i in range(1, n):
        ds = s[i] - s[i - 1]
        integral += 0.5 * (ue[i] ** 5 + ue[i - 1] ** 5) * ds
        u = max(ue[i], ue_min)
        theta[i] = math.sqrt(0.45 * nu * integral / u ** 6)
        due = (ue[i] - ue[i - 1]) / ds
        lam = theta[i] ** 2 / nu * due
        h[i], ell = thwaites_shape(lam)
        cf[i] = 2.0 * ell * nu / (u * theta[i])
        if i == 1:
            theta[0] = theta[1]
            h[0] = h[1]
            cf[0] = cf[1]
        if transition is not None:
            if s[i] >= transition:
                tr_index = i
                break
            continue
        if lam < LAMINAR_SEPARATION_LAMBDA:
            lam_sep = True
            tr_index = i
            break
        if michel_transition(u * theta[i] / nu, u * s[i] / nu):
            tr_index = i
            break

    if tr_index is None:
        cd = squire_young(theta[-1], h[-1], max(ue[-1], ue_min))
        return SurfaceLayer(s, ue, theta, h, cf, None, False, False, cd)

    # turbulent part: Head's entrainment method, RK2 on sub-steps
    i0 = max(tr_index, 1)
    h[i0] = TRANSITION_H
    th = theta[i0]
    q = max(ue[i0], ue_min) * head_h1(TRANSITION_H) * th
    cf[i0] = ludwieg_tillmann(h[i0], max(ue[i0], ue_min) * th / nu)
    separated = False
    message = ""
    for i in range(i0 + 1, n):
        ds = s[i] - s[i - 1]
        due = (ue[i] - ue[i - 1]) / ds
        hs = ds / substeps
        for k in range(substeps):
            ua = max(ue[i - 1] + due * hs * k, ue_min)
            ub = max(ue[i - 1] + due * hs * (k + 1), ue_min)
            d1, e1, _, _ = _head_rhs(th, q, ua, due, nu)
            tp, qp = th + hs * d1, q + hs * e1
            if tp <= 0 or qp <= 0:
                separated = True
                break
            d2, e2, _, _ = _head_rhs(tp, qp, ub, due, nu)
            th += 0.5 * hs * (d1 + d2)
            q += 0.5 * hs * (e1 + e2)
            if not (th > 0 and q > 0 and math.isfinite(th) and math.isfinite(q)):
                separated = True
                break
        if separated:
            message = f"turbulent march blew up at s={s[i]:.4f}"
            break
        u = max(ue[i], ue_min)
        theta[i] = th
        h[i] = head_h_from_h1(q / (u * th))
        cf[i] = ludwieg_tillmann(h[i], u * th / nu)
        if h[i] > TURBULENT_SEPARATION_H:
            if x is not None and te_separation_x is not None and x[i] >= te_separation_x:
                return _separated_tail(s, ue, theta, h, cf, i, tr_index, lam_sep)
            separated = True
            message = f"turbulent separation (H={h[i]:.2f}) at s={s[i]:.4f}"
            break
    if separated:
        return SurfaceLayer(s, ue, theta, h, cf, tr_index, lam_sep, True, math.inf, message)
    cd = squire_young(theta[-1], h[-1], max(ue[-1], ue_min))
    return SurfaceLayer(s, ue, theta, h, cf, tr_index, lam_sep, False, cd)


def _separated_tail(s, ue, theta, h, cf, i_sep, tr_index, lam_sep) -> SurfaceLayer:
    hs = TURBULENT_SEPARATION_H
    th = theta[i_sep - 1]
    u0 = max(ue[i_sep - 1], 1e-6)
    for i in range(i_sep, len(s)):
        # cf = 0, H frozen: theta * ue**(H + 2) is conserved
        u = max(ue[i], 1e-6)
        th = th * (u0 / u) ** (hs + 2.0) if u < u0 else th
        u0 = min(u0, u)
        theta[i] = th
        h[i] = hs
        cf[i] = 0.0
    cd = squire_young(theta[-1], hs, max(ue[-1], 1e-6))
    return SurfaceLayer(s, ue, theta, h, cf, tr_index, lam_sep, False, cd,
                        f"trailing-edge separation at s={s[i_sep]:.4f}", i_sep)


def split_at_stagnation(s_nodes, vt_nodes, ue_nodes):
    """Split a Selig-ordered contour at the stagnation point.

    Returns per-surface (node indices, arc length from stagnation, edge speed),
    each ordered from the stagnation point toward its trailing edge.
    """
    vt = np.asarray(vt_nodes, dtype=float)
    s_nodes = np.asarray(s_nodes, dtype=float)
    # upper-surface flow runs against the node order (negative vt)
    sign_change = np.flatnonzero((vt[:-1] < 0) & (vt[1:] >= 0))
    if sign_change.size == 0:
        raise ValueError("no stagnation point found")
    i_le = int(np.argmin(np.abs(s_nodes - 0.5 * s_nodes[-1])))
    k = int(sign_change[np.argmin(np.abs(sign_change - i_le))])
    frac = -vt[k] / (vt[k + 1] - vt[k])
    s_stag = s_nodes[k] + frac * (s_nodes[k + 1] - s_nodes[k])
    up_idx = np.arange(k, -1, -1)
    lo_idx = np.arange(k + 1, len(vt))
    up = (up_idx, np.concatenate([[0.0], s_stag - s_nodes[up_idx]]),
          np.concatenate([[0.0], ue_nodes[up_idx]]))
    lo = (lo_idx, np.concatenate([[0.0], s_nodes[lo_idx] - s_stag]),
          np.concatenate([[0.0], ue_nodes[lo_idx]]))
    return up, lo


def boundary_layer_march(s_nodes, vt_nodes, ue_nodes, x_nodes, reynolds: float,
                         transition=(None, None),
                         te_separation_x: float | None = TE_SEPARATION_X) -> BoundaryLayerResult:
    """Run both surfaces of an inviscid solution and sum Squire-Young drag."""
    ue_nodes = np.asarray(ue_nodes, dtype=float)
    if not np.all(np.isfinite(ue_nodes)) or np.max(np.abs(ue_nodes)) < 1e-9:
        return BoundaryLayerResult(math.inf, (math.nan, math.nan), False, message="no edge flow")
    try:
        up, lo = split_at_stagnation(s_nodes, vt_nodes, ue_nodes)
    except ValueError as exc:
        return BoundaryLayerResult(math.inf, (math.nan, math.nan), False, message=str(exc))
    layers = []
    tr_x = []
    x_nodes = np.asarray(x_nodes, dtype=float)
    for (idx, s, ue), forced in zip((up, lo), transition):
        x_st = np.concatenate([[x_nodes[idx[0]]], x_nodes[idx]])
        layer = march_surface(s, ue, reynolds, forced, x=x_st, te_separation_x=te_separation_x)
        layers.append(layer)
        if layer.transition_index is None:
            tr_x.append(1.0)
        else:
            j = max(layer.transition_index - 1, 0)
            tr_x.append(float(x_nodes[idx[j]]))
    upper, lower = layers
    converged = upper.converged and lower.converged
    cd = upper.cd + lower.cd if converged else math.inf
    msg = "; ".join(f"{name}: {ly.message}" for name, ly in (("upper", upper), ("lower", lower))
                    if ly.message)
    return BoundaryLayerResult(cd, tuple(tr_x), converged, upper, lower, msg)

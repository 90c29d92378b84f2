"""Real-coded GA and NSGA-II over bounded boxes, with Deb's constraint domination.

The core works in minimization; maximized objectives are negated at the
problem boundary. Constraint functions follow the g(x) <= 0 convention and
an individual's violation is the sum of the positive parts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class EvaluationError(RuntimeError):
    """More than half of a generation could not be evaluated."""


@dataclass
class OptProblem:
    """``evaluator`` maps an (n, dim) array to an (n, k) array of outputs.

    ``objectives`` picks output columns with a sense; each constraint maps the
    output array to g values (feasible where g <= 0). Rows with any
    non-finite output count as failed and are treated as infinitely infeasible.
    """

    bounds: np.ndarray
    evaluator: Callable[[np.ndarray], np.ndarray]
    objectives: Sequence[tuple[int, str]] = ((0, "minimize"),)
    constraints: Sequence[Callable[[np.ndarray], np.ndarray]] = ()
    names: Sequence[str] = ()

    def __post_init__(self):
        self.bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if self.bounds.shape[1] != 2 or len(self.bounds) < 1:
            raise ValueError("bounds must have shape (dim, 2)")
        if np.any(self.bounds[:, 0] > self.bounds[:, 1]):
            raise ValueError("lower bound above upper bound")
        if not self.objectives:
            raise ValueError("at least one objective is required")
        for _, sense in self.objectives:
            if sense not in ("minimize", "maximize"):
                raise ValueError(f"unknown sense {sense!r}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def n_obj(self) -> int:
        return len(self.objectives)

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Returns (raw outputs, minimization objectives, violation, failed mask)."""
        x = np.atleast_2d(x)
        out = np.atleast_2d(np.asarray(self.evaluator(x), dtype=float))
        if len(out) != len(x):
            raise ValueError("evaluator returned the wrong number of rows")
        failed = ~np.all(np.isfinite(out), axis=1)
        f = np.column_stack([out[:, i] * (1.0 if s == "minimize" else -1.0)
                             for i, s in self.objectives])
        cv = np.zeros(len(x))
        for g in self.constraints:
            cv += np.maximum(np.asarray(g(out), dtype=float), 0.0)
        f[failed] = np.inf
        cv[failed | ~np.isfinite(cv)] = np.inf
        return out, f, cv, failed

    def to_user(self, f_min: np.ndarray) -> np.ndarray:
        """Minimization-oriented objective values back to their stated sense."""
        signs = np.array([1.0 if s == "minimize" else -1.0 for _, s in self.objectives])
        return f_min * signs


@dataclass(frozen=True)
class EaConfig:
    population: int = 100
    generations: int = 200
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    mutation_prob: float | None = None  # None means 1 / dim
    crossover_prob: float = 0.9
    seed: int | None = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")

    def pm(self, dim: int) -> float:
        return 1.0 / dim if self.mutation_prob is None else self.mutation_prob

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ------------------------------------------------------------------ dominance

def constrained_dominates(fa, cva: float, fb, cvb: float) -> bool:
    """Deb's rule on minimization objectives ``fa``, ``fb`` and total violations."""
    if cva == 0.0 and cvb > 0.0:
        return True
    if cva > 0.0 or cvb > 0.0:
        return cva < cvb
    fa, fb = np.asarray(fa), np.asarray(fb)
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def domination_matrix(f: np.ndarray, cv: np.ndarray) -> np.ndarray:
    """D[i, j] is True when i constrained-dominates j."""
    f = np.asarray(f, dtype=float)
    cv = np.asarray(cv, dtype=float)
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    feas = cv == 0.0
    both = feas[:, None] & feas[None, :]
    dom = np.where(both, le & lt, False)
    dom |= feas[:, None] & ~feas[None, :]
    infeas_pair = ~feas[:, None] & ~feas[None, :]
    dom |= infeas_pair & (cv[:, None] < cv[None, :])
    return dom


def fast_nondominated_sort(f, cv=None) -> list[np.ndarray]:
    """Fronts as index arrays; front 0 is the non-dominated set."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    n = len(f)
    if n == 0:
        return []
    cv = np.zeros(n) if cv is None else np.asarray(cv, dtype=float)
    dom = domination_matrix(f, cv)
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current)
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def crowding_distance(f) -> np.ndarray:
    f = np.atleast_2d(np.asarray(f, dtype=float))
    n, m = f.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(f[:, k], kind="stable")
        vals = f[order, k]
        span = vals[-1] - vals[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0 and np.isfinite(span):
            dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


# ------------------------------------------------------------------ variation

def sbx_crossover(p1, p2, bounds, eta: float, prob: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Bounded simulated binary crossover on matched parent rows."""
    c1, c2 = p1.copy(), p2.copy()
    n, d = p1.shape
    xl, xu = bounds[:, 0], bounds[:, 1]
    do_pair = rng.random(n) < prob
    do_var = (rng.random((n, d)) < 0.5) & do_pair[:, None] & (np.abs(p1 - p2) > 1e-14)
    y1 = np.minimum(p1, p2)
    y2 = np.maximum(p1, p2)
    gap = np.where(do_var, y2 - y1, 1.0)
    u = rng.random((n, d))

    def betaq(beta):
        alpha = 2.0 - beta ** -(eta + 1.0)
        return np.where(u <= 1.0 / alpha, (u * alpha) ** (1.0 / (eta + 1.0)),
                        (1.0 / np.maximum(2.0 - u * alpha, 1e-300)) ** (1.0 / (eta + 1.0)))

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        b1 = betaq(1.0 + 2.0 * (y1 - xl) / gap)
        b2 = betaq(1.0 + 2.0 * (xu - y2) / gap)
    k1 = np.clip(0.5 * (y1 + y2 - b1 * (y2 - y1)), xl, xu)
    k2 = np.clip(0.5 * (y1 + y2 + b2 * (y2 - y1)), xl, xu)
    swap = rng.random((n, d)) < 0.5
    k1, k2 = np.where(swap, k2, k1), np.where(swap, k1, k2)
    c1[do_var] = k1[do_var]
    c2[do_var] = k2[do_var]
    return c1, c2


def polynomial_mutation(x, bounds, eta: float, prob: float, rng) -> np.ndarray:
    x = x.copy()
    xl, xu = bounds[:, 0], bounds[:, 1]
    span = np.where(xu > xl, xu - xl, 1.0)
    mask = (rng.random(x.shape) < prob) & (xu > xl)
    u = rng.random(x.shape)
    d1 = (x - xl) / span
    d2 = (xu - x) / span
    p = 1.0 / (eta + 1.0)
    lo = u < 0.5
    val_lo = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
    val_hi = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
    dq = np.where(lo, val_lo ** p - 1.0, 1.0 - val_hi ** p)
    x = np.where(mask, x + dq * span, x)
    return np.clip(x, xl, xu)


def _random_population(bounds, n, rng) -> np.ndarray:
    return bounds[:, 0] + rng.random((n, len(bounds))) * (bounds[:, 1] - bounds[:, 0])


def _check_failures(failed, generation):
    if failed.size and failed.mean() > 0.5:
        raise EvaluationError(f"{int(failed.sum())} of {failed.size} evaluations failed "
                              f"in generation {generation}")


def _better(fa, cva, fb, cvb) -> np.ndarray:
    """Elementwise single-objective comparison under Deb's rule (a strictly better)."""
    feas_a, feas_b = cva == 0.0, cvb == 0.0
    return np.where(feas_a & feas_b, fa < fb,
                    np.where(feas_a != feas_b, feas_a, cva < cvb))


def _vary(x, parents, problem, config, rng):
    p1, p2 = x[parents[0::2]], x[parents[1::2]]
    c1, c2 = sbx_crossover(p1, p2, problem.bounds, config.sbx_eta, config.crossover_prob, rng)
    kids = np.empty((len(parents), problem.dim))
    kids[0::2], kids[1::2] = c1, c2
    return polynomial_mutation(kids, problem.bounds, config.mutation_eta,
                               config.pm(problem.dim), rng)


# ------------------------------------------------------------------ GA

@dataclass
class GaResult:
    x: np.ndarray
    value: float           # in the objective's stated sense
    violation: float
    feasible: bool
    history: list = field(default_factory=list)
    evaluations: int = 0


def ga_minimize(problem: OptProblem, config: EaConfig = EaConfig()) -> GaResult:
    """Generational GA with single-best elitism; returns the best point ever seen."""
    if problem.n_obj != 1:
        raise ValueError("ga_minimize needs exactly one objective")
    rng = np.random.default_rng(config.seed)
    n = config.population
    x = _random_population(problem.bounds, n, rng)
    _, f, cv, failed = problem.evaluate(x)
    _check_failures(failed, 0)
    f = f[:, 0]
    evals = n
    best = _best_index(f, cv)
    bx, bf, bcv = x[best].copy(), f[best], cv[best]
    history = [_ga_record(0, problem, f, cv, bf)]
    for gen in range(1, config.generations + 1):
        a, b = rng.integers(0, n, size=(2, n))
        parents = np.where(_better(f[a], cv[a], f[b], cv[b]), a, b)
        kids = _vary(x, parents, problem, config, rng)
        _, kf, kcv, failed = problem.evaluate(kids)
        _check_failures(failed, gen)
        kf = kf[:, 0]
        evals += n
        # elitism: the previous best replaces the worst child
        worst = _worst_index(kf, kcv)
        kids[worst], kf[worst], kcv[worst] = bx, bf, bcv
        x, f, cv = kids, kf, kcv
        i = _best_index(f, cv)
        if _better(f[i], cv[i], bf, bcv):
            bx, bf, bcv = x[i].copy(), f[i], cv[i]
        history.append(_ga_record(gen, problem, f, cv, bf))
    value = float(problem.to_user(np.array([bf]))[0])
    return GaResult(bx, value, float(bcv), bool(bcv == 0.0), history, evals)


def _best_index(f, cv) -> int:
    order = np.lexsort((f, cv))  # least violation, then objective
    return int(order[0])


def _worst_index(f, cv) -> int:
    return int(np.lexsort((f, cv))[-1])


def _ga_record(gen, problem, f, cv, best_f) -> dict:
    feas = cv == 0.0
    sign = 1.0 if problem.objectives[0][1] == "minimize" else -1.0
    mean = float(np.mean(f[feas]) * sign) if feas.any() else float("nan")
    return {"generation": gen, "best_0": float(best_f * sign), "mean_0": mean,
            "feasible_fraction": float(feas.mean())}


# ------------------------------------------------------------------ NSGA-II

@dataclass
class ParetoSet:
    """Mutually non-dominated points sorted by the first objective (stated sense)."""

    x: np.ndarray
    f: np.ndarray
    cv: np.ndarray
    history: list = field(default_factory=list)
    evaluations: int = 0

    def __len__(self) -> int:
        return len(self.x)

    @property
    def feasible(self) -> bool:
        return bool(len(self.cv) and np.all(self.cv == 0.0))


def _rank_and_crowding(f, cv):
    fronts = fast_nondominated_sort(f, cv)
    rank = np.empty(len(f), dtype=int)
    crowd = np.empty(len(f))
    for r, front in enumerate(fronts):
        rank[front] = r
        crowd[front] = crowding_distance(f[front])
    return fronts, rank, crowd


def nsga2(problem: OptProblem, config: EaConfig = EaConfig()) -> ParetoSet:
    if problem.n_obj < 2:
        raise ValueError("nsga2 needs at least two objectives")
    rng = np.random.default_rng(config.seed)
    n = config.population
    x = _random_population(problem.bounds, n, rng)
    _, f, cv, failed = problem.evaluate(x)
    _check_failures(failed, 0)
    evals = n
    _, rank, crowd = _rank_and_crowding(f, cv)
    history = [_nsga_record(0, problem, f, cv, rank)]
    for gen in range(1, config.generations + 1):
        a, b = rng.integers(0, n, size=(2, n))
        a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
        tie = (rank[a] == rank[b]) & (crowd[a] == crowd[b])
        a_wins = np.where(tie, rng.random(n) < 0.5, a_wins)
        parents = np.where(a_wins, a, b)
        kids = _vary(x, parents, problem, config, rng)
        _, kf, kcv, failed = problem.evaluate(kids)
        _check_failures(failed, gen)
        evals += n
        ux, uf, ucv = np.vstack([x, kids]), np.vstack([f, kf]), np.concatenate([cv, kcv])
        fronts, urank, ucrowd = _rank_and_crowding(uf, ucv)
        keep = []
        for front in fronts:
            if len(keep) + len(front) <= n:
                keep.extend(front)
            else:
                order = np.argsort(-ucrowd[front], kind="stable")
                keep.extend(front[order[: n - len(keep)]])
                break
        keep = np.array(keep)
        x, f, cv = ux[keep], uf[keep], ucv[keep]
        _, rank, crowd = _rank_and_crowding(f, cv)
        history.append(_nsga_record(gen, problem, f, cv, rank))

    first = np.flatnonzero(rank == 0)
    if np.any(cv[first] == 0.0):
        first = first[cv[first] == 0.0]
    px, pf, pcv = x[first], problem.to_user(f[first]), cv[first]
    _, uniq = np.unique(px, axis=0, return_index=True)
    uniq = np.sort(uniq)
    px, pf, pcv = px[uniq], pf[uniq], pcv[uniq]
    order = np.argsort(pf[:, 0], kind="stable")
    return ParetoSet(px[order], pf[order], pcv[order], history, evals)


def _nsga_record(gen, problem, f, cv, rank) -> dict:
    feas = cv == 0.0
    user = problem.to_user(f)
    rec = {"generation": gen, "feasible_fraction": float(feas.mean()),
           "front_size": int(np.sum(rank == 0))}
    for k, (_, sense) in enumerate(problem.objectives):
        col = user[feas, k] if feas.any() else np.array([np.nan])
        rec[f"best_{k}"] = float(np.max(col) if sense == "maximize" else np.min(col))
        rec[f"mean_{k}"] = float(np.mean(col))
    return rec


def write_history_csv(history: list, path) -> None:
    if not history:
        Path(path).write_text("")
        return
    keys = list(history[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for rec in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})

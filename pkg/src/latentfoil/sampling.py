"""Design of experiments, solver-backed dataset construction, splits and persistence."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .geometry import FREE_NAMES, ParsecParams, StationGrid, default_grid

log = logging.getLogger(__name__)

DATASET_FORMAT = "latentfoil-dataset/1"
QOI_NAMES = ("l_over_d", "cd", "cm", "area")
CSV_PARAM_NAMES = ("r_le", "x_up", "z_up", "x_low", "z_low", "z_te")
MAX_FAILURE_FRACTION = 0.20


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class DesignSpace:
    names: tuple = FREE_NAMES
    lower: tuple = (0.015, 0.3, 0.09, 0.3, -0.15, -0.02)
    upper: tuple = (0.04, 0.45, 0.15, 0.45, -0.09, 0.02)

    def __post_init__(self):
        if not len(self.names) == len(self.lower) == len(self.upper):
            raise ValueError("design space arrays differ in length")
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"design variable {name}: lower {lo} must be below upper {hi}")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lower, self.upper]).astype(float)

    def baseline(self) -> np.ndarray:
        """Midpoint of each range."""
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d) -> "DesignSpace":
        return cls(tuple(d["names"]), tuple(float(v) for v in d["lower"]),
                   tuple(float(v) for v in d["upper"]))


@dataclass
class DesignRecord:
    params: ParsecParams
    cp: np.ndarray
    qoi: np.ndarray  # (L/D, Cd, Cm, area)
    source: str = "doe"
    iteration: int = 0
    split: str = "train"
    converged: bool = True

    def __post_init__(self):
        self.cp = np.asarray(self.cp, dtype=float)
        self.qoi = np.asarray(self.qoi, dtype=float)
        if self.source not in ("doe", "infill"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.split not in ("train", "test"):
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def target(self) -> np.ndarray:
        """Regressor target row: six shape parameters then the four QoI."""
        return np.concatenate([self.params.free_vector(), self.qoi])

    @classmethod
    def from_result(cls, params: ParsecParams, result, **kw) -> "DesignRecord":
        return cls(params, result.cp, result.qoi, converged=bool(result.converged), **kw)


@dataclass
class Dataset:
    records: list = field(default_factory=list)
    grid: StationGrid = field(default_factory=default_grid)
    space: DesignSpace = field(default_factory=DesignSpace)
    seed: int | None = None
    solver_id: str = ""
    conditions: dict = field(default_factory=dict)
    provenance: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self, split: str | None = None, converged_only: bool = True) -> list[int]:
        """Record ids (row positions) in ``split``; failed records are excluded by default."""
        return [i for i, r in enumerate(self.records)
                if (split is None or r.split == split) and (r.converged or not converged_only)]

    def count(self, split: str | None = None) -> int:
        return len(self.ids(split))

    def matrices(self, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
        """(Cp rows, 10-column targets) over converged records of one split."""
        ids = self.ids(split)
        n = self.grid.n_stations
        if not ids:
            return np.empty((0, n)), np.empty((0, 10))
        cp = np.array([self.records[i].cp for i in ids])
        y = np.array([self.records[i].target for i in ids])
        return cp, y

    # ---------------------------------------------------------------- persistence

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.grid.n_stations
        w.writerow([*CSV_PARAM_NAMES, *(f"cp_{i:03d}" for i in range(n)), *QOI_NAMES,
                    "source", "iteration", "split", "converged"])
        for r in self.records:
            w.writerow([*(_fmt(v) for v in r.params.free_vector()), *(_fmt(v) for v in r.cp),
                        *(_fmt(v) for v in r.qoi), r.source, r.iteration, r.split,
                        "true" if r.converged else "false"])
        return buf.getvalue()

    def metadata(self) -> dict:
        fixed = self.records[0].params.fixed_dict() if self.records else ParsecParams.baseline().fixed_dict()
        return {"format": DATASET_FORMAT, "grid": self.grid.to_dict(), "space": self.space.to_dict(),
                "seed": self.seed, "solver": self.solver_id, "conditions": self.conditions,
                "fixed_parsec": fixed, "provenance": self.provenance}

    def save(self, path) -> tuple[Path, Path]:
        path = Path(path)
        meta_path = metadata_path(path)
        path.write_text(self.csv_text(), encoding="utf-8")
        meta_path.write_text(json.dumps(self.metadata(), indent=1, sort_keys=True) + "\n",
                             encoding="utf-8")
        return path, meta_path

    @classmethod
    def load(cls, path) -> "Dataset":
        path = Path(path)
        meta = json.loads(metadata_path(path).read_text(encoding="utf-8"))
        if meta.get("format") != DATASET_FORMAT:
            raise DatasetError(f"{path}: unsupported dataset format {meta.get('format')!r}")
        grid = StationGrid.from_dict(meta["grid"])
        fixed = meta.get("fixed_parsec", {})
        n = grid.n_stations
        records = []
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != 6 + n + 4 + 4:
                raise DatasetError(f"{path}: header has {len(header)} columns, expected {n + 14}")
            for row in reader:
                vals = [float(v) for v in row[:6 + n + 4]]
                params = ParsecParams.from_free(vals[:6], **fixed)
                records.append(DesignRecord(params, vals[6:6 + n], vals[6 + n:], row[-4],
                                            int(row[-3]), row[-2], row[-1] == "true"))
        return cls(records, grid, DesignSpace.from_dict(meta["space"]), meta.get("seed"),
                   meta.get("solver", ""), meta.get("conditions", {}), meta.get("provenance", []))


def metadata_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".meta.json")


def _fmt(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


# -------------------------------------------------------------------- operations

def lhs_sample(space: DesignSpace, n: int, seed=None, **fixed) -> list[ParsecParams]:
    """Stratified Latin hypercube: each 1-D projection hits each of ``n`` bins once."""
    if n < 1:
        raise ValueError("n must be at least 1")
    unit = qmc.LatinHypercube(d=space.dim, seed=np.random.default_rng(seed)).random(n)
    pts = qmc.scale(unit, space.lower, space.upper)
    return [ParsecParams.from_free(p, **fixed) for p in pts]


def _evaluate(args):
    solver, params, cond = args
    return solver.evaluate_params(params, cond)


def evaluate_many(solver, param_sets, cond, workers: int = 1) -> list:
    """Solver results in input order, optionally across processes."""
    jobs = [(solver, p, cond) for p in param_sets]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_evaluate, jobs, chunksize=max(len(jobs) // (4 * workers), 1)))
    return [_evaluate(j) for j in jobs]


def build_dataset(param_sets, solver, cond, grid: StationGrid | None = None,
                  space: DesignSpace | None = None, seed=None, workers: int = 1,
                  max_failure_fraction: float = MAX_FAILURE_FRACTION) -> Dataset:
    """Evaluate every design; failures are kept but flagged ``converged=False``."""
    param_sets = list(param_sets)
    grid = grid or getattr(solver, "grid", None) or default_grid()
    ds = Dataset([], grid, space or DesignSpace(), seed, getattr(solver, "name", type(solver).__name__),
                 cond.to_dict() if hasattr(cond, "to_dict") else dict(cond))
    if not param_sets:
        return ds
    results = evaluate_many(solver, param_sets, cond, workers)
    for p, res in zip(param_sets, results):
        if len(res.cp) != grid.n_stations:
            raise DatasetError(f"solver returned {len(res.cp)} Cp values, grid has {grid.n_stations}")
        ds.records.append(DesignRecord.from_result(p, res))
    failed = sum(not r.converged for r in ds.records)
    ds.provenance.append({"event": "doe", "designs": len(param_sets), "failed": failed})
    if failed:
        log.info("%d of %d designs failed and are excluded from training", failed, len(param_sets))
    if failed > max_failure_fraction * len(param_sets):
        raise DatasetError(f"{failed} of {len(param_sets)} designs failed: the design space does "
                           "not suit the solver (more than "
                           f"{max_failure_fraction:.0%} unconverged)")
    return ds


def split_dataset(ds: Dataset, ratio: float = 0.8, seed=None) -> Dataset:
    """Seeded train/test assignment over converged DoE records; infill stays in train."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    doe = [i for i, r in enumerate(ds.records) if r.source == "doe" and r.converged]
    if sum(r.converged for r in ds.records) < 5:
        raise DatasetError("need at least 5 converged records to split")
    order = np.random.default_rng(seed).permutation(len(doe))
    n_train = int(round(ratio * len(doe)))
    for rank, k in enumerate(order):
        ds.records[doe[k]].split = "train" if rank < n_train else "test"
    ds.provenance.append({"event": "split", "ratio": ratio, "seed": seed, "train": n_train,
                          "test": len(doe) - n_train})
    return ds


def append_infill(ds: Dataset, records, iteration: int, grid: StationGrid | None = None) -> Dataset:
    """Add solver-validated designs as training rows stamped with ``iteration``."""
    if grid is not None and grid != ds.grid:
        raise DatasetError("infill grid differs from the dataset grid")
    records = list(records)
    for r in records:
        if len(r.cp) != ds.grid.n_stations:
            raise DatasetError("infill Cp length differs from the dataset grid")
        r.source, r.split, r.iteration = "infill", "train", iteration
        ds.records.append(r)
    if records:
        ds.provenance.append({"event": "infill", "iteration": iteration, "added": len(records)})
    return ds

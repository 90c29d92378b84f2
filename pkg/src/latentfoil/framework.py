"""Two-step inverse design: latent point -> Cp (decoder) -> shape and QoI (regressor).

Also holds the target-distribution optimization problems, infill selection,
solver validation, the active-learning loop with transfer learning, and the
latent heatmap.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generative import VAE_FIRST, VAE_TRANSFER, VaeModel, VaeTrainConfig, train_vae
from .geometry import ParsecParams
from .neural import MLP_FIRST, MLP_TRANSFER, MlpModel, TrainConfig, train_mlp
from .optimizer import EaConfig, GaResult, OptProblem, ParetoSet, ga_minimize, nsga2
from .sampling import Dataset, DesignRecord, append_infill

log = logging.getLogger(__name__)

QOI_COLUMNS = ("l_over_d", "cd", "cm", "area")
SHAPE_COLUMNS = ("r_le", "x_up", "z_up", "x_low", "z_low", "z_te")
HEATMAP_COLUMNS = ("z1", "z2", "l_over_d", "area", "cd", "cm", *SHAPE_COLUMNS)
# optimizer output columns: QoI then shape parameters
_LD, _CD, _CM, _AREA = range(4)


class FrameworkError(RuntimeError):
    pass


# ------------------------------------------------------------------ two-step model

@dataclass
class TwoStepModel:
    vae: VaeModel
    mlp: MlpModel
    bounds: np.ndarray  # (latent_dim, 2)

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.vae.n_features != self.mlp.net.dims[0]:
            raise ValueError("decoder output and regressor input dims differ")

    def predict(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched: (raw Cp, six shape parameters, four QoI) per latent row."""
        cp = self.vae.decode_cp(np.atleast_2d(z))
        out = self.mlp.predict(cp)
        return cp, out[:, :6], out[:, 6:10]

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.vae.save(d / "vae.json")
        self.mlp.save(d / "mlp.json")
        (d / "latent_bounds.json").write_text(json.dumps(self.bounds.tolist()) + "\n")

    @classmethod
    def load(cls, directory) -> "TwoStepModel":
        d = Path(directory)
        return cls(VaeModel.load(d / "vae.json"), MlpModel.load(d / "mlp.json"),
                   np.array(json.loads((d / "latent_bounds.json").read_text())))


def two_step_predict(model: TwoStepModel, z):
    """Single latent point -> (Cp 199, shape params 6, QoI 4)."""
    cp, shape, qoi = model.predict(np.asarray(z, dtype=float)[None, :])
    return cp[0], shape[0], qoi[0]


# ------------------------------------------------------------------ problems

@dataclass(frozen=True)
class ProblemSpec:
    mode: str = "single"  # or "multi"
    conditions: object = None
    baseline_cd: float | None = None
    baseline_area: float | None = None
    baseline_l_over_d: float | None = None
    baseline_cm: float | None = None
    cm_min: float = -0.08
    area_fraction: float = 0.9
    threshold_pct: float = 1.0

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def objective_columns(self) -> tuple[int, ...]:
        return (_LD,) if self.mode == "single" else (_LD, _AREA)

    def constraint_values(self, qoi) -> np.ndarray:
        """g <= 0 convention, columns (cd, cm[, area]) for rows of QoI."""
        qoi = np.atleast_2d(qoi)
        g = [qoi[:, _CD] - self.baseline_cd, self.cm_min - qoi[:, _CM]]
        if self.mode == "single":
            g.append(self.area_fraction * self.baseline_area - qoi[:, _AREA])
        return np.column_stack(g)

    def replace(self, **kw) -> "ProblemSpec":
        d = dict(self.__dict__)
        d.update(kw)
        return ProblemSpec(**d)


def compute_baselines(spec: ProblemSpec, solver, params: ParsecParams | None = None):
    """Fill the baseline Cd, area and L/D from a solver run on the baseline airfoil."""
    params = params or ParsecParams.baseline()
    res = solver.evaluate_params(params, spec.conditions)
    if not res.converged:
        raise FrameworkError(f"baseline airfoil did not converge: {res.message}")
    return spec.replace(baseline_cd=float(res.cd), baseline_area=float(res.area),
                        baseline_l_over_d=float(res.l_over_d), baseline_cm=float(res.cm)), res


def make_problem(spec: ProblemSpec, model: TwoStepModel) -> OptProblem:
    if spec.baseline_cd is None or spec.baseline_area is None:
        raise FrameworkError("baselines must be computed before building the problem")

    def evaluator(z):
        _, shape, qoi = model.predict(z)
        return np.hstack([qoi, shape])

    cons = [lambda out: out[:, _CD] - spec.baseline_cd,
            lambda out: spec.cm_min - out[:, _CM]]
    if spec.mode == "single":
        cons.append(lambda out: spec.area_fraction * spec.baseline_area - out[:, _AREA])
    objectives = [(c, "maximize") for c in spec.objective_columns]
    return OptProblem(model.bounds, evaluator, objectives, cons,
                      names=QOI_COLUMNS + SHAPE_COLUMNS)


def optimize(spec: ProblemSpec, model: TwoStepModel, config: EaConfig):
    problem = make_problem(spec, model)
    return ga_minimize(problem, config) if spec.mode == "single" else nsga2(problem, config)


def select_infill(result, mode: str) -> np.ndarray:
    """Single: the best point. Multi: leftmost, middle and rightmost Pareto members."""
    if mode == "single":
        return np.atleast_2d(result.x)
    if len(result) == 0:
        raise FrameworkError("empty Pareto set")
    k = len(result)
    idx = sorted({0, (k - 1) // 2, k - 1})
    pts = result.x[idx]
    _, first = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(first)]


# ------------------------------------------------------------------ validation

@dataclass
class CandidateValidation:
    z: np.ndarray
    params: np.ndarray           # predicted shape parameters
    predicted: np.ndarray        # (L/D, Cd, Cm, area) from the two-step model
    calculated: np.ndarray | None
    errors_pct: np.ndarray | None
    cp_max_deviation: float | None
    constraints_ok: bool
    validated: bool
    message: str = ""

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in a]
        return {"z": arr(self.z), "params": arr(self.params), "predicted": arr(self.predicted),
                "calculated": arr(self.calculated), "errors_pct": arr(self.errors_pct),
                "cp_max_deviation": self.cp_max_deviation, "constraints_ok": self.constraints_ok,
                "validated": self.validated, "message": self.message}


@dataclass
class ValidationReport:
    candidates: list
    objective_columns: tuple
    threshold_pct: float
    baseline: np.ndarray | None = None  # baseline (L/D, Cd, Cm, area) when known

    @property
    def criterion_met(self) -> bool:
        if not self.candidates:
            return False
        return all(c.validated and all(abs(c.errors_pct[k]) < self.threshold_pct
                                       for k in self.objective_columns)
                   for c in self.candidates)

    @property
    def max_objective_error(self) -> float:
        errs = [abs(c.errors_pct[k]) for c in self.candidates if c.validated
                for k in self.objective_columns]
        return max(errs) if errs else math.inf

    def to_dict(self) -> dict:
        return {"criterion_met": self.criterion_met, "threshold_pct": self.threshold_pct,
                "objective_columns": [QOI_COLUMNS[k] for k in self.objective_columns],
                "candidates": [c.to_dict() for c in self.candidates]}

    def summary_rows(self) -> list[tuple[str, str, list]]:
        """Five summary rows per validated candidate: baseline, predicted, calculated,
        error, and comparison with baseline (percentages)."""
        rows = []
        for i, c in enumerate(self.candidates):
            label = f"design {i + 1}"
            base = self.baseline
            rows.append((label, "Baseline", list(base) if base is not None else [math.nan] * 4))
            rows.append((label, "Predicted", list(c.predicted)))
            calc = c.calculated if c.calculated is not None else [math.nan] * 4
            rows.append((label, "Calculated", list(calc)))
            err = c.errors_pct if c.errors_pct is not None else [math.nan] * 4
            rows.append((label, "Error between predicted and calculated [%]", list(err)))
            if base is not None and c.calculated is not None:
                vs = [(cv - bv) / bv * 100.0 if bv else math.nan for cv, bv in zip(c.calculated, base)]
            else:
                vs = [math.nan] * 4
            rows.append((label, "Comparison with baseline [%]", vs))
        return rows

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["design", "row", *QOI_COLUMNS])
        for label, name, vals in self.summary_rows():
            w.writerow([label, name, *(repr(float(v)) for v in vals)])
        return buf.getvalue()

    def summary_text(self) -> str:
        heads = ("L/D", "Cd", "Cm", "Area")
        lines = []
        width = 44
        current = None
        for label, name, vals in self.summary_rows():
            if label != current:
                if current is not None:
                    lines.append("")
                lines.append(label)
                lines.append(f"{'':{width}}" + "".join(f"{h:>12}" for h in heads))
                current = label
            pct = name.endswith("[%]")
            cells = "".join(f"{v:>12.2f}" if pct or k in (0,) else f"{v:>12.5f}"
                            for k, v in enumerate(vals))
            lines.append(f"{name:<{width}}" + cells)
        return "\n".join(lines) + "\n"


def relative_error_pct(predicted, calculated) -> np.ndarray:
    """(predicted - calculated) / calculated * 100, elementwise."""
    predicted = np.asarray(predicted, dtype=float)
    calculated = np.asarray(calculated, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (predicted - calculated) / calculated * 100.0


def validate_candidates(candidates, model: TwoStepModel, solver, spec: ProblemSpec,
                        fixed: dict | None = None):
    """Run the solver on the predicted shapes; returns (report, infill records)."""
    fixed = fixed or {}
    reports, records = [], []
    for z in np.atleast_2d(candidates):
        cp_pred, shape, qoi = two_step_predict(model, z)
        try:
            params = ParsecParams.from_free(shape, **fixed)
        except ValueError as exc:
            reports.append(CandidateValidation(z, shape, qoi, None, None, None, False, False,
                                               f"invalid shape parameters: {exc}"))
            continue
        res = solver.evaluate_params(params, spec.conditions)
        if not res.converged:
            log.info("candidate %s could not be validated: %s", np.round(z, 4), res.message)
            reports.append(CandidateValidation(z, shape, qoi, None, None, None, False, False,
                                               res.message or "solver did not converge"))
            continue
        calc = res.qoi
        ok = bool(np.all(spec.constraint_values(calc) <= 0.0))
        dev = float(np.max(np.abs(cp_pred - res.cp)))
        reports.append(CandidateValidation(z, shape, qoi, calc, relative_error_pct(qoi, calc),
                                           dev, ok, True))
        records.append(DesignRecord.from_result(params, res))
    baseline = None
    if spec.baseline_l_over_d is not None:
        cm = spec.baseline_cm if spec.baseline_cm is not None else math.nan
        baseline = np.array([spec.baseline_l_over_d, spec.baseline_cd, cm, spec.baseline_area])
    return ValidationReport(reports, spec.objective_columns, spec.threshold_pct, baseline), records


# ------------------------------------------------------------------ active learning

@dataclass
class ActiveLearningConfig:
    vae_first: VaeTrainConfig = VAE_FIRST
    vae_transfer: VaeTrainConfig = VAE_TRANSFER
    mlp_first: TrainConfig = MLP_FIRST
    mlp_transfer: TrainConfig = MLP_TRANSFER
    ea: EaConfig = EaConfig()
    max_iterations: int = 60
    seed: int = 0


@dataclass
class IterationRecord:
    iteration: int
    train_rows: int
    vae_loss: float
    mlp_train_mse: float
    latent_bounds: np.ndarray
    optimum: dict
    report: ValidationReport
    added: int

    def ledger_row(self) -> dict:
        best = self.report.candidates[0] if self.report.candidates else None
        return {"iteration": self.iteration, "train_rows": self.train_rows,
                "vae_loss": self.vae_loss, "mlp_train_mse": self.mlp_train_mse,
                "candidates": len(self.report.candidates),
                "validated": sum(c.validated for c in self.report.candidates),
                "predicted_l_over_d": float(best.predicted[_LD]) if best else math.nan,
                "calculated_l_over_d": (float(best.calculated[_LD])
                                        if best is not None and best.validated else math.nan),
                "max_objective_error_pct": self.report.max_objective_error,
                "criterion_met": self.report.criterion_met, "added": self.added}

    def to_dict(self) -> dict:
        return {**self.ledger_row(), "latent_bounds": self.latent_bounds.tolist(),
                "optimum": self.optimum, "validation": self.report.to_dict()}


@dataclass
class RunReport:
    iterations: list
    converged: bool
    spec: ProblemSpec
    model: TwoStepModel | None = None
    dataset: Dataset | None = None
    message: str = ""

    @property
    def final(self) -> IterationRecord | None:
        return self.iterations[-1] if self.iterations else None

    def ledger_csv(self) -> str:
        buf = io.StringIO()
        rows = [it.ledger_row() for it in self.iterations]
        if not rows:
            return ""
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        s = self.spec
        return {"converged": self.converged, "message": self.message,
                "iterations": [it.to_dict() for it in self.iterations],
                "problem": {"mode": s.mode, "baseline_cd": s.baseline_cd,
                            "baseline_area": s.baseline_area,
                            "baseline_l_over_d": s.baseline_l_over_d,
                            "baseline_cm": s.baseline_cm, "cm_min": s.cm_min,
                            "area_fraction": s.area_fraction, "threshold_pct": s.threshold_pct}}

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "run_report.json").write_text(json.dumps(_jsonable(self.to_dict()), indent=1) + "\n")
        (d / "ledger.csv").write_text(self.ledger_csv())
        if self.final is not None:
            (d / "summary.csv").write_text(self.final.report.summary_csv())
            (d / "summary.txt").write_text(self.final.report.summary_text())
        if self.model is not None:
            self.model.save(d / "models")


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _jsonable(obj.item())
    return obj


def _seed(master: int, iteration: int, stream: int) -> int:
    return int(np.random.SeedSequence([master, iteration, stream]).generate_state(1)[0])


def train_models(dataset: Dataset, config: ActiveLearningConfig, iteration: int,
                 prior: TwoStepModel | None = None, logger=None) -> TwoStepModel:
    """Fit the VAE and regressor on the training split; transfer from ``prior`` if given."""
    train_cp, train_y = dataset.matrices("train")
    test_cp, test_y = dataset.matrices("test")
    if prior is None:
        vcfg = config.vae_first.replace(seed=_seed(config.seed, iteration, 1))
        mcfg = config.mlp_first.replace(seed=_seed(config.seed, iteration, 2))
    else:
        vcfg = config.vae_transfer.replace(seed=_seed(config.seed, iteration, 1))
        mcfg = config.mlp_transfer.replace(seed=_seed(config.seed, iteration, 2))
    vae = train_vae(train_cp, vcfg, prior.vae if prior else None, test_x=test_cp, logger=logger)
    mlp = train_mlp(train_cp, train_y, mcfg, prior.mlp if prior else None, test_cp, test_y,
                    logger=logger)
    return TwoStepModel(vae, mlp, vae.latent_bounds(train_cp))


def active_learning_run(dataset: Dataset, solver, spec: ProblemSpec,
                        config: ActiveLearningConfig = ActiveLearningConfig(),
                        callback=None, logger=None) -> RunReport:
    """Train, optimize in latent space, validate, infill; repeat until the criterion holds.

    ``dataset`` must already be split and is extended in place with infill.
    ``callback(iteration_record, report)`` runs after every iteration.
    """
    if spec.baseline_cd is None:
        raise FrameworkError("problem baselines are missing")
    report = RunReport([], False, spec, dataset=dataset)
    model = None
    fixed = dataset.records[0].params.fixed_dict() if dataset.records else {}
    for it in range(1, config.max_iterations + 1):
        model = train_models(dataset, config, it, model, logger)
        report.model = model
        ea = EaConfig(**{**config.ea.to_dict(), "seed": _seed(config.seed, it, 3)})
        result = optimize(spec, model, ea)
        cands = select_infill(result, spec.mode)
        vrep, records = validate_candidates(cands, model, solver, spec, fixed)
        record = IterationRecord(it, dataset.count("train"), float(model.vae.meta["train_recon"]
                                 + model.vae.meta["train_kl"]),
                                 float(model.mlp.meta["train_mse"]), model.bounds,
                                 _optimum_summary(result), vrep, 0)
        report.iterations.append(record)
        if vrep.criterion_met:
            report.converged = True
            report.message = f"converged at iteration {it}"
        else:
            append_infill(dataset, records, it)
            record.added = len(records)
        if logger is not None:
            logger.info("iteration %d: max objective error %.3f%%, added %d", it,
                        vrep.max_objective_error, record.added)
        if callback is not None:
            callback(record, report)
        if report.converged:
            break
    if not report.converged:
        report.message = f"not converged after {config.max_iterations} iterations"
    return report


def _optimum_summary(result) -> dict:
    if isinstance(result, GaResult):
        return {"x": result.x.tolist(), "value": result.value, "feasible": result.feasible,
                "evaluations": result.evaluations}
    if isinstance(result, ParetoSet):
        return {"pareto_size": len(result), "feasible": result.feasible,
                "evaluations": result.evaluations,
                "f_first": result.f[0].tolist() if len(result) else None,
                "f_last": result.f[-1].tolist() if len(result) else None}
    return {}


# ------------------------------------------------------------------ heatmap

@dataclass
class HeatmapTable:
    resolution: int
    rows: np.ndarray  # (R*R, 12) in HEATMAP_COLUMNS order, z1 varying slowest

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, HEATMAP_COLUMNS.index(name)]

    def grid(self, name: str) -> np.ndarray:
        """(R, R) array indexed [i1, i2]."""
        return self.column(name).reshape(self.resolution, self.resolution)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEATMAP_COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()


def latent_heatmap(model: TwoStepModel, resolution: int = 50) -> HeatmapTable:
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    b = model.bounds
    if resolution == 1:
        axes = [np.array([0.5 * (lo + hi)]) for lo, hi in b]
    else:
        axes = [np.linspace(lo, hi, resolution) for lo, hi in b]
    z1, z2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    z = np.column_stack([z1.ravel(), z2.ravel()])
    _, shape, qoi = model.predict(z)
    rows = np.column_stack([z, qoi[:, _LD], qoi[:, _AREA], qoi[:, _CD], qoi[:, _CM], shape])
    return HeatmapTable(resolution, rows)


_VIRIDIS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
                    dtype=float)


def heatmap_svg(table: HeatmapTable, column: str, cell: int = 8) -> str:
    """Self-contained SVG raster of one heatmap column (z1 right, z2 up)."""
    vals = table.grid(column)
    finite = vals[np.isfinite(vals)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    r = table.resolution
    size = r * cell
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}" '
             f'viewBox="0 0 {size} {size + 20}">',
             f'<title>{column}</title>']
    stops = np.linspace(0.0, 1.0, len(_VIRIDIS))
    for i in range(r):
        for j in range(r):
            v = vals[i, j]
            t = (v - lo) / span if np.isfinite(v) else 0.0
            rgb = [int(round(np.interp(t, stops, _VIRIDIS[:, c]))) for c in range(3)]
            parts.append(f'<rect x="{i * cell}" y="{(r - 1 - j) * cell}" width="{cell}" '
                         f'height="{cell}" fill="rgb({rgb[0]},{rgb[1]},{rgb[2]})"/>')
    parts.append(f'<text x="2" y="{size + 14}" font-size="11" font-family="sans-serif">'
                 f'{column}: {lo:.4g} to {hi:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

"""Command-line entry point: ``latentfoil <command> [options]``.

Exit codes: 0 success (or converged), 1 error, 2 run finished without converging.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .framework import (ActiveLearningConfig, FrameworkError, ProblemSpec, TwoStepModel,
                        active_learning_run, compute_baselines, heatmap_svg, latent_heatmap,
                        optimize, select_infill, train_models, validate_candidates)
from .generative import VAE_FIRST, VAE_TRANSFER, VaeTrainConfig
from .geometry import GeometryError, ParsecParams, evaluate_airfoil, write_selig
from .neural import MLP_FIRST, MLP_TRANSFER, TrainConfig
from .optimizer import EaConfig
from .sampling import Dataset, DatasetError, DesignSpace, build_dataset, lhs_sample, split_dataset

log = logging.getLogger("latentfoil")

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2
SOLVERS = ("builtin", "xfoil", "analytic")


class ConfigError(ValueError):
    pass


def _train_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


@dataclass
class RunConfig:
    space: DesignSpace = field(default_factory=DesignSpace)
    conditions: dict = field(default_factory=lambda: {"reynolds": 6.0e6, "mach": 0.25,
                                                      "alpha_deg": 7.0})
    solver: str = "builtin"
    xfoil: dict = field(default_factory=dict)
    doe_size: int = 500
    split_ratio: float = 0.8
    vae_first: VaeTrainConfig = VAE_FIRST
    vae_transfer: VaeTrainConfig = VAE_TRANSFER
    mlp_first: TrainConfig = MLP_FIRST
    mlp_transfer: TrainConfig = MLP_TRANSFER
    ea: EaConfig = field(default_factory=EaConfig)
    mode: str = "single"
    threshold_pct: float = 1.0
    max_iterations: int = 60
    seed: int = 0
    workers: int = 1
    output_dir: str = "latentfoil-out"

    def validate(self) -> "RunConfig":
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.mode not in ("single", "multi"):
            raise ConfigError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if self.doe_size < 1:
            raise ConfigError("doe_size must be at least 1")
        if not 0.0 <= self.split_ratio <= 1.0:
            raise ConfigError("split_ratio must lie in [0, 1]")
        if self.threshold_pct <= 0:
            raise ConfigError("threshold_pct must be positive")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        self.flow_conditions()
        return self

    def flow_conditions(self):
        from .solver import FlowConditions

        try:
            return FlowConditions(**self.conditions)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"flow conditions: {exc}") from None

    def active_learning(self) -> ActiveLearningConfig:
        return ActiveLearningConfig(self.vae_first, self.vae_transfer, self.mlp_first,
                                    self.mlp_transfer, self.ea, self.max_iterations, self.seed)

    def make_solver(self):
        if self.solver == "xfoil":
            from .solver.xfoil import XfoilConfig, XfoilSolver
            return XfoilSolver(XfoilConfig(**self.xfoil))
        if self.solver == "analytic":
            from .solver.analytic import AnalyticSolver
            return AnalyticSolver()
        from .solver import BuiltinSolver
        return BuiltinSolver()

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "conditions": dict(self.conditions),
                "solver": self.solver, "xfoil": dict(self.xfoil), "doe_size": self.doe_size,
                "split_ratio": self.split_ratio,
                "training": {"vae_first": _train_dict(self.vae_first),
                             "vae_transfer": _train_dict(self.vae_transfer),
                             "mlp_first": _train_dict(self.mlp_first),
                             "mlp_transfer": _train_dict(self.mlp_transfer)},
                "ea": self.ea.to_dict(), "mode": self.mode, "threshold_pct": self.threshold_pct,
                "max_iterations": self.max_iterations, "seed": self.seed,
                "workers": self.workers, "output_dir": self.output_dir}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)} | {"training"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        try:
            if "space" in d:
                sp = d.pop("space")
                base = DesignSpace()
                kw["space"] = DesignSpace(tuple(sp.get("names", base.names)),
                                          tuple(float(v) for v in sp.get("lower", base.lower)),
                                          tuple(float(v) for v in sp.get("upper", base.upper)))
            training = d.pop("training", {})
            bad = set(training) - {"vae_first", "vae_transfer", "mlp_first", "mlp_transfer"}
            if bad:
                raise ConfigError(f"unknown training sections: {sorted(bad)}")
            defaults = {"vae_first": VAE_FIRST, "vae_transfer": VAE_TRANSFER,
                        "mlp_first": MLP_FIRST, "mlp_transfer": MLP_TRANSFER}
            for name, overrides in training.items():
                kw[name] = defaults[name].replace(**overrides)
            if "ea" in d:
                kw["ea"] = EaConfig(**{**EaConfig().to_dict(), **d.pop("ea")})
            if "conditions" in d:
                kw["conditions"] = {**cls().conditions, **d.pop("conditions")}
            kw.update(d)
            return cls(**kw).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)


# ------------------------------------------------------------------ commands

def _out(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir)


def _dataset_path(cfg: RunConfig, args) -> Path:
    return Path(getattr(args, "dataset", None) or _out(cfg) / "dataset.csv")


def _load_dataset(path: Path) -> Dataset:
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return Dataset.load(path)


def _models_dir(cfg: RunConfig, args) -> Path:
    return Path(getattr(args, "models", None) or _out(cfg) / "models")


def _load_model(path: Path) -> TwoStepModel:
    if not (path / "vae.json").exists() or not (path / "mlp.json").exists():
        raise FileNotFoundError(f"no trained models in {path}")
    return TwoStepModel.load(path)


def _problem(cfg: RunConfig, solver) -> ProblemSpec:
    spec = ProblemSpec(cfg.mode, cfg.flow_conditions(), threshold_pct=cfg.threshold_pct)
    spec, _ = compute_baselines(spec, solver)
    return spec


def cmd_doe(cfg: RunConfig, args) -> int:
    n = args.n if args.n is not None else cfg.doe_size
    if n < 1:
        raise ConfigError("--n must be at least 1")
    solver = cfg.make_solver()
    params = lhs_sample(cfg.space, n, cfg.seed)
    ds = build_dataset(params, solver, cfg.flow_conditions(), space=cfg.space, seed=cfg.seed,
                       workers=cfg.workers)
    if sum(r.converged for r in ds.records) >= 5:
        split_dataset(ds, cfg.split_ratio, cfg.seed)
    path = _dataset_path(cfg, args)
    path.parent.mkdir(parents=True, exist_ok=True)
    ds.save(path)
    print(f"wrote {len(ds)} designs ({ds.count('train')} train, {ds.count('test')} test) to {path}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    ds = _load_dataset(_dataset_path(cfg, args))
    model = train_models(ds, cfg.active_learning(), 1, logger=log)
    out = _models_dir(cfg, args)
    model.save(out)
    print(f"trained models written to {out} "
          f"(regressor train MSE {model.mlp.meta['train_mse']:.3e})")
    return EXIT_OK


def cmd_run(cfg: RunConfig, args) -> int:
    ds = _load_dataset(_dataset_path(cfg, args))
    solver = cfg.make_solver()
    spec = _problem(cfg, solver)
    out = _out(cfg) / "run"

    def flush(_record, report):
        report.save(out)

    report = active_learning_run(ds, solver, spec, cfg.active_learning(), callback=flush,
                                 logger=log)
    report.save(out)
    ds.save(out / "dataset_final.csv")
    if report.final is not None:
        print(report.final.report.summary_text())
    print(report.message)
    return EXIT_OK if report.converged else EXIT_UNCONVERGED


def cmd_validate(cfg: RunConfig, args) -> int:
    model = _load_model(_models_dir(cfg, args))
    solver = cfg.make_solver()
    spec = _problem(cfg, solver)
    if args.z:
        cands = np.array(args.z, dtype=float).reshape(1, -1)
    else:
        ea = EaConfig(**{**cfg.ea.to_dict(), "seed": cfg.seed})
        cands = select_infill(optimize(spec, model, ea), spec.mode)
    report, _ = validate_candidates(cands, model, solver, spec)
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "validation.csv").write_text(report.summary_csv())
    (out / "validation.txt").write_text(report.summary_text())
    print(report.summary_text())
    return EXIT_OK


def cmd_heatmap(cfg: RunConfig, args) -> int:
    model = _load_model(_models_dir(cfg, args))
    table = latent_heatmap(model, args.resolution)
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "heatmap.csv").write_text(table.to_csv())
    if args.svg:
        for col in ("l_over_d", "area"):
            (out / f"heatmap_{col}.svg").write_text(heatmap_svg(table, col))
    print(f"wrote {len(table.rows)} heatmap rows to {out / 'heatmap.csv'}")
    return EXIT_OK


def cmd_export_airfoil(cfg: RunConfig, args) -> int:
    if args.params and args.z:
        raise ConfigError("give either --params or --z, not both")
    if args.z:
        model = _load_model(_models_dir(cfg, args))
        _, shape, _ = model.predict(np.array(args.z, dtype=float))
        params = ParsecParams.from_free(shape[0])
    elif args.params:
        params = ParsecParams.from_free(args.params)
    else:
        params = ParsecParams.baseline()
    shape = evaluate_airfoil(params)
    path = Path(args.path or _out(cfg) / "airfoil.dat")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_selig(path, shape, "latentfoil " + " ".join(f"{v:.6g}" for v in params.free_vector()))
    print(f"wrote {len(shape.x)} points to {path}")
    return EXIT_OK


COMMANDS = {"doe": cmd_doe, "train": cmd_train, "run": cmd_run, "validate": cmd_validate,
            "heatmap": cmd_heatmap, "export-airfoil": cmd_export_airfoil}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="parallel solver evaluations")
    common.add_argument("--solver", choices=SOLVERS, help="ground-truth solver")
    common.add_argument("--output", help="output directory")
    common.add_argument("--mode", choices=("single", "multi"))
    common.add_argument("--max-iterations", type=int, dest="max_iterations")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="latentfoil", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("doe", parents=[common], help="sample and evaluate the initial designs")
    s.add_argument("--n", type=int, help="number of designs")
    s.add_argument("--dataset", help="dataset CSV path")
    s = sub.add_parser("train", parents=[common], help="train the VAE and regressor once")
    s.add_argument("--dataset")
    s.add_argument("--models")
    s = sub.add_parser("run", parents=[common], help="active-learning optimization loop")
    s.add_argument("--dataset")
    s = sub.add_parser("validate", parents=[common], help="solver check of model predictions")
    s.add_argument("--models")
    s.add_argument("--z", type=float, nargs="+", help="latent point (default: optimize)")
    s = sub.add_parser("heatmap", parents=[common], help="latent-space QoI heatmap")
    s.add_argument("--models")
    s.add_argument("--resolution", type=int, default=50)
    s.add_argument("--svg", action="store_true", help="also write one SVG per objective")
    s = sub.add_parser("export-airfoil", parents=[common], help="write Selig coordinates")
    s.add_argument("--params", type=float, nargs=6, help="r_le x_up z_up x_low z_low z_te")
    s.add_argument("--z", type=float, nargs="+", help="latent point (needs --models)")
    s.add_argument("--models")
    s.add_argument("--path", help="output .dat file")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {"seed": args.seed, "workers": args.workers, "solver": args.solver,
                 "output_dir": args.output, "mode": args.mode,
                 "max_iterations": args.max_iterations}
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "heatmap" and args.resolution < 1:
            raise ConfigError("--resolution must be at least 1")
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DatasetError, FrameworkError, GeometryError, FileNotFoundError,
            RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per criterion, summarized as PASS/FAIL/SKIP lines.

Run with ``pytest tests/test_acceptance.py``. The end-to-end criteria take
minutes to hours and carry the ``slow`` marker as well.
"""

import copy
import math
import time

import numpy as np
import pytest

from latentfoil.framework import (ActiveLearningConfig, ProblemSpec, active_learning_run,
                                  compute_baselines)
from latentfoil.generative import (VAE_FIRST, VAE_TRANSFER, LatentDistParams, VaeModel, kl_term,
                                   reparameterize)
from latentfoil.geometry import ParsecParams, airfoil_area, evaluate_airfoil, vinokur_grid
from latentfoil.neural import MLP_DIMS, MLP_FIRST, MLP_TRANSFER, Network, train_mlp
from latentfoil.optimizer import EaConfig, OptProblem, fast_nondominated_sort, nsga2
from latentfoil.sampling import DesignSpace, build_dataset, lhs_sample, split_dataset
from latentfoil.solver import BuiltinSolver, FlowConditions
from latentfoil.solver.analytic import AnalyticSolver
from latentfoil.solver.boundary_layer import march_surface
from latentfoil.solver.panel import panel_solve_inviscid
from oracles import (blasius_cd, brute_force_fronts, gaussian_kl_numeric, karman_trefftz,
                     naca4_symmetric, prandtl_turbulent_cd, zdt1, zdt1_front_distance)
from test_generative import vae_fd_check
from test_geometry import LOWER, UPPER, surface_residuals
from test_neural import fd_check

SEED = 0

# Training budget for the synthetic end-to-end runs. Half of the default
# first-iteration epochs and 30% of the transfer epochs, with the step
# schedules scaled by the same factor, so both modes and a determinism
# re-run fit the runtime bound on one core.
SYNTHETIC_EPOCHS = (15000, 3000)


def criterion(n):
    return pytest.mark.criterion(n)


def note(record_property, text):
    record_property("detail", text)


def within(record_property, start, limit_s):
    elapsed = time.perf_counter() - start
    note(record_property, f"runtime {elapsed:.1f}s (limit {limit_s:g}s)")
    return elapsed < limit_s


@criterion(1)
def test_c01_kl_oracle(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        mu, sigma = rng.uniform(-2, 2, 2), rng.uniform(0.2, 3, 2)
        worst = max(worst, abs(kl_term(LatentDistParams.from_sigma(mu, sigma))
                               - gaussian_kl_numeric(mu, sigma)))
    prior = kl_term(LatentDistParams.from_sigma([0, 0], [1, 1]))
    note(record_property, f"max |KL - quadrature| {worst:.2e}, KL(0,1) = {prior}")
    assert worst < 1e-6 and prior == 0.0
    assert within(record_property, t0, 1)


@criterion(2)
def test_c02_gradients(record_property):
    t0 = time.perf_counter()
    mlp_worst, vae_worst = 0.0, 0.0
    for point in range(5):
        rng = np.random.default_rng(100 + point)
        net = Network.he(list(MLP_DIMS), rng)
        x = rng.uniform(0, 1, size=(8, MLP_DIMS[0]))
        y = rng.uniform(0, 1, size=(8, MLP_DIMS[-1]))
        mlp_worst = max(mlp_worst, fd_check(net, x, y, n_check=300, seed=point))
        rng = np.random.default_rng(50 + point)
        vae = VaeModel.he(199, rng)
        x = rng.uniform(0.05, 0.95, size=(6, 199))
        vae_worst = max(vae_worst, vae_fd_check(vae, x, rng.standard_normal((6, 2)), 150, point))
    note(record_property, f"max relative error MLP {mlp_worst:.1e}, VAE {vae_worst:.1e}")
    assert mlp_worst < 1e-4 and vae_worst < 1e-4
    assert within(record_property, t0, 120)


@criterion(3)
def test_c03_reparameterization(record_property):
    t0 = time.perf_counter()
    mu, sigma = np.array([0.7, -1.2]), np.array([0.5, 2.0])
    eps = np.random.default_rng(SEED).standard_normal((100_000, 2))
    z = reparameterize(LatentDistParams.from_sigma(mu, sigma), eps)
    dm = np.max(np.abs(z.mean(axis=0) - mu))
    ds = np.max(np.abs(z.std(axis=0) - sigma))
    note(record_property, f"mean error {dm:.4f}, std error {ds:.4f}")
    assert dm < 0.02 and ds < 0.02
    assert within(record_property, t0, 5)


@criterion(4)
def test_c04_parsec_fidelity(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(10_000):
        p = ParsecParams.from_free(rng.uniform(LOWER, UPPER))
        for surface in ("upper", "lower"):
            worst = max(worst, float(np.max(np.abs(surface_residuals(p, surface)))))
    area = airfoil_area(evaluate_airfoil(ParsecParams.baseline()))
    rel = abs(area - 0.1574) / 0.1574
    note(record_property, f"max residual {worst:.1e}, baseline area {area:.4f} ({rel:.1%} off)")
    assert worst < 1e-8 and rel < 0.05
    assert within(record_property, t0, 30)


@criterion(5)
def test_c05_grid_contract(record_property):
    t0 = time.perf_counter()
    s = vinokur_grid(100, 0.001, 0.005)
    le, te = s[1] - s[0], s[-1] - s[-2]
    note(record_property, f"end spacings {le:.6f} / {te:.6f}")
    assert abs(le - 0.001) / 0.001 < 0.05 and abs(te - 0.005) / 0.005 < 0.05
    assert within(record_property, t0, 1)


@criterion(6)
def test_c06_aerodynamic_oracles(record_property):
    t0 = time.perf_counter()
    from latentfoil.geometry import naca0012_coordinates
    sym = panel_solve_inviscid(*naca0012_coordinates(), 0.0)
    thin = panel_solve_inviscid(*naca4_symmetric(0.04), math.radians(5.0))
    alpha = math.radians(4.0)
    x, z, cp_exact, _ = karman_trefftz(0.1, 0.05, 10.0, 200, alpha)
    dev = np.max(np.abs(panel_solve_inviscid(x, z, alpha).cp[1:-1] - cp_exact[1:-1]))
    s = np.linspace(0.0, 1.0, 401)
    lam = march_surface(s, np.ones_like(s), 1e5, transition=math.inf).cd
    turb = march_surface(s, np.ones_like(s), 1e6, transition=0.0).cd
    lam_err = abs(lam - blasius_cd(1e5)) / blasius_cd(1e5)
    turb_err = abs(turb - prandtl_turbulent_cd(1e6)) / prandtl_turbulent_cd(1e6)
    thin_err = abs(thin.cl - 0.5483) / 0.5483
    note(record_property, f"symmetric |cl| {abs(sym.cl):.1e} |cm| {abs(sym.cm):.1e}; thin cl "
         f"{thin.cl:.4f} ({thin_err:.1%}); conformal Cp dev {dev:.4f}; flat plate "
         f"{lam_err:.1%} / {turb_err:.1%}")
    assert abs(sym.cl) < 1e-3 and abs(sym.cm) < 1e-3
    assert thin_err < 0.10 and dev < 0.05 and lam_err < 0.15 and turb_err < 0.15
    assert within(record_property, t0, 60)


@criterion(7)
def test_c07_nsga2(record_property):
    t0 = time.perf_counter()
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 201)), int(rng.integers(2, 4))
        f = rng.integers(0, 12, size=(n, m)).astype(float) if seed % 2 else rng.random((n, m))
        fronts = [sorted(fr.tolist()) for fr in fast_nondominated_sort(f)]
        assert fronts == brute_force_fronts(f), f"instance {seed}"
    prob = OptProblem(np.array([[0.0, 1.0]] * 30), zdt1, [(0, "minimize"), (1, "minimize")])
    dist = float(np.mean(zdt1_front_distance(nsga2(prob, EaConfig(seed=SEED)).f)))
    note(record_property, f"50/50 sorts match; ZDT1 mean distance {dist:.4f}")
    assert dist < 0.05
    assert within(record_property, t0, 180)


@criterion(8)
def test_c08_lhs_stratification(record_property):
    t0 = time.perf_counter()
    space = DesignSpace()
    lo, hi = space.bounds[:, 0], space.bounds[:, 1]
    rng = np.random.default_rng(SEED)
    pairs = [(int(rng.integers(1, 501)), int(rng.integers(0, 2 ** 32))) for _ in range(50)]
    for n, seed in pairs:
        x = np.array([p.free_vector() for p in lhs_sample(space, n, seed=seed)])
        idx = np.minimum(((x - lo) / (hi - lo) * n).astype(int), n - 1)
        for d in range(space.dim):
            assert sorted(idx[:, d]) == list(range(n)), f"n={n} seed={seed} dim={d}"
    note(record_property, "50 (n, seed) pairs stratified")
    assert within(record_property, t0, 5)


def synthetic_config(max_iterations=15):
    e, et = SYNTHETIC_EPOCHS
    return ActiveLearningConfig(VAE_FIRST.replace(epochs=e, step_epochs=e // 6),
                                VAE_TRANSFER.replace(epochs=et, step_epochs=et // 2),
                                MLP_FIRST.replace(epochs=e, step_epochs=e // 10),
                                MLP_TRANSFER.replace(epochs=et, step_epochs=et // 3),
                                max_iterations=max_iterations, seed=SEED)


def synthetic_run(mode, tmp_path):
    solver, cond = AnalyticSolver(), FlowConditions()
    ds = build_dataset(lhs_sample(DesignSpace(), 500, seed=SEED), solver, cond, seed=SEED)
    split_dataset(ds, 0.8, seed=SEED)
    spec, _ = compute_baselines(ProblemSpec(mode, cond), solver)
    report = active_learning_run(ds, solver, spec, synthetic_config())
    report.save(tmp_path)
    return report


@pytest.mark.slow
@criterion(9)
def test_c09_synthetic_end_to_end(record_property, tmp_path):
    t0 = time.perf_counter()
    details = []
    for mode in ("single", "multi"):
        a = synthetic_run(mode, tmp_path / f"{mode}_a")
        b = synthetic_run(mode, tmp_path / f"{mode}_b")
        same = all((tmp_path / f"{mode}_a" / f).read_bytes()
                   == (tmp_path / f"{mode}_b" / f).read_bytes()
                   for f in ("run_report.json", "ledger.csv", "models/vae.json", "models/mlp.json"))
        details.append(f"{mode}: converged={a.converged} after {len(a.iterations)} iterations, "
                       f"max objective error {a.final.report.max_objective_error:.3f}%, "
                       f"deterministic={same}")
        note(record_property, details[-1])
        assert a.converged and len(a.iterations) <= 15 and same
        assert a.final.report.max_objective_error < 1.0
        assert b.converged
    assert within(record_property, t0, 30 * 60)


@pytest.mark.slow
@criterion(10)
def test_c10_builtin_end_to_end(record_property, builtin_corpus):
    t0 = time.perf_counter()
    solver = BuiltinSolver()
    spec, _ = compute_baselines(ProblemSpec("single", FlowConditions()), solver)
    ds = copy.deepcopy(builtin_corpus)  # the session corpus stays pristine
    report = active_learning_run(ds, solver, spec, ActiveLearningConfig(max_iterations=40,
                                                                          seed=SEED))
    best = report.final.report.candidates[0] if report.final else None
    ld = best.calculated[0] if best is not None and best.validated else math.nan
    note(record_property, f"converged={report.converged} after {len(report.iterations)} "
         f"iterations; validated L/D {ld:.2f} vs baseline {spec.baseline_l_over_d:.2f}; "
         f"constraints met={best.constraints_ok if best else False}")
    assert report.converged and len(report.iterations) <= 40
    assert ld > spec.baseline_l_over_d and best.constraints_ok
    assert within(record_property, t0, 2 * 3600)


@pytest.mark.slow
@criterion(11)
def test_c11_xfoil(record_property, tmp_path):
    from latentfoil.solver.xfoil import XfoilConfig, XfoilSolver, XfoilUnavailable
    try:
        solver = XfoilSolver(XfoilConfig())
    except XfoilUnavailable as exc:
        pytest.skip(f"Xfoil not available ({exc})")
    cond = FlowConditions()
    spec, base = compute_baselines(ProblemSpec("single", cond), solver)
    base_ld = spec.baseline_l_over_d
    note(record_property, f"baseline L/D {base_ld:.2f} (reference 51.93)")
    assert abs(base_ld - 51.93) / 51.93 < 0.15
    ds = build_dataset(lhs_sample(DesignSpace(), 500, seed=SEED), solver, cond, seed=SEED)
    split_dataset(ds, 0.8, seed=SEED)
    report = active_learning_run(ds, solver, spec, ActiveLearningConfig(seed=SEED))
    best = report.final.report.candidates[0] if report.final else None
    gain = (best.calculated[0] / base_ld - 1.0) if best is not None and best.validated else -1.0
    note(record_property, f"converged={report.converged}, L/D gain {gain:.1%}")
    assert report.converged and gain >= 0.20


@pytest.mark.slow
@criterion(12)
def test_c12_transfer_efficacy(record_property):
    t0 = time.perf_counter()
    solver, cond = AnalyticSolver(), FlowConditions()
    ds = build_dataset(lhs_sample(DesignSpace(), 500, seed=SEED), solver, cond, seed=SEED)
    split_dataset(ds, 0.8, seed=SEED)
    cp, y = ds.matrices("train")
    prior = train_mlp(cp, y, MLP_FIRST.replace(seed=SEED))
    rows = []
    for seed in range(5):
        # retraining after an infill step: the corpus gains a few solver-validated designs
        extra = build_dataset(lhs_sample(DesignSpace(), 5, seed=1000 + seed), solver, cond)
        xcp, xy = extra.matrices()
        tcp, ty = np.vstack([cp, xcp]), np.vstack([y, xy])
        warm = train_mlp(tcp, ty, MLP_TRANSFER.replace(seed=seed), prior=prior)
        cold = train_mlp(tcp, ty, MLP_TRANSFER.replace(seed=seed, init_mode="he_init"))
        rows.append((warm.meta["train_mse"], cold.meta["train_mse"]))
    note(record_property, "transfer/cold train MSE " + ", ".join(f"{w:.2e}/{c:.2e}" for w, c in rows))
    assert all(w <= c for w, c in rows)
    assert within(record_property, t0, 10 * 60)

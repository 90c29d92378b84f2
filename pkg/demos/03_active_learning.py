"""
Inverse design with active learning
===================================

The full loop on the analytic stand-in solver: train, search the latent
space with the GA (single mode) or NSGA-II (multi mode), validate the
chosen designs with the solver, and add them to the corpus until the
predicted and calculated objectives agree within 1%.

Pass ``multi`` as the first argument for the L/D vs area problem.
"""

import sys

from latentfoil.framework import (ActiveLearningConfig, ProblemSpec, active_learning_run,
                                  compute_baselines)
from latentfoil.generative import VAE_FIRST, VAE_TRANSFER
from latentfoil.neural import MLP_FIRST, MLP_TRANSFER
from latentfoil.sampling import DesignSpace, build_dataset, lhs_sample, split_dataset
from latentfoil.solver import FlowConditions
from latentfoil.solver.analytic import AnalyticSolver

mode = sys.argv[1] if len(sys.argv) > 1 else "single"
solver, cond = AnalyticSolver(), FlowConditions()

ds = build_dataset(lhs_sample(DesignSpace(), 500, seed=0), solver, cond, seed=0)
split_dataset(ds, 0.8, seed=0)

# Baselines come from the same solver: Cd and area bound the constraints.
spec, _ = compute_baselines(ProblemSpec(mode, cond), solver)
print(f"baseline L/D {spec.baseline_l_over_d:.2f}, Cd {spec.baseline_cd:.5f}, "
      f"area {spec.baseline_area:.4f}")

# Reduced budgets (a few minutes on one core); the defaults are 30000/10000.
cfg = ActiveLearningConfig(VAE_FIRST.replace(epochs=15000, step_epochs=2500),
                           VAE_TRANSFER.replace(epochs=3000, step_epochs=1500),
                           MLP_FIRST.replace(epochs=15000, step_epochs=1500),
                           MLP_TRANSFER.replace(epochs=3000, step_epochs=1000),
                           max_iterations=15)


def progress(record, report):
    row = record.ledger_row()
    print(f"iteration {row['iteration']}: {row['train_rows']} training rows, "
          f"max objective error {row['max_objective_error_pct']:.3f}%, added {row['added']}")


report = active_learning_run(ds, solver, spec, cfg, callback=progress)
print(report.message)
print(report.final.report.summary_text())
report.save(f"active_learning_{mode}")

"""
Learning the pressure-distribution manifold
===========================================

Sample designs with a Latin hypercube, evaluate them with the analytic
stand-in solver, then fit the two networks: a VAE that maps Cp curves to
a 2-D latent space and back, and an MLP that maps Cp to shape and QoI.
Budgets are kept small so the script finishes in about a minute.
"""

import numpy as np

from latentfoil.framework import ActiveLearningConfig, train_models, two_step_predict
from latentfoil.generative import VAE_FIRST, VAE_TRANSFER
from latentfoil.neural import MLP_FIRST, MLP_TRANSFER
from latentfoil.sampling import DesignSpace, build_dataset, lhs_sample, split_dataset
from latentfoil.solver import FlowConditions
from latentfoil.solver.analytic import AnalyticSolver

# 200 designs, 80/20 split.
ds = build_dataset(lhs_sample(DesignSpace(), 200, seed=0), AnalyticSolver(), FlowConditions(),
                   seed=0)
split_dataset(ds, 0.8, seed=0)
print(ds.count("train"), "training and", ds.count("test"), "test designs")

# The default budgets are 30000 epochs; 2000 is enough to see the structure.
cfg = ActiveLearningConfig(VAE_FIRST.replace(epochs=2000, step_epochs=400),
                           VAE_TRANSFER, MLP_FIRST.replace(epochs=2000, step_epochs=400),
                           MLP_TRANSFER)
model = train_models(ds, cfg, 1)
print("VAE train recon MSE:", f"{model.vae.meta['train_recon_mse']:.2e}")
print("MLP test MSE:", f"{model.mlp.meta['test_mse']:.2e}")

# The optimizer searches this box: encoded means widened by 10%.
print("latent bounds:\n", model.bounds.round(3))

# Decode the box centre and read off the predicted design.
z = model.bounds.mean(axis=1)
cp, shape, qoi = two_step_predict(model, z)
print("shape parameters:", shape.round(4))
print("L/D, Cd, Cm, area:", qoi.round(4))

# Compare a test curve with its reconstruction through the latent mean.
test_cp, _ = ds.matrices("test")
mu = model.vae.encode_cp(test_cp[:1]).mu
recon = model.vae.decode_cp(mu)[0]
print("max |Cp - reconstruction| on a test design:", np.abs(test_cp[0] - recon).max().round(4))

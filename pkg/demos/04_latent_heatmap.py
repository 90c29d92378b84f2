"""
What the latent space encodes
=============================

Train the two networks on the built-in solver's corpus, then sweep a
50 x 50 grid over the latent bounds and map predicted L/D and area.
Writes heatmap.csv and one SVG per objective. Training uses the default
30000-epoch budgets and takes several minutes.
"""

from pathlib import Path

import numpy as np

from latentfoil.framework import ActiveLearningConfig, heatmap_svg, latent_heatmap, train_models
from latentfoil.sampling import DesignSpace, build_dataset, lhs_sample, split_dataset
from latentfoil.solver import BuiltinSolver, FlowConditions

ds = build_dataset(lhs_sample(DesignSpace(), 500, seed=0), BuiltinSolver(), FlowConditions(),
                   seed=0)
split_dataset(ds, 0.8, seed=0)
model = train_models(ds, ActiveLearningConfig(seed=0), 1)

table = latent_heatmap(model, 50)
out = Path("heatmap")
out.mkdir(exist_ok=True)
(out / "heatmap.csv").write_text(table.to_csv())
for col in ("l_over_d", "area"):
    (out / f"heatmap_{col}.svg").write_text(heatmap_svg(table, col))

# Where in the latent box do the two objectives peak?
for col in ("l_over_d", "area"):
    g = table.grid(col)
    i, j = np.unravel_index(np.argmax(g), g.shape)
    print(f"max {col} {g[i, j]:.4f} at z = ({table.grid('z1')[i, j]:.3f}, "
          f"{table.grid('z2')[i, j]:.3f})")

# Leading-edge radius against L/D across the map.
r = np.corrcoef(table.column("r_le"), table.column("l_over_d"))[0, 1]
print(f"correlation of predicted r_le with L/D: {r:.2f}")

"""
The baseline airfoil and the built-in flow solver
=================================================

Build the baseline PARSEC section, look at its station grid, run the
panel + boundary-layer solver at the default flow conditions and write
the coordinates as a Selig file.
"""

import numpy as np

from latentfoil.geometry import ParsecParams, airfoil_area, default_grid, evaluate_airfoil, write_selig
from latentfoil.solver import BuiltinSolver, FlowConditions

# Six free PARSEC variables; the other five are fixed by calibration.
params = ParsecParams.baseline()
names = ("r_le", "x_up", "z_up", "x_lo", "z_lo", "z_te")
print("free variables:", {k: round(float(v), 4) for k, v in zip(names, params.free_vector())})

# 100 stations per surface, clustered at both ends; 199 surface nodes.
grid = default_grid()
print("first / last spacing:", np.diff(grid.x_surface)[[0, -1]].round(5))

shape = evaluate_airfoil(params, grid)
print("area:", round(airfoil_area(shape), 4))

# Re 6e6, M 0.25, alpha 7 deg unless told otherwise.
cond = FlowConditions()
res = BuiltinSolver().evaluate_params(params, cond)
print(f"cl {res.cl:.4f}  cd {res.cd:.5f}  cm {res.cm:.4f}  L/D {res.l_over_d:.2f}")
print("transition x (upper, lower):", np.round(res.transition_x, 3))

# Suction peak and trailing-edge recovery of the pressure distribution.
print("min Cp:", res.cp.min().round(3), " Cp at TE:", res.cp[[0, -1]].round(3))

write_selig("baseline.dat", shape, "latentfoil baseline")
print("wrote baseline.dat")

"""Stability of the upwind scheme on the four-state relaxation model.

Four states share the decay rate 1e-3 and differ only in their attractor
(1000, -1000, 2000, -2000). Switching happens at rate 4 with a uniform jump
matrix. The CFL bound for the 1000-node grid is about 0.25; we run once just
below it and once at 0.5 with the safety check overridden.
"""
import numpy as np

from pdmp import (InitialCondition, ModelSpec, build_grid, cfl_max_dt, equilibrium_domain, solve)
from pdmp.analysis import check_bounded, check_conservation, check_monotone

drifts = ["-0.001*x + 1", "-0.001*x - 1", "-0.001*x + 2", "-0.001*x - 2"]
spec = ModelSpec.uniform(drifts, 4.0)
grid = build_grid(equilibrium_domain(spec), dx=4.004)
ic = InitialCondition.heaviside(4)

dt_max = cfl_max_dt(spec, grid)
print(f"grid: K={grid.K} dx={grid.dx:.6f} on [{grid.x_min:g}, {grid.x_max:g}]")
print(f"largest stable step: {dt_max:.6f}")

for dt, override in ((0.225056, False), (0.5, True)):
    print(f"\ndt = {dt} ({'override' if override else 'within bound'})")
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve(spec, grid, ic, 545.5, dt, unsafe_override=override)
    final = sol.final
    print(f"  {sol.steps} steps")
    print(" ", check_monotone(final))
    print(" ", check_bounded(final))
    if not override:
        print(" ", check_conservation(final, left_mass=0.0, pi=sol.marginals[-1]))

# Without the override the solver refuses outright.
try:
    solve(spec, grid, ic, 545.5, 0.5)
except ValueError as exc:
    print(f"\nrefused: {exc}")

"""Observed order of accuracy on a smooth two-state telegraph problem.

The initial CDF is a quintic smoothstep split evenly between the states.
Each level halves dx (and dt, kept at 90% of the CFL bound); errors are
measured against a much finer reference solution on the shared nodes.
"""
from pdmp import load_config
from pdmp.analysis import convergence_order, error_growth

cfg = load_config("telegraph_convergence")
res = convergence_order(cfg.model, cfg.initial, cfg.T, cfg.grid, levels=5)
for dx, err in zip(res.dx, res.errors):
    print(f"dx = {dx:.5f}   max error = {err:.3e}")
print(f"observed order: {res.order:.3f}")

errors, ratios = error_growth(cfg.model, cfg.initial, cfg.grid, [cfg.T, 2 * cfg.T, 4 * cfg.T])
print("error at T, 2T, 4T:", ", ".join(f"{e:.3e}" for e in errors))
print("growth per doubling:", ", ".join(f"{r:.2f}" for r in ratios))

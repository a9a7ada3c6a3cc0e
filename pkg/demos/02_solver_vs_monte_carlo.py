"""Compare the solver's distribution function with sampled trajectories.

Uses the bundled ``relax4_evolution`` configuration (switching rate 0.2, decay
0.1, domain [-20, 20]). At each snapshot we draw an ensemble of endpoints and
report the Kolmogorov-Smirnov distance to the solver's total CDF.

Early snapshots carry point masses from paths that have not switched yet; the
upwind scheme smears those, so the distance there is dominated by the atoms
and not by sampling noise. The last column shows that floor.
"""
import sys
from dataclasses import replace

import numpy as np

from pdmp import load_config, run_ensemble, solve
from pdmp.analysis import ks_distance
from pdmp.solver import total_cdf

N = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000

cfg = load_config("relax4_evolution")
sol = solve(cfg.model, cfg.grid, cfg.initial, cfg.T, cfg.dt, snapshots=cfg.snapshots)
stay = cfg.model.rates[0] * (1 - cfg.model.jump[0, 0])

print(f"{'t':>5} {'KS':>8} {'atom floor':>11}")
for state in sol.states[1:]:
    ens = run_ensemble(cfg.model, replace(cfg.path_config(state.t), N=N))
    ks = ks_distance(state.grid.x, total_cdf(state), ens.endpoints)
    floor = 0.5 * 0.25 * np.exp(-stay * state.t)
    print(f"{state.t:>5g} {ks:>8.4f} {floor:>11.4f}")

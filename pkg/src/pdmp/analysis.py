"""Runnable checks on solver output: monotonicity, conservation, norm identity,
solver-vs-sample distance and self-convergence order."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ModelSpec
from .solver import (FieldState, Grid, InitialCondition, MarginalState, cfl_max_dt,
                     solve, total_cdf)

__all__ = [
    "CheckReport", "check_monotone", "check_conservation", "check_bounded",
    "stochastic_norm_check", "ks_distance", "convergence_order", "error_growth",
    "ConvergenceResult",
]


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    observed: float
    tol: float
    at: object = None

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        at = "-" if self.at is None else str(self.at).replace(" ", "")
        return f"CHECK {self.name} {flag} observed={self.observed!r} tol={self.tol!r} at={at}"

    def __bool__(self):
        return self.passed


def check_monotone(state: FieldState, tol: float = 1e-12) -> CheckReport:
    """Smallest increment ``F[s, k] - F[s, k-1]`` (with ``F[s, -1] = 0``) must be >= -tol."""
    d = np.diff(state.F, axis=1, prepend=0.0)
    s, k = np.unravel_index(int(np.argmin(d)), d.shape)
    worst = float(d[s, k])
    return CheckReport("monotone", bool(worst >= -tol), worst, tol, (int(s), int(k)))


def check_conservation(state: FieldState, tol: float = 1e-9, left_mass: float = 0.0,
                       pi: MarginalState | None = None) -> CheckReport:
    """Total mass 1 at the right end of the grid and ``left_mass`` at the left end.

    With ``pi`` the right-end values are also compared state by state.
    """
    right = state.F[:, -1].sum()
    errors = {"right": abs(right - 1.0), "left": abs(state.F[:, 0].sum() - left_mass)}
    if pi is not None:
        per_state = np.abs(state.F[:, -1] - pi.pi)
        errors["pi"] = float(per_state.max())
    where = max(errors, key=errors.get)
    observed = float(errors[where])
    return CheckReport("conservation", bool(observed <= tol), observed, tol, where)


def check_bounded(state: FieldState, tol: float = 1e-9) -> CheckReport:
    """Field values inside ``[-tol, 1 + tol]``; observed is the worst excursion past [0, 1]."""
    F = state.F
    excess = np.maximum(-F, F - 1.0)
    s, k = np.unravel_index(int(np.argmax(excess)), F.shape)
    worst = float(excess[s, k])
    return CheckReport("bounded", bool(worst <= tol), worst, tol, (int(s), int(k)))


def stochastic_norm_check(Q: np.ndarray, dt: float, tol: float = 1e-12) -> CheckReport:
    """1-norm (max column absolute sum) of ``I + dt Q`` must equal one.

    Only guaranteed when ``dt * max_l(-Q_ll) <= 1``; a report for a larger step
    says so in its location field.
    """
    Q = np.asarray(Q, dtype=float)
    M = np.eye(Q.shape[0]) + dt * Q
    colsums = np.abs(M).sum(axis=0)
    j = int(np.argmax(colsums))
    norm = float(colsums[j])
    ok = dt * float(np.max(-np.diag(Q), initial=0.0)) <= 1.0
    at = f"column={j}" if ok else f"column={j};precondition-violated"
    return CheckReport("stochastic_norm", bool(ok and abs(norm - 1.0) <= tol), norm, tol, at)


def ks_distance(x, cdf, samples) -> float:
    """Sup distance between a gridded CDF and the empirical CDF of ``samples``.

    The gridded CDF is read as a right-continuous step function: ``cdf[k]`` on
    ``[x[k], x[k+1])``, zero left of the grid and ``cdf[-1]`` right of it. Both
    functions then only change at grid nodes and samples, so evaluating them
    there covers the one-sided limits at every jump and gives the exact sup.
    """
    x = np.asarray(x, dtype=float)
    cdf = np.asarray(cdf, dtype=float)
    e = np.sort(np.asarray(getattr(samples, "endpoints", samples), dtype=float))
    if len(e) == 0:
        raise ValueError("no samples")
    pts = np.concatenate([x, e])
    idx = np.searchsorted(x, pts, side="right") - 1
    F = np.where(idx >= 0, cdf[np.maximum(idx, 0)], 0.0)
    E = np.searchsorted(e, pts, side="right") / len(e)
    return float(np.abs(F - E).max())


@dataclass(frozen=True)
class ConvergenceResult:
    order: float
    dx: tuple
    errors: tuple
    reference_dx: float


def _nested(coarse: Grid, fine: Grid) -> int:
    r = (fine.K - 1) // (coarse.K - 1)
    if (coarse.x_min, coarse.x_max) != (fine.x_min, fine.x_max) or (coarse.K - 1) * r != fine.K - 1:
        raise ValueError(f"grid with K={fine.K} is not nested in grid with K={coarse.K}")
    return r


def _final_cdf(spec, grid, ic, T, cfl_fraction):
    dt = cfl_fraction * cfl_max_dt(spec, grid)
    return total_cdf(solve(spec, grid, ic, T, dt).final)


def convergence_order(spec: ModelSpec, ic: InitialCondition, T: float,
                      grids: Grid | Sequence[Grid], levels: int = 4,
                      ref_refine: int = 4, cfl_fraction: float = 0.9) -> ConvergenceResult:
    """Observed order of the scheme from dyadic self-refinement.

    ``grids`` is the coarsest grid (refined ``levels - 1`` times) or an explicit
    nested sequence. The reference is a further ``ref_refine``-fold refinement of
    the finest grid; each level runs at ``cfl_fraction`` of its own CFL bound.
    The order is the least-squares slope of log(max-node error) against log(dx).
    """
    if isinstance(grids, Grid):
        grids = [grids]
        while len(grids) < levels:
            grids.append(grids[-1].refine(2))
    grids = list(grids)
    if len(grids) < 3:
        raise ValueError("need at least three grid levels")
    for coarse, fine in zip(grids, grids[1:]):
        _nested(coarse, fine)
    ref_grid = grids[-1].refine(ref_refine)
    ref = _final_cdf(spec, ref_grid, ic, T, cfl_fraction)
    errors = []
    for g in grids:
        r = _nested(g, ref_grid)
        errors.append(float(np.abs(_final_cdf(spec, g, ic, T, cfl_fraction) - ref[::r]).max()))
    dxs = np.array([g.dx for g in grids])
    errs = np.array(errors)
    if np.all(errs == 0):
        order = float("nan")
    else:
        order = float(np.polyfit(np.log(dxs), np.log(np.maximum(errs, 1e-300)), 1)[0])
    return ConvergenceResult(order, tuple(dxs), tuple(errors), ref_grid.dx)


def error_growth(spec: ModelSpec, ic: InitialCondition, grid: Grid, times: Sequence[float],
                 ref_refine: int = 8, cfl_fraction: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Max-node error of ``grid`` against a ``ref_refine``-fold refinement at each of ``times``.

    Returns ``(errors, ratios)`` with ``ratios[i] = errors[i+1] / errors[i]``.
    """
    times = sorted(float(t) for t in times)
    ref_grid = grid.refine(ref_refine)
    coarse = solve(spec, grid, ic, times[-1], cfl_fraction * cfl_max_dt(spec, grid), snapshots=times)
    fine = solve(spec, ref_grid, ic, times[-1], cfl_fraction * cfl_max_dt(spec, ref_grid),
                 snapshots=times)
    errors = np.array([
        np.abs(total_cdf(coarse.at(t)) - total_cdf(fine.at(t))[::ref_refine]).max() for t in times
    ])
    return errors, errors[1:] / errors[:-1]

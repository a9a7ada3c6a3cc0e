"""Upwind finite differences for the Liouville-Master equation of a PDMP.

Each state ``l`` carries a distribution function ``F_l(x, t)`` (probability of
being in state ``l`` with value at most ``x``).  It is transported by its own
drift and exchanges mass with the other states through the generator ``Q``::

    dF_l/dt + A_l(x) dF_l/dx = sum_s Q[l, s] F_s

Boundary closure: a ghost value 0 left of the grid and the state probability
``pi_l(t)`` right of it, with ``pi' = Q pi`` advanced by the same forward-Euler
step as the field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ConfigurationError, ModelSpec, generator_matrix

__all__ = [
    "Grid", "FieldState", "MarginalState", "InitialCondition", "Solution",
    "CFLViolation", "NumericalError",
    "build_grid", "cfl_max_dt", "init_cauchy", "upwind_step", "marginal_step",
    "solve", "total_cdf", "density", "diffusion_coefficient",
]

# relative slack when comparing a step against the CFL bound, so that a step
# computed as dx/|A| is not refused over the last bit of 1/(|A|/dx)
CFL_RTOL = 1e-12


class CFLViolation(ValueError):
    """Time step above the stability bound and no override given."""


class NumericalError(ArithmeticError):
    """Non-finite value produced while stepping."""

    def __init__(self, message, step=None, node=None):
        super().__init__(message)
        self.step = step
        self.node = node


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    K: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_min >= self.x_max:
            raise ConfigurationError(f"invalid domain [{self.x_min}, {self.x_max}]")
        if int(self.K) != self.K or self.K < 3:
            raise ConfigurationError(f"need at least 3 grid nodes, got {self.K}")
        object.__setattr__(self, "K", int(self.K))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.K - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.K) * self.dx

    def refine(self, factor: int = 2) -> "Grid":
        """Nested grid with ``factor`` times as many intervals."""
        return Grid(self.x_min, self.x_max, (self.K - 1) * factor + 1)


def build_grid(domain, K: int | None = None, dx: float | None = None) -> Grid:
    """Uniform grid on ``domain`` from a node count ``K`` or a target spacing ``dx``.

    With ``dx`` the node count is ``round(width/dx) + 1`` and the actual spacing
    is recomputed so the grid spans the domain exactly.
    """
    x_min, x_max = map(float, domain)
    if (K is None) == (dx is None):
        raise ConfigurationError("give exactly one of K or dx")
    if not x_min < x_max:
        raise ConfigurationError(f"invalid domain [{x_min}, {x_max}]")
    if dx is not None:
        if not dx > 0:
            raise ConfigurationError(f"dx must be positive, got {dx}")
        K = int(round((x_max - x_min) / dx)) + 1
    return Grid(x_min, x_max, K)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Distribution functions ``F[s, k] = F_s(x_k, t)`` on ``grid``."""

    F: np.ndarray
    t: float
    grid: Grid

    def __post_init__(self):
        F = np.array(self.F, dtype=float)
        if F.ndim != 2 or F.shape[1] != self.grid.K:
            raise ValueError(f"field shape {F.shape} does not match grid with K={self.grid.K}")
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @property
    def S(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True, eq=False)
class MarginalState:
    """State probabilities ``pi_s(t)``."""

    pi: np.ndarray
    t: float

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float).reshape(-1)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)


@dataclass(frozen=True)
class InitialCondition:
    """Initial distribution functions, one entry per state.

    ``steps[s]`` is a sequence of ``(weight, x0)`` jumps (``F`` gains ``weight``
    for ``x >= x0``); ``tables[s]``, if given, is an ``(x, F)`` table that is
    linearly interpolated (0 to the left, its last value to the right).
    Both contributions are added.
    """

    steps: tuple = ()
    tables: tuple = ()

    def __post_init__(self):
        S = max(len(self.steps), len(self.tables))
        steps = tuple(tuple((float(w), float(x0)) for w, x0 in st) for st in self.steps)
        steps += ((),) * (S - len(steps))
        tables = []
        for tab in self.tables:
            if tab is None:
                tables.append(None)
                continue
            xs, fs = (np.array(a, dtype=float) for a in tab)
            xs.setflags(write=False)
            fs.setflags(write=False)
            tables.append((xs, fs))
        tables += [None] * (S - len(tables))
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "tables", tuple(tables))

    @classmethod
    def heaviside(cls, S: int, x0: float = 0.0) -> "InitialCondition":
        """Every state holds ``1/S`` of the mass at ``x0``."""
        return cls(steps=tuple(((1.0 / S, x0),) for _ in range(S)))

    @property
    def S(self) -> int:
        return len(self.steps)

    def masses(self) -> np.ndarray:
        out = np.zeros(self.S)
        for s in range(self.S):
            out[s] = sum(w for w, _ in self.steps[s])
            if self.tables[s] is not None:
                out[s] += self.tables[s][1][-1]
        return out

    def validate(self, tol: float = 1e-9) -> list[str]:
        problems = []
        for s, st in enumerate(self.steps):
            for w, x0 in st:
                if not (w >= 0 and np.isfinite(x0)):
                    problems.append(f"state {s}: bad step (w={w}, x0={x0})")
        for s, tab in enumerate(self.tables):
            if tab is None:
                continue
            xs, fs = tab
            if xs.shape != fs.shape or xs.ndim != 1 or len(xs) < 2:
                problems.append(f"state {s}: table x and F must be 1-d of equal length >= 2")
                continue
            if np.any(np.diff(xs) <= 0):
                problems.append(f"state {s}: table x must be strictly increasing")
            if fs[0] < -tol or np.any(np.diff(fs) < -tol):
                problems.append(f"state {s}: table F must be non-negative and non-decreasing")
        total = self.masses().sum()
        if abs(total - 1.0) > tol:
            problems.append(f"total initial mass is {total!r}, expected 1")
        return problems

    def cdf(self, s: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for w, x0 in self.steps[s]:
            out = out + np.where(x >= x0, w, 0.0)
        if self.tables[s] is not None:
            xs, fs = self.tables[s]
            out = out + np.interp(x, xs, fs, left=0.0, right=fs[-1])
        return out


@dataclass
class Solution:
    """Snapshots of a solver run, in time order."""

    states: list
    marginals: list
    steps: int = 0
    dt: float = 0.0

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.states]

    @property
    def final(self) -> FieldState:
        return self.states[-1]

    def at(self, t: float) -> FieldState:
        for s in self.states:
            if math.isclose(s.t, t, rel_tol=1e-12, abs_tol=1e-12):
                return s
        raise KeyError(t)


def max_abs_drift(spec: ModelSpec, grid: Grid) -> float:
    return float(np.max(np.abs(spec.drift_values(grid.x))))


def switching_bound(spec: ModelSpec) -> float:
    """``max_l mu_l (1 - q_ll)``, the largest outflow rate of any state."""
    return float(np.max(-np.diag(generator_matrix(spec))))


def cfl_max_dt(spec: ModelSpec, grid: Grid) -> float:
    """Largest stable step ``1 / (M/dx + max_l mu_l (1 - q_ll))``.

    ``M`` is the largest ``|A_l|`` over the grid nodes. Returns ``inf`` when
    nothing moves and nothing switches.
    """
    rate = max_abs_drift(spec, grid) / grid.dx + switching_bound(spec)
    if rate == 0.0:
        return math.inf
    return 1.0 / rate


def init_cauchy(spec: ModelSpec, grid: Grid, ic: InitialCondition) -> FieldState:
    """Sample the initial distribution functions on the grid nodes."""
    if ic.S != spec.S:
        raise ConfigurationError(f"initial condition has {ic.S} states, model has {spec.S}")
    problems = ic.validate()
    if problems:
        raise ConfigurationError("; ".join(problems))
    for s, st in enumerate(ic.steps):
        for _, x0 in st:
            if not grid.x_min <= x0 <= grid.x_max:
                raise ConfigurationError(
                    f"state {s}: step at {x0} outside domain [{grid.x_min}, {grid.x_max}]"
                )
    x = grid.x
    F = np.stack([ic.cdf(s, x) for s in range(spec.S)])
    return FieldState(F, 0.0, grid)


def initial_marginal(state: FieldState) -> MarginalState:
    return MarginalState(state.F[:, -1], state.t)


class _Upwind:
    """Precomputed coefficients of one upwind update on a fixed grid."""

    def __init__(self, spec: ModelSpec, grid: Grid):
        self.grid = grid
        self.A = spec.drift_values(grid.x)
        self.Q = np.array(generator_matrix(spec))
        # nu = 1 (right difference) only where A < 0; A == 0 takes the left one
        self.right = self.A < 0
        self.dt_max = cfl_max_dt(spec, grid)

    def check_dt(self, dt: float, unsafe: bool):
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        if dt > self.dt_max * (1 + CFL_RTOL) and not unsafe:
            raise CFLViolation(
                f"dt = {dt!r} exceeds the CFL bound {self.dt_max!r}; "
                "set the unsafe override to run anyway"
            )

    def step(self, F: np.ndarray, pi: np.ndarray, dt: float) -> np.ndarray:
        S, K = F.shape
        padded = np.empty((S, K + 2))
        padded[:, 0] = 0.0
        padded[:, 1:-1] = F
        padded[:, -1] = pi
        left = F - padded[:, :-2]
        right = padded[:, 2:] - F
        diff = np.where(self.right, right, left)
        courant = (dt / self.grid.dx) * self.A
        return F - courant * diff + dt * (self.Q @ F)

    def step_pi(self, pi: np.ndarray, dt: float) -> np.ndarray:
        return pi + dt * (self.Q @ pi)


def upwind_step(state: FieldState, spec: ModelSpec, grid: Grid, dt: float,
                pi: MarginalState, unsafe_override: bool = False) -> FieldState:
    """Advance ``state`` by one upwind step of length ``dt``.

    ``pi`` must hold the state probabilities at ``state.t``; they serve as the
    right boundary values.
    """
    op = _Upwind(spec, grid)
    op.check_dt(dt, unsafe_override)
    return FieldState(op.step(state.F, pi.pi, dt), state.t + dt, grid)


def marginal_step(pi: MarginalState, Q: np.ndarray, dt: float) -> MarginalState:
    """Forward Euler for ``pi' = Q pi``."""
    p = pi.pi
    return MarginalState(p + dt * (np.asarray(Q) @ p), pi.t + dt)


def _segment_steps(span: float, dt: float) -> list[float]:
    n = max(1, math.ceil(span / dt * (1 - 1e-12)))
    return [dt] * (n - 1) + [span - (n - 1) * dt]


def solve(spec: ModelSpec, grid: Grid, ic: InitialCondition, T: float, dt: float,
          unsafe_override: bool = False, snapshots: Sequence[float] | None = None) -> Solution:
    """Integrate from ``t = 0`` to ``T`` with step ``dt``.

    A step that would pass a snapshot time (or ``T``) is shortened to land on it,
    so every snapshot is exact. ``T`` itself is always returned last. Raises
    CFLViolation for ``dt`` above the bound unless ``unsafe_override`` is set.
    """
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    op = _Upwind(spec, grid)
    op.check_dt(dt, unsafe_override)
    state = init_cauchy(spec, grid, ic)
    times = sorted({float(t) for t in (snapshots or ()) if 0 <= t <= T} | {float(T)})

    F = np.array(state.F)
    pi = F[:, -1].copy()
    t = 0.0
    nstep = 0
    states, marginals = [], []

    def record(t):
        states.append(FieldState(F, t, grid))
        marginals.append(MarginalState(pi, t))

    for target in times:
        if target > t:
            for h in _segment_steps(target - t, dt):
                F_new = op.step(F, pi, h)
                pi = op.step_pi(pi, h)
                nstep += 1
                if not np.all(np.isfinite(F_new)):
                    bad = np.argwhere(~np.isfinite(F_new))[0]
                    raise NumericalError(
                        f"non-finite value at step {nstep}, state {bad[0]}, node {bad[1]}",
                        step=nstep, node=(int(bad[0]), int(bad[1])),
                    )
                F = F_new
            t = target
        record(t)
    return Solution(states, marginals, steps=nstep, dt=dt)


def total_cdf(state: FieldState) -> np.ndarray:
    """``F_total(x_k) = sum_s F_s(x_k)``."""
    return state.F.sum(axis=0)


def density(state: FieldState) -> tuple[np.ndarray, np.ndarray]:
    """Backward-difference densities per state and summed over states."""
    F = state.F
    p = np.diff(F, axis=1, prepend=0.0) / state.grid.dx
    return p, p.sum(axis=0)


def diffusion_coefficient(spec: ModelSpec, grid: Grid, dt: float, l: int, k: int) -> float:
    """Numerical diffusion ``|A| dx/2 (1 - |A| dt/dx)`` of the scheme at state ``l``, node ``k``."""
    a = abs(float(np.asarray(spec.drift_values(grid.x[k:k + 1]))[l, 0]))
    return a * grid.dx / 2 * (1 - a * dt / grid.dx)

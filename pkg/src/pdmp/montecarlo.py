"""Direct simulation of PDMP sample paths.

Between switching events a path follows ``dX/dt = A_s(X)``; the waiting time
in state ``s`` is exponential with rate ``mu_s`` and at each event the next
state is drawn from column ``s`` of the jump matrix.

Every path ``m`` of an ensemble owns the counter-based stream
``Philox(key=(seed, m))``, so an ensemble does not depend on how its paths are
split between workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .model import ModelSpec
from .solver import InitialCondition

__all__ = [
    "PathConfig", "SampleEnsemble", "GENERATOR",
    "path_rng", "sample_waiting_time", "waiting_time", "sample_next_state",
    "sample_initial", "integrate_drift", "simulate_path", "run_ensemble",
    "ecdf", "histogram", "write_ensemble_csv", "read_ensemble_csv",
]

GENERATOR = "numpy.Philox4x64-10[key=(seed,path)]"


def path_rng(seed: int, m: int) -> np.random.Generator:
    """Independent stream for path ``m`` of an ensemble seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(m)]))


def waiting_time(u: float, mu: float) -> float:
    """Inverse CDF of the exponential law: ``-ln(u)/mu`` for ``u`` in (0, 1]."""
    if mu == 0:
        return math.inf
    return -math.log(u) / mu


def sample_waiting_time(rng: np.random.Generator, mu: float) -> float:
    # 1 - U(0,1] keeps log finite
    return waiting_time(1.0 - rng.random(), mu)


def _pick(u: float, weights) -> int:
    acc = 0.0
    last = 0
    for i, w in enumerate(weights):
        if w > 0:
            acc += w
            last = i
            if u < acc:
                return i
    return last


def sample_next_state(rng: np.random.Generator, q: np.ndarray, j: int) -> int:
    """Draw the state entered from ``j``: ``i`` with probability ``q[i, j]``."""
    return _pick(rng.random(), q[:, j])


def sample_initial(ic: InitialCondition, rng: np.random.Generator) -> tuple[float, int]:
    """Draw ``(x0, s0)`` from the same initial law the solver starts from."""
    components = []
    weights = []
    for s in range(ic.S):
        for w, x0 in ic.steps[s]:
            components.append((s, x0))
            weights.append(w)
        if ic.tables[s] is not None:
            components.append((s, None))
            weights.append(ic.tables[s][1][-1])
    total = sum(weights)
    s, x0 = components[_pick(rng.random() * total, weights)]
    if x0 is None:
        xs, fs = ic.tables[s]
        target = fs[0] + rng.random() * (fs[-1] - fs[0])
        # first crossing of the (non-decreasing) table
        k = int(np.searchsorted(fs, target, side="right"))
        k = min(max(k, 1), len(fs) - 1)
        f0, f1 = fs[k - 1], fs[k]
        frac = 0.0 if f1 == f0 else (target - f0) / (f1 - f0)
        x0 = float(xs[k - 1] + frac * (xs[k] - xs[k - 1]))
    return x0, s


def _rk4(f, x: float, tau: float, h: float) -> float:
    n = max(1, math.ceil(tau / h * (1 - 1e-12)))
    for i in range(n):
        dt = h if i < n - 1 else tau - (n - 1) * h
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not math.isfinite(x):
            raise ex.DriftEvalError(f"non-finite state after {i + 1} RK4 substeps")
    return x


def _affine_flow(a: float, b: float, x0: float, tau: float) -> float:
    if a == 0.0:
        return x0 + b * tau
    c = -b / a
    return c + (x0 - c) * math.exp(a * tau)


def integrate_drift(drift: ex.Node, x0: float, tau: float, h: float = 1e-2) -> float:
    """Flow ``dx/dt = A(x)`` from ``x0`` for a time ``tau``.

    Affine drifts use the closed-form solution, anything else classical RK4
    with substep ``h`` (the last substep shortened).
    """
    if not (tau >= 0 and math.isfinite(tau)):
        raise ValueError(f"flow duration must be finite and >= 0, got {tau}")
    coeffs = ex.affine_coefficients(drift)
    if coeffs is not None:
        x = _affine_flow(*coeffs, x0, tau)
    elif tau == 0:
        x = x0
    else:
        x = _rk4(lambda y: ex.evaluate(drift, y), x0, tau, h)
    if not math.isfinite(x):
        raise ex.DriftEvalError(f"non-finite state integrating {ex.serialize(drift)}")
    return x


class _Kernel:
    """Per-model data reused across many paths."""

    def __init__(self, spec: ModelSpec, h: float):
        self.rates = [float(m) for m in spec.rates]
        self.columns = [list(map(float, spec.jump[:, j])) for j in range(spec.S)]
        self.affine = spec.affine_drifts()
        self.drifts = spec.drifts
        self.h = h

    def flow(self, s: int, x: float, tau: float) -> float:
        coeffs = self.affine[s]
        if coeffs is not None:
            x = _affine_flow(*coeffs, x, tau)
        elif tau > 0:
            drift = self.drifts[s]
            x = _rk4(lambda y: ex.evaluate(drift, y), x, tau, self.h)
        if not math.isfinite(x):
            raise ex.DriftEvalError(f"non-finite state in state {s}")
        return x

    def path(self, x: float, s: int, T: float, rng: np.random.Generator) -> tuple[float, int]:
        t = 0.0
        while True:
            tau = sample_waiting_time(rng, self.rates[s])
            if t + tau >= T:
                # an event landing exactly on T is not applied
                return self.flow(s, x, T - t), s
            x = self.flow(s, x, tau)
            t += tau
            s = _pick(rng.random(), self.columns[s])


def simulate_path(spec: ModelSpec, x0: float, s0: int, T: float,
                  rng: np.random.Generator, h: float = 1e-2) -> tuple[float, int]:
    """One sample path from ``(x0, s0)``; returns ``(X(T), s(T))``."""
    return _Kernel(spec, h).path(float(x0), int(s0), float(T), rng)


@dataclass(frozen=True)
class PathConfig:
    N: int
    T: float
    seed: int
    initial: InitialCondition
    substep: float = 1e-2

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not self.T >= 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        if not self.substep > 0:
            raise ValueError(f"substep must be > 0, got {self.substep}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class SampleEnsemble:
    """Sorted endpoints ``X(T)`` with the state each path ended in."""

    endpoints: np.ndarray
    states: np.ndarray
    seed: int
    T: float
    generator: str = GENERATOR

    @property
    def N(self) -> int:
        return len(self.endpoints)


def _run_chunk(spec, cfg, start, stop):
    kernel = _Kernel(spec, cfg.substep)
    xs = np.empty(stop - start)
    ss = np.empty(stop - start, dtype=np.int64)
    for i, m in enumerate(range(start, stop)):
        rng = path_rng(cfg.seed, m)
        x0, s0 = sample_initial(cfg.initial, rng)
        xs[i], ss[i] = kernel.path(x0, s0, cfg.T, rng)
    return xs, ss


def run_ensemble(spec: ModelSpec, cfg: PathConfig, workers: int | None = 1) -> SampleEnsemble:
    """Simulate ``cfg.N`` independent paths and collect their endpoints.

    ``workers`` > 1 spreads contiguous blocks of path indices over processes
    (``None`` uses every CPU); the result is identical for any value.
    """
    if cfg.initial.S != spec.S:
        raise ValueError(f"initial condition has {cfg.initial.S} states, model has {spec.S}")
    workers = (os.cpu_count() or 1) if workers is None else max(1, int(workers))
    N = int(cfg.N)
    if workers == 1 or N < 2 * workers:
        xs, ss = _run_chunk(spec, cfg, 0, N)
    else:
        bounds = np.linspace(0, N, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [spec] * (len(bounds) - 1), [cfg] * (len(bounds) - 1),
                                  bounds[:-1], bounds[1:]))
        xs = np.concatenate([p[0] for p in parts])
        ss = np.concatenate([p[1] for p in parts])
    order = np.lexsort((ss, xs))
    endpoints, states = xs[order], ss[order]
    endpoints.setflags(write=False)
    states.setflags(write=False)
    return SampleEnsemble(endpoints, states, int(cfg.seed), float(cfg.T))


def ecdf(ensemble: SampleEnsemble, x) -> np.ndarray:
    """Fraction of endpoints ``<= x``."""
    if ensemble.N == 0:
        raise ValueError("empty ensemble")
    return np.searchsorted(ensemble.endpoints, np.asarray(x, dtype=float), side="right") / ensemble.N


def histogram(ensemble: SampleEnsemble, edges) -> np.ndarray:
    """Histogram densities over ``edges``, normalised to integrate to one over the binned samples."""
    if ensemble.N == 0:
        raise ValueError("empty ensemble")
    counts, edges = np.histogram(ensemble.endpoints, bins=np.asarray(edges, dtype=float))
    total = counts.sum()
    if total == 0:
        return np.zeros(len(counts))
    return counts / (total * np.diff(edges))


def write_ensemble_csv(ensemble: SampleEnsemble, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# seed={ensemble.seed} N={ensemble.N} T={ensemble.T!r} generator={ensemble.generator}\n")
        fh.write("endpoint,end_state\n")
        for x, s in zip(ensemble.endpoints, ensemble.states):
            fh.write(f"{float(x)!r},{int(s)}\n")


def read_ensemble_csv(path) -> SampleEnsemble:
    with open(path) as fh:
        header = fh.readline()
        meta = dict(item.split("=", 1) for item in header.lstrip("# ").split())
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    return SampleEnsemble(data[:, 0].copy(), data[:, 1].astype(np.int64), int(meta["seed"]),
                          float(meta["T"]), meta["generator"])

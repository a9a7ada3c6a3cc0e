"""PDMP model definition: drift laws, switching rates and the jump matrix."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex

__all__ = [
    "ConfigurationError",
    "ModelSpec",
    "Violation",
    "validate_model",
    "generator_matrix",
    "equilibrium_domain",
    "parse_drift",
    "eval_drift",
]

log = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12


class ConfigurationError(ValueError):
    """A model, grid or initial condition cannot be used as configured."""


def parse_drift(text: str) -> ex.Node:
    return ex.parse(text)


def eval_drift(drift: ex.Node, x):
    return ex.evaluate(drift, x)


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelSpec:
    """S drift laws ``A_s``, switching rates ``mu_s`` and jump matrix ``q``.

    ``q[i, j]`` is the probability of jumping *to* state ``i`` *from* state ``j``,
    so every column of ``q`` sums to one.
    """

    drifts: tuple
    rates: np.ndarray
    jump: np.ndarray
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        drifts = tuple(ex.parse(d) if isinstance(d, str) else d for d in self.drifts)
        object.__setattr__(self, "drifts", drifts)
        object.__setattr__(self, "rates", _readonly(self.rates).reshape(-1))
        object.__setattr__(self, "jump", _readonly(np.atleast_2d(self.jump)))
        if self.domain is not None:
            object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))

    @property
    def S(self) -> int:
        return len(self.drifts)

    @classmethod
    def uniform(cls, drifts: Sequence, rate: float, domain=None) -> "ModelSpec":
        """All states switch at ``rate`` and jump to any state (itself included) with equal odds."""
        S = len(drifts)
        return cls(tuple(drifts), np.full(S, float(rate)), np.full((S, S), 1.0 / S), domain)

    def drift_values(self, x) -> np.ndarray:
        """S x len(x) array of ``A_s(x)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(ex.evaluate(d, x), x.shape) for d in self.drifts])

    def affine_drifts(self) -> list[tuple[float, float] | None]:
        return [ex.affine_coefficients(d) for d in self.drifts]

    def drift_strings(self) -> list[str]:
        return [ex.serialize(d) for d in self.drifts]


@dataclass(frozen=True)
class Violation:
    field: str
    index: object
    value: object
    message: str = ""

    def __str__(self):
        return f"{self.field}[{self.index}] = {self.value}: {self.message}"


def validate_model(spec: ModelSpec) -> list[Violation]:
    """Every broken invariant of ``spec``; empty when the model is usable."""
    out = []
    S = spec.S
    if S < 1:
        out.append(Violation("drifts", None, 0, "at least one state is required"))
    if spec.rates.shape != (S,):
        out.append(Violation("rates", None, spec.rates.shape[0], f"expected {S} rates"))
    else:
        for s, mu in enumerate(spec.rates):
            if not np.isfinite(mu) or mu < 0:
                out.append(Violation("rates", s, float(mu), "switching rate must be finite and >= 0"))
    q = spec.jump
    if q.shape != (S, S):
        out.append(Violation("jump", None, q.shape, f"expected a {S}x{S} matrix"))
        return out
    for i, j in zip(*np.nonzero(~((q >= 0) & (q <= 1)))):
        out.append(Violation("jump", (int(i), int(j)), float(q[i, j]), "probability outside [0, 1]"))
    colsum = q.sum(axis=0)
    for j in np.nonzero(np.abs(colsum - 1.0) > STOCHASTIC_TOL)[0]:
        out.append(Violation("jump.column", int(j), float(colsum[j]), "column must sum to 1"))
    if spec.domain is not None:
        lo, hi = spec.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            out.append(Violation("domain", None, spec.domain, "expected finite [x_min, x_max]"))
    return out


def generator_matrix(spec: ModelSpec) -> np.ndarray:
    """``Q[i, j] = (q[i, j] - delta_ij) * mu_j``; columns sum to zero."""
    S = spec.S
    Q = (spec.jump - np.eye(S)) * spec.rates[np.newaxis, :]
    # exact zero column sums: put the round-off on the diagonal
    off = Q - np.diag(np.diag(Q))
    Q = off - np.diag(off.sum(axis=0))
    Q.setflags(write=False)
    return Q


def equilibrium_domain(spec: ModelSpec) -> tuple[float, float]:
    """Interval spanned by the attractors ``-b/a`` of affine drifts ``a*x + b`` with ``a < 0``.

    Non-affine (or non-contracting) models need an explicit ``spec.domain``,
    which is then returned as is.
    """
    coeffs = spec.affine_drifts()
    if any(c is None or c[0] >= 0 for c in coeffs):
        if spec.domain is None:
            raise ConfigurationError(
                "equilibrium domain needs contracting affine drifts a*x + b with a < 0; "
                "give the domain explicitly"
            )
        return spec.domain
    roots = [-b / a for a, b in coeffs]
    lo, hi = min(roots), max(roots)
    if lo == hi:
        log.warning("degenerate equilibrium domain [%g, %g]; widening by 1", lo, hi)
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi

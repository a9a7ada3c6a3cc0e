"""JSON run configurations and CSV export of solver snapshots."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import expr as ex
from .model import ConfigurationError, ModelSpec, equilibrium_domain, validate_model
from .montecarlo import PathConfig
from .solver import FieldState, Grid, InitialCondition, build_grid, cfl_max_dt, density, total_cdf

__all__ = [
    "RunConfig", "SCHEMA", "AUTO_DT_FRACTION",
    "load_config", "resolve_config", "config_to_dict", "bundled_config",
    "write_snapshot_csv", "snapshot_filename",
]

AUTO_DT_FRACTION = 0.9

_number = {"type": "number"}
_step = {
    "type": "object",
    "properties": {"w": _number, "x0": _number},
    "required": ["w", "x0"],
    "additionalProperties": False,
}
_table = {
    "type": "object",
    "properties": {
        "x": {"type": "array", "items": _number, "minItems": 2},
        "F": {"type": "array", "items": _number, "minItems": 2},
    },
    "required": ["x", "F"],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "properties": {
                "states": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {"drift": {"type": "string"}, "mu": _number},
                        "required": ["drift", "mu"],
                        "additionalProperties": False,
                    },
                },
                "q": {"type": "array", "items": {"type": "array", "items": _number}},
                "domain": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
            },
            "required": ["states", "q"],
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "domain": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                "dx": {"type": "number", "exclusiveMinimum": 0},
                "k": {"type": "integer", "minimum": 3},
            },
            "oneOf": [{"required": ["dx"]}, {"required": ["k"]}],
            "additionalProperties": False,
        },
        "time": {
            "type": "object",
            "properties": {
                "T": {"type": "number", "minimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "allow_cfl_violation": {"type": "boolean"},
            },
            "required": ["T"],
            "additionalProperties": False,
        },
        "initial": {
            "type": "object",
            "properties": {
                "steps": {"type": "array", "items": {"type": "array", "items": _step}},
                "cdf_table": {"type": "array", "items": {"anyOf": [_table, {"type": "null"}]}},
            },
            "anyOf": [{"required": ["steps"]}, {"required": ["cdf_table"]}],
            "additionalProperties": False,
        },
        "snapshots": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "mc": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "substep": {"type": "number", "exclusiveMinimum": 0},
                "workers": {"type": "integer", "minimum": 1},
                "ks_tol": {"type": "number", "minimum": 0},
            },
            "required": ["n", "seed"],
            "additionalProperties": False,
        },
        "convergence": {
            "type": "object",
            "properties": {
                "levels": {"type": "integer", "minimum": 3},
                "ref_refine": {"type": "integer", "minimum": 2},
                "order_band": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "required": ["model", "grid", "time", "initial"],
    "additionalProperties": False,
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A fully resolved run: every default filled in."""

    name: str
    model: ModelSpec
    grid: Grid
    T: float
    dt: float
    allow_cfl_violation: bool
    initial: InitialCondition
    snapshots: tuple
    output_dir: str
    mc: dict | None = None
    convergence: dict = field(default_factory=dict)
    dt_auto: bool = False

    @property
    def dt_max(self) -> float:
        return cfl_max_dt(self.model, self.grid)

    def path_config(self, T: float | None = None) -> PathConfig:
        if self.mc is None:
            raise ConfigurationError("config has no 'mc' section")
        return PathConfig(N=self.mc["n"], T=self.T if T is None else T, seed=self.mc["seed"],
                          initial=self.initial, substep=self.mc.get("substep", 1e-2))


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def resolve_config(data: dict, name: str = "run") -> RunConfig:
    """Validate raw config data and fill in defaults."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data),
                    key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigurationError("; ".join(f"{_pointer(e.absolute_path)}: {e.message}" for e in errors))

    m = data["model"]
    try:
        drifts = [ex.parse(st["drift"]) for st in m["states"]]
    except ex.ParseError as exc:
        raise ConfigurationError(f"/model/states: {exc}") from None
    S = len(drifts)
    q = m["q"]
    if len(q) != S or any(len(row) != S for row in q):
        raise ConfigurationError(f"/model/q: expected a {S}x{S} matrix")
    spec = ModelSpec(tuple(drifts), [st["mu"] for st in m["states"]], q,
                     tuple(m["domain"]) if "domain" in m else None)
    problems = validate_model(spec)
    if problems:
        raise ConfigurationError("model validation failed: " + "; ".join(map(str, problems)))

    g = data["grid"]
    domain = tuple(g["domain"]) if "domain" in g else equilibrium_domain(spec)
    grid = build_grid(domain, K=g.get("k"), dx=g.get("dx"))

    init = data["initial"]
    steps = [[(st["w"], st["x0"]) for st in per] for per in init.get("steps", [])]
    tables = [None if tab is None else (tab["x"], tab["F"]) for tab in init.get("cdf_table", [])]
    if len(steps) not in (0, S) or len(tables) not in (0, S):
        raise ConfigurationError(f"/initial: expected entries for {S} states")
    ic = InitialCondition(steps=tuple(steps) or ((),) * S, tables=tuple(tables))
    problems = ic.validate()
    if problems:
        raise ConfigurationError("/initial: " + "; ".join(problems))

    t = data["time"]
    T = float(t["T"])
    dt_auto = "dt" not in t
    if dt_auto:
        dt_max = cfl_max_dt(spec, grid)
        if math.isinf(dt_max):
            dt = T if T > 0 else 1.0
        else:
            dt = AUTO_DT_FRACTION * dt_max
    else:
        dt = float(t["dt"])

    snaps = sorted(float(s) for s in data.get("snapshots", []))
    bad = [s for s in snaps if s > T]
    if bad:
        raise ConfigurationError(f"/snapshots: times {bad} lie beyond T = {T}")

    return RunConfig(
        name=data.get("name", name),
        model=spec,
        grid=grid,
        T=T,
        dt=dt,
        allow_cfl_violation=bool(t.get("allow_cfl_violation", False)),
        initial=ic,
        snapshots=tuple(snaps),
        output_dir=data.get("output_dir", "."),
        mc=dict(data["mc"]) if "mc" in data else None,
        convergence=dict(data.get("convergence", {})),
        dt_auto=dt_auto,
    )


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package, e.g. ``"relax4_cfl"``."""
    stem = name[:-5] if name.endswith(".json") else name
    path = resources.files("pdmp") / "configs" / f"{stem}.json"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return Path(str(path))


def load_config(path) -> RunConfig:
    """Read and resolve a JSON config. Bare names fall back to the bundled configs."""
    p = Path(path)
    if not p.exists():
        try:
            p = bundled_config(str(path))
        except FileNotFoundError:
            raise FileNotFoundError(f"config file not found: {path}") from None
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON: {exc}") from None
    return resolve_config(data, name=p.stem)


def config_to_dict(cfg: RunConfig) -> dict:
    """Serialise a resolved config; ``resolve_config(config_to_dict(c))`` reproduces ``c``."""
    spec = cfg.model
    out = {
        "name": cfg.name,
        "model": {
            "states": [{"drift": d, "mu": float(mu)} for d, mu in zip(spec.drift_strings(), spec.rates)],
            "q": spec.jump.tolist(),
        },
        "grid": {"domain": [cfg.grid.x_min, cfg.grid.x_max], "k": cfg.grid.K},
        "time": {"T": cfg.T, "dt": cfg.dt, "allow_cfl_violation": cfg.allow_cfl_violation},
        "initial": {},
        "snapshots": list(cfg.snapshots),
        "output_dir": cfg.output_dir,
    }
    if spec.domain is not None:
        out["model"]["domain"] = list(spec.domain)
    ic = cfg.initial
    if any(ic.steps):
        out["initial"]["steps"] = [[{"w": w, "x0": x0} for w, x0 in st] for st in ic.steps]
    if any(tab is not None for tab in ic.tables):
        out["initial"]["cdf_table"] = [
            None if tab is None else {"x": tab[0].tolist(), "F": tab[1].tolist()} for tab in ic.tables
        ]
    if not out["initial"]:
        out["initial"]["steps"] = [[] for _ in ic.steps]
    if cfg.mc is not None:
        out["mc"] = dict(cfg.mc)
    if cfg.convergence:
        out["convergence"] = dict(cfg.convergence)
    return out


def snapshot_filename(run: str, t: float) -> str:
    return f"{run}_t{t:g}.csv"


def write_snapshot_csv(state: FieldState, path) -> None:
    """One row per node: ``x, F_1..F_S, p_1..p_S, F_total, p_total``."""
    S = state.S
    p, p_total = density(state)
    cols = [state.grid.x, *state.F, *p, total_cdf(state), p_total]
    header = ["x"] + [f"F_{s + 1}" for s in range(S)] + [f"p_{s + 1}" for s in range(S)] + ["F_total", "p_total"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", fmt="%.17g",
               header=",".join(header), comments="")

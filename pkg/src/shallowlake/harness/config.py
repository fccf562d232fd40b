"""Run configuration: versioned JSON schema, loading and model construction."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import jsonschema

from ..control import ControlSignal
from ..dynamics import ModelParams, make_lake_dynamics, make_linear_dynamics
from ..objective import DEFAULT_QUAD_TOL, DEFAULT_STEP
from ..search import SearchConfig

SCHEMA_VERSION = 1
ENV_PREFIX = "SHALLOWLAKE_"

_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "model"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object",
            "required": ["dynamics", "rho", "c", "x0"],
            "additionalProperties": False,
            "properties": {
                "dynamics": {
                    "oneOf": [
                        {"type": "object", "required": ["kind", "b"], "additionalProperties": False,
                         "properties": {"kind": {"const": "lake"}, "b": _POS}},
                        {"type": "object", "required": ["kind", "b0"], "additionalProperties": False,
                         "properties": {"kind": {"const": "linear"}, "b0": _POS}},
                    ]
                },
                "rho": _POS,
                "c": _POS,
                "x0": {"type": "number", "minimum": 0},
            },
        },
        "control": {
            "oneOf": [
                {"type": "object", "required": ["constant"], "additionalProperties": False,
                 "properties": {"constant": _POS}},
                {"type": "object", "required": ["grid", "values", "tail"], "additionalProperties": False,
                 "properties": {"grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                                "values": {"type": "array", "items": _POS},
                                "tail": _POS}},
                {"type": "object", "required": ["file"], "additionalProperties": False,
                 "properties": {"file": {"type": "string"}}},
            ]
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"step": _POS, "quad_tol": _POS},
        },
        "seed": {"type": "integer", "minimum": 0},
        "t_end": _POS,
        "T": {"type": "number", "minimum": 1},
        "truncation_T": _POS,
        "V_lb": {"type": "number"},
        "search": {"type": "object"},
        "schedule": {"type": "array", "items": {"type": "number", "minimum": 1}},
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_cases": {"type": "integer", "minimum": 1}},
        },
    },
}


class ConfigError(ValueError):
    """Unreadable, schema-invalid or inconsistent configuration."""


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    model: dict
    control: ControlSignal | None = None
    step: float = DEFAULT_STEP
    quad_tol: float = DEFAULT_QUAD_TOL
    seed: int = 0
    t_end: float = 50.0
    T: float = 10.0
    truncation_T: float | None = None
    V_lb: float | None = None
    search: SearchConfig = field(default_factory=SearchConfig)
    schedule: tuple = ()
    n_cases: int | None = None

    def tolerances(self) -> dict:
        return {"step": self.step, "quad_tol": self.quad_tol}


def default_document() -> dict:
    """The reference instance: lake ``b = 1``, ``rho = 0.03``, ``c = 1``, ``x0 = 1``."""
    return {"schema_version": SCHEMA_VERSION,
            "model": {"dynamics": {"kind": "lake", "b": 1.0}, "rho": 0.03, "c": 1.0, "x0": 1.0}}


def build_params(model: dict) -> ModelParams:
    dyn = model["dynamics"]
    spec = make_lake_dynamics(dyn["b"]) if dyn["kind"] == "lake" else make_linear_dynamics(dyn["b0"])
    return ModelParams(spec, float(model["rho"]), float(model["c"]), float(model["x0"]))


def _load_control(doc: dict, base: Path) -> ControlSignal | None:
    spec = doc.get("control")
    if spec is None:
        return None
    if "file" in spec:
        path = Path(spec["file"])
        if not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise ConfigError(f"control file not found: {path}")
        try:
            spec = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"control file {path}: {exc}") from exc
        spec = spec.get("best_control", spec)
    try:
        return ControlSignal.from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid control: {exc}") from exc


def _search_config(raw: dict, seed: int, step: float, quad_tol: float, truncation_T) -> SearchConfig:
    known = {f.name for f in fields(SearchConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown search settings: {sorted(unknown)}")
    merged = {"seed": seed, "ode_step": step, "quad_tol": quad_tol, "truncation_T": truncation_T, **raw}
    try:
        return SearchConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid search settings: {exc}") from exc


def parse_config(doc: dict, base: Path = Path(".")) -> RunConfig:
    """Validate ``doc`` against the schema and build a ``RunConfig``."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    try:
        params = build_params(doc["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    tol = doc.get("tolerances", {})
    step = float(tol.get("step", DEFAULT_STEP))
    quad_tol = float(tol.get("quad_tol", DEFAULT_QUAD_TOL))
    seed = int(doc.get("seed", 0))
    truncation_T = doc.get("truncation_T")
    search = _search_config(doc.get("search", {}), seed, step, quad_tol, truncation_T)
    schedule = tuple(float(T) for T in doc.get("schedule", ()))
    if any(b < a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("schedule must be non-decreasing")
    return RunConfig(params=params, model=doc["model"], control=_load_control(doc, base), step=step,
                     quad_tol=quad_tol, seed=seed, t_end=float(doc.get("t_end", 50.0)),
                     T=float(doc.get("T", 10.0)), truncation_T=truncation_T, V_lb=doc.get("V_lb"),
                     search=search, schedule=schedule, n_cases=doc.get("verify", {}).get("n_cases"))


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read a JSON config file; ``None`` gives the reference instance."""
    if path is None:
        return parse_config(default_document())
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc, path.parent)


def with_overrides(cfg: RunConfig, seed: int | None = None, quad_tol: float | None = None) -> RunConfig:
    """Apply command-line or environment overrides to seed and quadrature tolerance."""
    changes = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed must be nonnegative")
        changes["seed"] = seed
    if quad_tol is not None:
        if not quad_tol > 0:
            raise ConfigError("tolerance must be positive")
        changes["quad_tol"] = quad_tol
    if not changes:
        return cfg
    search = replace(cfg.search, seed=changes.get("seed", cfg.seed), quad_tol=changes.get("quad_tol", cfg.quad_tol))
    return replace(cfg, search=search, **changes)

"""JSON configuration: schema, defaults, loading and validation.

A config is one JSON document with the sections ``model``, ``grid``,
``scales``, ``experiment`` and ``output``.  Missing keys take the defaults
below; ``experiment.seed`` has no wall-clock fallback.  ``grid.time_band`` is
``null`` or ``[lo, hi]`` with ``hi = null`` meaning +inf.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Dict, Optional

import jsonschema

from .errors import ConfigError

DEFAULTS: Dict[str, Any] = {
    "model": {
        "beta": 0.5,
        "betas": [0.2, 0.5, 0.8],
    },
    "grid": {
        "tau_values": [1.0],
        "lambda_values": [1.0, 1.25],
        "time_band": None,
        "cap": 4096,
        "max_jitter": 1e-6,
    },
    "scales": {
        "q": 2.0,
        "n_min": 3,
        "n_max": 12,
        "envelope_n_min": 3,
        "envelope_n_max": 12,
    },
    "experiment": {
        "seed": 20240101,
        "sample": {"n_reps": 100, "component": "field", "tau0": 1.0},
        "lil": {
            "tau": 1.0,
            "lam": 1.0,
            "n_reps": 2000,
            "split_tau0": None,
            "epsilon": 0.5,
            "window": [0.5, 1.5],
        },
        "propagate": {
            "tau0": 1.0,
            "taus": [1.0, 1.5, 2.0],
            "n_runs": 50,
            "depth": 8,
            "min_depth": 6,
            "n_controls": 3,
            "path_steps": 16384,
            "path_span": 2.0,
            "initial": [1.0, 2.0],
            "guard_factor": 4.0,
            "stat_max_lag": 0.25,
            "envelope_halfwidth": 0.5,
            "ratio_threshold": 1.5,
            "control_window": [0.8, 1.2],
            "coverage_threshold": 0.8,
        },
        "slepian": {
            "g1_values": [0.5, 1.0, 2.0, 3.0],
            "g2_values": [0.5, 1.0, 2.0, 3.0],
            "r_values": [-0.6, -0.1, 0.3, 0.8],
            "gammas": [1.0, 2.0, 3.0, 4.0],
            "rate_n_reps": 1000000,
            "rate_grid_lambdas": [1.0 + k / 16 for k in range(16)],
        },
    },
    "output": {
        "dir": "swelab-out",
        "csv": True,
        "binary": True,
    },
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_beta = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}


def _obj(props: Dict[str, Any], defaults: Dict[str, Any]) -> Dict[str, Any]:
    out = {"type": "object", "additionalProperties": False, "properties": {}}
    for key, schema in props.items():
        s = dict(schema)
        if key in defaults and not isinstance(defaults[key], dict):
            s["default"] = defaults[key]
        out["properties"][key] = s
    return out


def build_schema() -> Dict[str, Any]:
    d = DEFAULTS
    ex = d["experiment"]
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "swelab configuration",
        "type": "object",
        "additionalProperties": False,
        "properties": {
            "model": _obj({"beta": _beta, "betas": {"type": "array", "items": _beta, "minItems": 1}}, d["model"]),
            "grid": _obj(
                {
                    "tau_values": {"type": "array", "items": _nonneg, "minItems": 1},
                    "lambda_values": {"type": "array", "items": _nonneg, "minItems": 1},
                    "time_band": {"oneOf": [{"type": "null"}, {"type": "array", "items": {"type": ["number", "null"]},
                                                                "minItems": 2, "maxItems": 2}]},
                    "cap": _count,
                    "max_jitter": _pos,
                },
                d["grid"],
            ),
            "scales": _obj(
                {"q": {"type": "number", "exclusiveMinimum": 1}, "n_min": _count, "n_max": _count,
                 "envelope_n_min": _count, "envelope_n_max": _count},
                d["scales"],
            ),
            "experiment": {
                "type": "object",
                "additionalProperties": False,
                "required": ["seed"],
                "properties": {
                    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                    "sample": _obj({"n_reps": _count, "component": {"enum": ["field", "u1", "u2", "v1"]},
                                    "tau0": _pos}, ex["sample"]),
                    "lil": _obj(
                        {"tau": _nonneg, "lam": _nonneg, "n_reps": _count,
                         "split_tau0": {"oneOf": [{"type": "null"}, _pos]}, "epsilon": _pos, "window": _pair},
                        ex["lil"],
                    ),
                    "propagate": _obj(
                        {"tau0": _pos, "taus": {"type": "array", "items": _pos, "minItems": 1}, "n_runs": _count,
                         "depth": _count, "min_depth": _count, "n_controls": _count, "path_steps": _count,
                         "path_span": _pos, "initial": _pair, "guard_factor": _nonneg, "stat_max_lag": _pos,
                         "envelope_halfwidth": _pos, "ratio_threshold": _pos, "control_window": _pair,
                         "coverage_threshold": _nonneg},
                        ex["propagate"],
                    ),
                    "slepian": _obj(
                        {"g1_values": {"type": "array", "items": _pos}, "g2_values": {"type": "array", "items": _pos},
                         "r_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": -0.99, "exclusiveMaximum": 0.99}},
                         "gammas": {"type": "array", "items": _pos, "minItems": 1}, "rate_n_reps": _count,
                         "rate_grid_lambdas": {"type": "array", "items": _nonneg, "minItems": 1}},
                        ex["slepian"],
                    ),
                },
            },
            "output": _obj({"dir": {"type": "string"}, "csv": {"type": "boolean"}, "binary": {"type": "boolean"}},
                           d["output"]),
        },
    }


def _merge(base: Dict[str, Any], over: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc: Any) -> None:
    try:
        jsonschema.validate(doc, build_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    sc = doc.get("scales", {})
    n_min = sc.get("n_min", DEFAULTS["scales"]["n_min"])
    n_max = sc.get("n_max", DEFAULTS["scales"]["n_max"])
    if n_min > n_max:
        raise ConfigError(f"scales.n_min ({n_min}) exceeds scales.n_max ({n_max})")
    band = doc.get("grid", {}).get("time_band")
    if band is not None:
        lo, hi = band
        if lo is None or lo < 0 or (hi is not None and hi <= lo):
            raise ConfigError("grid.time_band must be [lo, hi] with 0 <= lo < hi (hi null for +inf)")


def resolve(doc: Optional[Dict[str, Any]], seed_override: Optional[int] = None) -> Dict[str, Any]:
    """Validate ``doc`` and fill defaults.  ``None`` means the built-in default config."""
    if doc is None:
        doc = {"experiment": {"seed": DEFAULTS["experiment"]["seed"]}}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    doc = copy.deepcopy(doc)
    if seed_override is not None:
        doc.setdefault("experiment", {})["seed"] = int(seed_override)
    if "seed" not in doc.get("experiment", {}):
        raise ConfigError("experiment.seed is required (no wall-clock seeding)")
    validate(doc)
    return _merge(DEFAULTS, doc)


def load(path) -> Dict[str, Any]:
    """Parse a config file; problems surface as :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None


def write_schema(path) -> None:
    Path(path).write_text(json.dumps(build_schema(), indent=2) + "\n", encoding="utf-8")


def defaults_text() -> str:
    return json.dumps(DEFAULTS, indent=2)


if __name__ == "__main__":  # pragma: no cover
    import sys

    write_schema(sys.argv[1] if len(sys.argv) > 1 else "config.schema.json")

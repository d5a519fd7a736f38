"""Experiment configuration: YAML/JSON text validated against a fixed schema.

Unknown keys and wrongly typed values are rejected with the offending key
path and line number.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


NUM = (int, float)
OPT_NUM = (int, float, type(None))
ANY_MU = (int, float, dict)
STR_LIST = list

SCHEMA: dict[str, Any] = {
    "mesh": {
        "dim": int, "inner": str, "outer": str, "R": NUM, "h": NUM, "r0": NUM,
        "refinements": int, "uniform_radius": OPT_NUM, "growth": NUM, "neumann_where": str,
    },
    "tensor": {
        "kind": str, "mu": ANY_MU, "lam": NUM, "seed": int, "self_adjoint": bool, "shift": NUM,
        "inner": list, "outer": list,
    },
    "problem": {"kind": str, "data": str, "seed": int},
    "manufactured": {"u_in": list, "u_out": list, "p_in": (str, int, float),
                     "p_out": (str, int, float)},
    "solver": {
        "rtol": NUM, "gauge": str, "pressure_mode": str, "theta": NUM, "tol": NUM,
        "maxit": int, "seed": int, "samples": int, "floor": NUM,
    },
    "checks": list,
    "ns": {"load": list, "density": list, "margin": NUM, "skew": bool},
    "truncation": {"radii": list, "h": NUM, "uniform_radius": NUM, "collar_width": NUM,
                   "density": list, "outer": str},
    "output": {"json": str, "csv": str},
}

DEFAULTS: dict[str, Any] = {
    "mesh": {"dim": 2, "inner": "square", "outer": "ball", "R": 2.0, "h": 0.25, "r0": 0.5,
             "refinements": 0, "uniform_radius": None, "growth": 1.5, "neumann_where": "x > 0"},
    "tensor": {"kind": "isotropic", "mu": 1.0, "lam": 0.0, "seed": 0, "self_adjoint": False,
               "shift": 1.0},
    "problem": {"kind": "transmission", "data": "random", "seed": 0},
    "manufactured": {},
    "solver": {"rtol": 1e-10, "gauge": "collar", "pressure_mode": "continuous", "theta": 1.0,
               "tol": 1e-12, "maxit": 100, "seed": 0, "samples": 20, "floor": 0.02},
    "checks": None,
    "ns": {"load": ["sin(3*y)", "x*cos(y) + 1"], "density": ["ny", "-2*nx"], "margin": 0.5,
           "skew": False},
    "truncation": {"radii": [4.0, 8.0, 16.0], "h": 0.125, "uniform_radius": 1.0,
                   "collar_width": 0.25, "density": ["nx", "-ny"], "outer": "box"},
    "output": {},
}

CHOICES = {
    ("mesh", "inner"): ("square", "disk", "cube", "ball"),
    ("mesh", "outer"): ("box", "ball"),
    ("tensor", "kind"): ("isotropic", "random", "array"),
    ("problem", "kind"): ("transmission", "dirichlet", "neumann", "mixed"),
    ("problem", "data"): ("random", "manufactured", "zero"),
    ("solver", "gauge"): ("collar", "mean", "none"),
    ("solver", "pressure_mode"): ("continuous", "broken"),
    ("truncation", "outer"): ("box", "ball"),
}


def _line(node) -> str:
    return f"line {node.start_mark.line + 1}"


def _check(node, schema, path: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError(f"{path or 'config'} ({_line(node)}): expected a mapping")
        for knode, vnode in node.value:
            key = knode.value
            if key not in schema:
                raise ConfigError(f"{path + '.' if path else ''}{key} ({_line(knode)}): unknown key")
            _check(vnode, schema[key], f"{path + '.' if path else ''}{key}")


def _types(data: dict, schema: dict, path: str = "") -> None:
    for key, val in data.items():
        want = schema[key]
        where = f"{path + '.' if path else ''}{key}"
        if isinstance(want, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a mapping")
            _types(val, want, where)
            continue
        ok = isinstance(val, want) and not (isinstance(val, bool) and bool not in
                                            (want if isinstance(want, tuple) else (want,)))
        if not ok:
            raise ConfigError(f"{where}: expected {want}, got {type(val).__name__}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text (YAML, which includes JSON)."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"malformed config{where}: {getattr(exc, 'problem', exc)}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    if node is not None:
        _check(node, SCHEMA, "")
    _types(raw, SCHEMA)
    merged = _merge(DEFAULTS, raw)
    for (sec, key), allowed in CHOICES.items():
        val = merged.get(sec, {}).get(key)
        if val is not None and val not in allowed:
            raise ConfigError(f"{sec}.{key}: {val!r} is not one of {allowed}")
    if merged["checks"] is not None and not all(isinstance(c, str) for c in merged["checks"]):
        raise ConfigError("checks: expected a list of names")
    return ExperimentConfig(merged)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)

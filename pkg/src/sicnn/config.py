"""JSON run configuration and the bundled ``example6`` preset."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .activation import (
    ActivationSpec,
    capped_quadratic,
    clipped_linear,
    tanh_rule,
)
from .integrator import IvpSetup, SolverOptions
from .network import InputSignal, NetworkSpec, TrigTerm
from .schedule import GammaSchedule

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "build", "load", "example6_config", "preset"]


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_matrix = {"type": "array", "items": {"type": "array", "items": _num}}
_cells = {"anyOf": [_num, {"type": "array", "items": {"anyOf": [_num, {"type": "array", "items": _num}]}}]}
_term = {
    "type": "object",
    "additionalProperties": False,
    "required": ["amplitude", "omega"],
    "properties": {
        "amplitude": _num,
        "omega": _num,
        "phase": _num,
        "kind": {"enum": ["sin", "cos"]},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "a", "inputs", "tau", "schedule", "activation"],
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["m", "n"],
            "properties": {
                "m": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "r": {"type": "integer", "minimum": 0},
            },
        },
        "a": _matrix,
        "C": _matrix,
        "coupling_matrix": _matrix,
        "inputs": {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": _term}}},
        "tau": {"type": "number", "minimum": 0},
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["example6", "affine", "table"]},
                "p_range": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "slope": _num,
                "offset": _num,
                "advance": _num,
                "theta": {"type": "array", "items": _num},
                "zeta": {"type": "array", "items": _num},
                "p_start": {"type": "integer"},
                "theta_bar": _num,
                "theta_under": _num,
                "zeta_under": _num,
            },
        },
        "activation": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "rule", "M", "L"],
            "properties": {
                "kind": {"enum": [
                    "pointwise_on_gamma_delayed", "pointwise_on_gamma", "pointwise_on_delay",
                    "two_point", "segment_integral",
                ]},
                "rule": {"enum": ["capped_quadratic", "clipped_linear", "tanh", "constant"]},
                "params": {"type": "object", "additionalProperties": _num},
                "M": {"type": "number", "exclusiveMinimum": 0},
                "L": {"type": "number", "exclusiveMinimum": 0},
                "lag": {"type": "number", "minimum": 0},
                "weights": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "quad_points": {"type": "integer", "minimum": 1},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["sigma", "phi"],
            "properties": {"sigma": _num, "phi": _cells, "psi": _cells},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "h": {"type": "number", "exclusiveMinimum": 0},
                "picard_tol": {"type": "number", "exclusiveMinimum": 0},
                "picard_max_iters": {"type": "integer", "minimum": 1},
                "quadrature": {"enum": ["trapezoid", "simpson"]},
            },
        },
        "seed": {"type": "integer"},
    },
}


@dataclass
class RunConfig:
    net: NetworkSpec
    schedule: GammaSchedule
    act: ActivationSpec
    setup: Optional[IvpSetup]
    opts: SolverOptions
    seed: int
    raw: dict


def _terms(*spec):
    return [{"amplitude": a, "omega": w, "kind": k} for a, w, k in spec]


def example6_config() -> dict:
    """The 3x3 worked example with its initial data at ``sigma = theta_0 = 1/4``."""
    s2, s3, pi = math.sqrt(2.0), math.sqrt(3.0), math.pi
    return {
        "grid": {"m": 3, "n": 3, "r": 1},
        "a": [[9, 3, 5], [6, 5, 4], [3, 12, 9]],
        "C": [[0.08, 0.01, 0.02], [0.05, 0.03, 0.06], [0.04, 0.07, 0.02]],
        "inputs": [
            [
                _terms((0.1, 1.0, "cos"), (0.2, s2, "sin")),
                _terms((0.2, pi, "cos"), (0.1, s2, "sin")),
                _terms((0.15, 2.0, "cos"), (-0.12, pi, "cos")),
            ],
            [
                _terms((0.15, 3.0, "cos"), (-0.1, pi, "sin")),
                _terms((0.2, 1.0, "cos"), (-0.15, s2, "sin")),
                _terms((0.1, 1.0, "sin"), (0.2, s3, "cos")),
            ],
            [
                _terms((0.2, s2, "cos"), (0.14, pi, "sin")),
                _terms((0.2, s2, "cos"), (0.1, 1.0, "sin")),
                _terms((0.15, s2, "cos"), (-0.13, 4.0, "cos")),
            ],
        ],
        "tau": 0.3,
        "schedule": {"kind": "example6", "p_range": [-10000, 10000]},
        "activation": {
            "kind": "pointwise_on_gamma_delayed",
            "rule": "capped_quadratic",
            "params": {"threshold": 0.1, "plateau": 0.005},
            "M": 0.005,
            "L": 0.1,
        },
        "initial": {
            "sigma": 0.25,
            "phi": [[-0.025, 0.036, -0.014], [0.012, -0.021, 0.042], [0.023, -0.015, 0.012]],
        },
        "solver": {"picard_tol": 1e-10, "picard_max_iters": 100, "quadrature": "trapezoid"},
        "seed": 0,
    }


PRESETS = {"example6": example6_config}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name]())
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def _rule(name: str, params: dict):
    p = dict(params)
    try:
        if name == "capped_quadratic":
            return capped_quadratic(p.pop("threshold", 0.1), p.pop("plateau", None)), p
        if name == "clipped_linear":
            return clipped_linear(p.pop("slope"), p.pop("cap")), p
        if name == "tanh":
            return tanh_rule(p.pop("gain", 1.0), p.pop("scale", 1.0)), p
        if name == "constant":
            value = float(p.pop("value"))
            return (lambda s, _v=value: np.full(np.shape(s), _v)), p
    except KeyError as exc:
        raise ConfigError(f"rule {name!r} needs parameter {exc.args[0]!r}") from None
    raise ConfigError(f"unknown rule {name!r}")


def _schedule(spec: dict) -> GammaSchedule:
    kind = spec["kind"]
    p_range = tuple(spec.get("p_range", (-10000, 10000)))
    allowed = {
        "example6": {"kind", "p_range"},
        "affine": {"kind", "p_range", "slope", "offset", "advance"},
        "table": {"kind", "theta", "zeta", "p_start", "theta_bar", "theta_under", "zeta_under"},
    }[kind]
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"schedule kind {kind!r} does not take {sorted(extra)}")
    if kind == "example6":
        return GammaSchedule.example6(p_range)
    if kind == "affine":
        return GammaSchedule.affine(spec.get("slope", 1.0), spec.get("offset", 0.0),
                                    spec.get("advance", 0.0), p_range)
    if "theta" not in spec or "zeta" not in spec:
        raise ConfigError("table schedule needs 'theta' and 'zeta'")
    declared = {k: spec[k] for k in ("theta_bar", "theta_under", "zeta_under") if k in spec}
    return GammaSchedule.from_table(spec["theta"], spec["zeta"], spec.get("p_start", 0), **declared)


def build(raw: dict) -> RunConfig:
    """Validate a configuration document and build the model objects."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    try:
        m, n = raw["grid"]["m"], raw["grid"]["n"]
        r = raw["grid"].get("r", 1)
        a = np.asarray(raw["a"], dtype=float)
        if a.shape != (m, n):
            raise ConfigError(f"'a' must be {m}x{n}")
        inputs_raw = raw["inputs"]
        if len(inputs_raw) != m or any(len(row) != n for row in inputs_raw):
            raise ConfigError(f"'inputs' must be {m}x{n} lists of terms")
        inputs = [
            InputSignal([TrigTerm(t["amplitude"], t["omega"], t.get("phase", 0.0), t.get("kind", "sin"))
                         for t in cell])
            for row in inputs_raw for cell in row
        ]
        if ("C" in raw) == ("coupling_matrix" in raw):
            raise ConfigError("give exactly one of 'C' (per-cell weights) or 'coupling_matrix'")
        if "C" in raw:
            net = NetworkSpec.from_cell_weights(a, raw["C"], inputs, raw["tau"], r)
        else:
            net = NetworkSpec(a, raw["coupling_matrix"], inputs, raw["tau"], r)
        schedule = _schedule(raw["schedule"])

        act_raw = raw["activation"]
        rule, leftover = _rule(act_raw["rule"], act_raw.get("params", {}))
        if leftover:
            raise ConfigError(f"unknown parameters for rule {act_raw['rule']!r}: {sorted(leftover)}")
        kind = act_raw["kind"]
        if kind == "two_point":
            w1, w2 = act_raw.get("weights", (0.5, 0.5))
            base = rule
            rule = lambda u, v, _b=base: _b(w1 * np.asarray(u) + w2 * np.asarray(v))
        elif "weights" in act_raw:
            raise ConfigError("'weights' applies only to two_point activations")
        act = ActivationSpec(
            kind, rule, act_raw["M"], act_raw["L"],
            lag=act_raw.get("lag"),
            quad_points=act_raw.get("quad_points", 8),
            name=act_raw["rule"],
        )
        act.resolved_probes(net.tau)

        setup = None
        if "initial" in raw:
            ini = raw["initial"]
            setup = IvpSetup(ini["sigma"], _cell_values(ini["phi"], net.size),
                             _cell_values(ini["psi"], net.size) if "psi" in ini else None)
        opts = SolverOptions(**raw.get("solver", {}))
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(net, schedule, act, setup, opts, raw.get("seed", 0), raw)


def _cell_values(value, size):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    arr = arr.reshape(-1)
    if arr.size != size:
        raise ConfigError(f"initial data needs {size} values, got {arr.size}")
    return arr


def load(path: Any) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return build(raw)

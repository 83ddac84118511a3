"""Run configuration: YAML files validated against a versioned JSON schema.

Every field has a default, so an empty file (or no file) is a valid config.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from kinemix.mixture import MixtureParams, VelocityGrid
from kinemix.transport import ProfileSpec, SchemeConfig, SpatialGrid

SCHEMA_VERSION = 1

SUITES = ("basis", "collision", "entropy", "operator", "identities", "lemma44", "constants")

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "seed": 0,
    "mixture": {"m": [1.0, 2.0], "n": [1.0, 0.5], "beta": 1.0},
    "grid": {"R_v": 6.0, "N_v": 16, "angular": "exact"},
    "space": {"x_lo": -20.0, "x_hi": 20.0, "N_x": 128, "boundary": "outflow"},
    "scheme": {
        "mode": "direct",
        "collision": "full-implicit",
        "dt": None,
        "cfl": 0.9,
        "order": 1,
        "T_final": 10.0,
        "nonlinear": True,
    },
    "initial": {
        "amplitude": 1e-3,
        "shape": "odd-bump",
        "width": 2.0,
        "center": 0.0,
        "fluid": {"rho1": 1.0, "rho2": 1.0, "e": 1.0},
        "kinetic": {"heat": 1.0},
        "zero_mean": False,
    },
    "diagnostics": {
        "suites": list(SUITES),
        "samples": 20,
        "theta": None,
        "epsilon": None,
        "constants": True,
        "bound_factor": 10.0,
        "decay_factor": 0.5,
        "tol_drift": 1e-8,
        "tol_cons": 1e-8,
    },
    "output": {"directory": "kinemix-out", "every": 1, "checkpoint_every": 0},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _pos, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "mixture": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": _vec,
                "n": _vec,
                "beta": {"oneOf": [_pos, {"type": "array", "items": {"type": "array", "items": _pos}}]},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "R_v": _pos,
                "N_v": {"type": "integer", "minimum": 4, "multipleOf": 2},
                "angular": {"enum": ["exact", "lebedev26"]},
            },
        },
        "space": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x_lo": _num,
                "x_hi": _num,
                "N_x": {"type": "integer", "minimum": 8},
                "boundary": {"enum": ["periodic", "outflow"]},
            },
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["direct", "micromacro"]},
                "collision": {"enum": ["full-implicit", "nu-implicit"]},
                "dt": {"oneOf": [_pos, {"type": "null"}]},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "order": {"enum": [1, 2]},
                "T_final": _pos,
                "nonlinear": {"type": "boolean"},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitude": {"type": "number", "minimum": 0},
                "shape": {"enum": ["gaussian", "odd-bump", "sine", "cosine-offset"]},
                "width": _pos,
                "center": _num,
                "fluid": {"type": "object", "additionalProperties": _num},
                "kinetic": {
                    "type": "object",
                    "propertyNames": {"enum": ["heat", "shear"]},
                    "additionalProperties": _num,
                },
                "zero_mean": {"type": "boolean"},
            },
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "suites": {"type": "array", "items": {"enum": list(SUITES)}, "uniqueItems": True},
                "samples": {"type": "integer", "minimum": 1},
                "theta": {"oneOf": [_pos, {"type": "null"}]},
                "epsilon": {"oneOf": [_pos, {"type": "null"}]},
                "constants": {"type": "boolean"},
                "bound_factor": _pos,
                "decay_factor": _pos,
                "tol_drift": _pos,
                "tol_cons": _pos,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "every": {"type": "integer", "minimum": 1},
                "checkpoint_every": {"type": "integer", "minimum": 0},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("fluid", "kinetic"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class RunConfig:
    """Validated configuration tree with typed accessors."""

    def __init__(self, data: dict | None = None):
        data = data or {}
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"schema violation at {path}: {exc.message}") from None
        self.data = _merge(DEFAULTS, data)
        self._check()

    def _check(self):
        try:
            params = self.params
        except ValueError as exc:
            raise ConfigError(f"mixture: {exc}") from None
        sp = self.data["space"]
        if not sp["x_hi"] > sp["x_lo"]:
            raise ConfigError("space: x_hi must exceed x_lo")
        labels = [f"rho{i + 1}" for i in range(params.I)] + ["q1", "q2", "q3", "e"]
        bad = [k for k in self.data["initial"]["fluid"] if k not in labels]
        if bad:
            raise ConfigError(f"initial.fluid: unknown components {bad}; allowed {labels}")
        sc = self.data["scheme"]
        if sc["order"] == 2 and sc["collision"] != "full-implicit":
            raise ConfigError("scheme: order 2 needs collision 'full-implicit'")
        if params.mass_weights() is None:
            raise ConfigError("mixture: masses must be commensurate (integer ratios up to 64)")

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        if path is None:
            return cls({})
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        return cls(data)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def params(self) -> MixtureParams:
        mx = self.data["mixture"]
        return MixtureParams(np.array(mx["m"], float), np.array(mx["n"], float), np.array(mx["beta"], float))

    @property
    def vgrid(self) -> VelocityGrid:
        g = self.data["grid"]
        return VelocityGrid(int(g["N_v"]), float(g["R_v"]))

    @property
    def sgrid(self) -> SpatialGrid:
        s = self.data["space"]
        return SpatialGrid(float(s["x_lo"]), float(s["x_hi"]), int(s["N_x"]), s["boundary"])

    @property
    def scheme(self) -> SchemeConfig:
        s = self.data["scheme"]
        d = self.data["diagnostics"]
        return SchemeConfig(dt=s["dt"], cfl=s["cfl"], mode=s["mode"], collision=s["collision"],
                            nonlinear=s["nonlinear"], order=s["order"], tol_drift=d["tol_drift"])

    @property
    def profile(self) -> ProfileSpec:
        i = self.data["initial"]
        return ProfileSpec(amplitude=i["amplitude"], shape=i["shape"], width=i["width"], center=i["center"],
                           fluid=dict(i["fluid"]), kinetic=dict(i["kinetic"]), zero_mean=i["zero_mean"])

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

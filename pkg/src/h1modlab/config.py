"""Experiment configuration: JSON schemas, parsing with defaults, and map
specifications."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import jsonschema

from .errors import SchemaError
from .group import Dilate, Invert, QcMap, RadialStretch, Rotate, Translate

EXPERIMENTS = ("ring_decay", "qc_invariance", "metric_sandwich", "polar_volume", "koebe",
               "lindelof", "capacity", "chain_demo", "uniformity")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}
_BOOL = {"type": "boolean"}
_POINT = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_DIMS = {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 3, "maxItems": 3}
_POS_LIST = {"type": "array", "items": _POS, "minItems": 1}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_GENERATOR = {"oneOf": [
    _obj({"type": {"const": "translate"}, "by": _POINT}, ["type", "by"]),
    _obj({"type": {"const": "dilate"}, "r": _POS}, ["type", "r"]),
    _obj({"type": {"const": "rotate"}, "theta": _NUM}, ["type", "theta"]),
    _obj({"type": {"const": "invert"}}, ["type"]),
    _obj({"type": {"const": "radial_stretch"}, "alpha": _POS}, ["type", "alpha"]),
]}
_MAP = {"type": "array", "items": _GENERATOR}

_DOMAIN = {"oneOf": [
    _obj({"type": {"const": "ball"}, "center": _POINT, "radius": _POS, "resolution": _POS}, ["type"]),
    _obj({"type": {"const": "slit_ball"}, "center": _POINT, "radius": _POS, "width": _POS,
          "resolution": _POS}, ["type"]),
    _obj({"type": {"const": "cusp"}, "length": _POS, "kappa": _POS, "resolution": _POS}, ["type"]),
    _obj({"type": {"const": "custom_implicit"}, "expr": {"type": "string"},
          "bbox": {"type": "array", "items": _PAIR, "minItems": 3, "maxItems": 3},
          "resolution": _POS}, ["type", "expr", "bbox"]),
]}

E = math.e
RADIAL_STRETCH = [{"type": "radial_stretch", "alpha": 1.5}]
ROTATE_DILATE = [{"type": "rotate", "theta": 0.8}, {"type": "dilate", "r": 1.5}]

# (property schema, default) per experiment; ``None`` defaults stay absent
PARAMS: dict = {
    "ring_decay": {
        "a": (_POS, 1.0), "b": (_POS, None), "ratios": (_POS_LIST, [E, E ** 2, E ** 3]),
        "dims": (_DIMS, [32, 32, 32]), "n_alpha": (_INT, 32), "n_theta": (_INT, 64),
        "nodes_per_log": (_INT, 200), "grid": ({"enum": ["graded", "uniform"]}, "graded"),
        "rel_width": (_POS, 0.2), "slope_tol": (_POS, 0.3), "value_tol": (_POS, None),
    },
    "qc_invariance": {
        "map": (_MAP, ROTATE_DILATE), "a": (_POS, 1.0), "b": (_POS, E),
        "dims": (_DIMS, [16, 16, 16]), "n_alpha": (_INT, 16), "n_theta": (_INT, 32),
        "bounds": (_PAIR, None),
    },
    "metric_sandwich": {
        "n_pairs": (_INT, 10000), "scale": (_POS, 2.0), "budget": ({"type": "integer", "minimum": 0}, 0),
        "upper_slack": (_POS, 1e-3), "sharpness_tol": (_POS, 0.02), "sharpness_budget": (_INT, 20),
    },
    "polar_volume": {
        "n_s": (_INT, 200), "n_alpha": (_INT, 200), "n_theta": (_INT, 200), "cartesian_n": (_INT, 200),
        "rtol": (_POS, 1e-3),
    },
    "koebe": {
        "map": (_MAP, RADIAL_STRETCH), "n_radial": (_INT, 8), "n_spiral": ({"type": "integer", "minimum": 0}, 4),
        "tol": (_POS, 1e-2), "spot_checks": ({"type": "integer", "minimum": 0}, 2),
    },
    "lindelof": {
        "map": (_MAP, RADIAL_STRETCH), "x0": (_POINT, None), "n_points": (_INT, 10),
        "ks": ({"type": "array", "items": _INT, "minItems": 3}, [2 ** j for j in range(1, 10)]),
        "tol": (_POS, 5e-2), "min_agree": (_POS, 0.9),
    },
    "capacity": {
        "a": (_POS, 1.0), "ratios": (_POS_LIST, [E, E ** 2, E ** 3]), "dims": (_DIMS, [32, 32, 32]),
        "n_alpha": (_INT, 32), "n_theta": (_INT, 64), "rel_width": (_POS, 0.2),
        "identity_tol": (_POS, 0.15), "slope_tol": (_POS, 0.3),
    },
    "chain_demo": {
        "map": (_MAP, ROTATE_DILATE), "n_points": (_INT, 8),
        "ks": ({"type": "array", "items": _INT, "minItems": 3}, list(range(2, 17))),
        "dims": (_INT, 64), "mod_budget": ({"type": "integer", "minimum": 0}, 64),
        "grid_dims": (_INT, 32),
    },
    "uniformity": {
        "domain": (_DOMAIN, {"type": "ball"}),
        "pairs": ({"type": "array", "items": {"type": "array", "items": _POINT, "minItems": 2,
                                              "maxItems": 2}}, None),
        "n_pairs": (_INT, 10), "budget": (_INT, 40),
    },
}


def param_schema(experiment: str) -> dict:
    """JSON schema of the ``params`` table of ``experiment``."""
    if experiment not in PARAMS:
        raise SchemaError([("experiment", f"unknown experiment {experiment!r}")])
    return _obj({k: v[0] for k, v in PARAMS[experiment].items()})


def config_schema(experiment: Optional[str] = None) -> dict:
    params = param_schema(experiment) if experiment else {"type": "object"}
    return _obj({"experiment": {"enum": list(EXPERIMENTS)}, "params": params,
                 "seed": {"type": "integer", "minimum": 0}, "output": {"type": "string"},
                 "threads": _INT}, ["experiment"])


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    output: Optional[str] = None
    threads: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "seed": self.seed}


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts += extra[:1]
    elif err.validator == "required":
        parts.append(err.message.split("'")[1])
    return ".".join(parts) or "<root>"


def _violations(schema: dict, data: Any) -> list:
    v = jsonschema.Draft202012Validator(schema)
    return [(_path(e), e.message) for e in sorted(v.iter_errors(data), key=lambda e: list(e.path))]


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON config and fill in parameter defaults.

    Raises
    ------
    SchemaError
        Listing every violation as ``field.path: reason``.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError([("<root>", f"not valid JSON ({exc})")]) from exc
    problems = _violations(config_schema(), data)
    if not problems:
        problems = _violations(config_schema(data["experiment"]), data)
    if problems:
        raise SchemaError(problems)
    params = {k: copy.deepcopy(d) for k, (_, d) in PARAMS[data["experiment"]].items() if d is not None}
    params.update(data.get("params", {}))
    return ExperimentConfig(data["experiment"], params, data.get("seed", 0), data.get("output"),
                            data.get("threads", 1), data)


_GEN = {"translate": lambda g: Translate(tuple(g["by"])), "dilate": lambda g: Dilate(g["r"]),
        "rotate": lambda g: Rotate(g["theta"]), "invert": lambda g: Invert(),
        "radial_stretch": lambda g: RadialStretch(g["alpha"])}


def build_map(gens: list) -> QcMap:
    """``QcMap`` from a list of generator tables, applied in order."""
    return QcMap(tuple(_GEN[g["type"]](g) for g in gens))

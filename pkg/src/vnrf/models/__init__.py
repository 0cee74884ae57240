"""Concrete specifications and the JSON model-file loader."""
from __future__ import annotations

import json
from pathlib import Path

from .base import PositivityError, RegionResult, SpecificationModel
from .baseline import IIDModel, PairwiseModel
from .compose import compose_specification, composed_probability, consistency_gap
from .polygon import PolygonModel, PolygonParams
from .renewal import RenewalModel, RenewalParams

__all__ = [
    "IIDModel", "ModelFileError", "PairwiseModel", "PolygonModel", "PolygonParams",
    "PositivityError", "RegionResult", "RenewalModel", "RenewalParams", "SpecificationModel",
    "compose_specification", "composed_probability", "consistency_gap", "load_model",
    "model_from_dict",
]


class ModelFileError(ValueError):
    pass


_FIELDS = {
    "renewal": {"rho1", "rho2", "c1", "c2", "k_max"},
    "polygon": {"beta", "L", "J"},
    "iid": {"probs", "dim"},
    "markov1": {"beta", "field", "dim", "transition", "bond", "site"},
}


def model_from_dict(obj: dict, source: str = "<model>") -> SpecificationModel:
    if not isinstance(obj, dict):
        raise ModelFileError(f"{source}: top level must be an object")
    kind = obj.get("model")
    if kind not in _FIELDS:
        raise ModelFileError(f"{source}: field 'model' must be one of {sorted(_FIELDS)}, got {kind!r}")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ModelFileError(f"{source}: field 'params' must be an object")
    unknown = set(params) - _FIELDS[kind]
    if unknown:
        raise ModelFileError(f"{source}: unknown field params.{sorted(unknown)[0]} for model {kind}")
    if obj.get("seedless", True) is not True:
        raise ModelFileError(f"{source}: field 'seedless' must be true")
    try:
        if kind == "renewal":
            k_max = params.get("k_max", 200)
            p = RenewalParams(**{k: float(v) for k, v in params.items() if k != "k_max"})
            return RenewalModel(p, int(k_max))
        if kind == "polygon":
            return PolygonModel(PolygonParams(float(params.get("beta", 0.05)), int(params.get("L", 2)),
                                              tuple(params.get("J", ()))))
        if kind == "iid":
            return IIDModel(params.get("probs", (0.5, 0.5)), int(params.get("dim", 1)))
        if "transition" in params:
            return PairwiseModel.markov_chain(params["transition"])
        if "bond" in params:
            return PairwiseModel(params["bond"], params.get("site"), int(params.get("dim", 1)))
        return PairwiseModel.ising(float(params.get("beta", 0.2)), float(params.get("field", 0.0)),
                                   int(params.get("dim", 1)))
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"{source}: params: {exc}") from None


def load_model(path: str | Path) -> SpecificationModel:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return model_from_dict(obj, str(path))

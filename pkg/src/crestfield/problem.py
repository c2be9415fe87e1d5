"""Problem files: JSON schema, validation and construction of the run objects."""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from . import boundary as bd
from . import supremand as sp
from .construct import METHODS, SolveRequest
from .eigen import EigenProblem
from .errors import SchemaError
from .grid import Grid
from .verify import ExclusionPolicy

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM_LIST = {"type": "array", "items": _NUM}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}

_AFFINE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["offset", "gradient"],
    "properties": {"offset": _NUM_LIST, "gradient": {"anyOf": [_MATRIX, _NUM_LIST]}},
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "supremand", "boundary"],
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim", "bounds", "resolution"],
            "properties": {
                "dim": {"enum": [1, 2]},
                "bounds": {"type": "array", "minItems": 1, "maxItems": 2,
                           "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
                "resolution": {"type": "array", "minItems": 1, "maxItems": 2,
                               "items": {"type": "integer", "minimum": 8}},
            },
        },
        "supremand": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "catalog": {"enum": list(sp.CATALOG_IDS)},
                "coefficients": {"type": "array"},
                "expr": {"type": "string"},
                "conformal_expr": {"type": "string"},
                "convex_top": {"type": "boolean"},
            },
            "oneOf": [
                {"required": ["catalog"], "not": {"anyOf": [{"required": ["expr"]},
                                                            {"required": ["conformal_expr"]}]}},
                {"anyOf": [{"required": ["expr"]}, {"required": ["conformal_expr"]}],
                 "not": {"required": ["catalog"]}},
            ],
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "required": ["catalog"],
            "properties": {
                "catalog": {"enum": ["zero", "affine", "quadratic", "piecewise_affine"]},
                "coefficients": {"type": "object"},
            },
        },
        "order": {"enum": [1, 2]},
        "p": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 1}},
        "lambda": {"anyOf": [{"type": "number", "minimum": 0}, {"const": "auto"}]},
        "alpha0": _POS,
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": list(METHODS)},
                "m": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "maxIters": {"type": "integer", "minimum": 0},
                "targetDeviationFraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "lipschitzBudget": _POS,
                "initialCell": {"type": "integer", "minimum": 4},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p": {"type": "number", "minimum": 1},
                "deltaList": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "tolCrest": {"type": "number", "minimum": 0},
                "tolConst": {"type": "number", "minimum": 0},
                "exclusion": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"foldDetectionThreshold": _POS,
                                   "bandWidth": {"type": "integer", "minimum": 1}},
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"ladder": {"type": "array", "minItems": 1,
                                      "items": {"type": "number", "minimum": 1}}},
        },
    },
}

DEFAULT_P = (1.0, 2.0, 4.0)
DEFAULT_LADDER = tuple(float(2 ** k) for k in range(9))


@dataclass
class Problem:
    raw: dict
    sha256: str
    grid: Grid
    spec: object
    phi: object
    order: int
    p_list: list
    lam: Optional[float]
    alpha0: float
    solver: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    ladder: list = field(default_factory=list)

    def eigen_problem(self):
        return EigenProblem(self.spec, self.phi, self.grid, self.order, self.lam, self.alpha0)

    def solve_request(self, seed=None):
        s = self.solver
        return SolveRequest(
            self.eigen_problem(),
            method=s.get("method", "REFINE"),
            m=s.get("m", 1),
            seed=s.get("seed", 0) if seed is None else seed,
            max_iters=s.get("maxIters", 2000),
            target_deviation_fraction=s.get("targetDeviationFraction", 0.05),
            lipschitz_budget=s.get("lipschitzBudget", float("inf")),
            initial_cell=s.get("initialCell"),
        )

    def exclusion_policy(self):
        ex = self.verify.get("exclusion", {})
        kw = {}
        if "foldDetectionThreshold" in ex:
            kw["fold_detection_threshold"] = float(ex["foldDetectionThreshold"])
        if "bandWidth" in ex:
            kw["band_width"] = int(ex["bandWidth"])
        return ExclusionPolicy(**kw)

    def tolerances(self):
        return {k: self.verify[k] for k in ("tolCrest", "tolConst") if k in self.verify}

    @property
    def deltas(self):
        return tuple(self.verify.get("deltaList", (0.1, 0.2)))

    @property
    def verify_p(self):
        return float(self.verify.get("p", 2.0))


def _path(err):
    parts = [str(p) for p in err.absolute_path]
    return "/" + "/".join(parts)


def _ascending(values, where):
    vals = [float(v) for v in values]
    for i, (a, b) in enumerate(zip(vals, vals[1:])):
        if not b > a:
            raise SchemaError(f"values must be strictly ascending ({a} then {b})", f"{where}/{i + 1}")
    return vals


def load_problem(text):
    """Parse and validate problem JSON text; raises :class:`SchemaError` with a JSON path."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError(f"invalid JSON: {err.msg} (line {err.lineno}, column {err.colno})", "/") from None
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(list(e.absolute_path)), str(e.absolute_path)))
    if errors:
        err = errors[-1] if errors[0].validator == "oneOf" and len(errors) > 1 else errors[0]
        raise SchemaError(err.message, _path(err))
    digest = hashlib.sha256(text.encode("utf-8") if isinstance(text, str) else text).hexdigest()
    return build_problem(raw, digest)


def build_problem(raw, digest=""):
    dom = raw["domain"]
    dim = dom["dim"]
    if len(dom["bounds"]) != dim:
        raise SchemaError(f"expected {dim} bound pairs", "/domain/bounds")
    if len(dom["resolution"]) != dim:
        raise SchemaError(f"expected {dim} resolutions", "/domain/resolution")
    try:
        grid = Grid(tuple(tuple(b) for b in dom["bounds"]), tuple(dom["resolution"]))
    except ValueError as err:
        raise SchemaError(str(err), "/domain") from None

    try:
        phi = bd.from_dict(raw["boundary"], dim)
    except (KeyError, ValueError, TypeError) as err:
        raise SchemaError(f"bad boundary datum: {err}", "/boundary/coefficients") from None
    n, N = phi.dims
    if n != dim:
        raise SchemaError(f"boundary datum acts on R^{n}, domain is {dim}-D", "/boundary/coefficients")

    sup = raw["supremand"]
    try:
        if "catalog" in sup:
            spec = sp.from_catalog(sup["catalog"], sup.get("coefficients"))
        else:
            spec = sp.from_expression(sup.get("expr"), sup.get("conformal_expr"), n=dim, N=N,
                                      claimed_convex_top=sup.get("convex_top", False))
    except (ValueError, IndexError, TypeError) as err:
        raise SchemaError(str(err), "/supremand") from None

    order = raw.get("order", 1)
    if spec.kind != "catalog" and spec.order != order:
        raise SchemaError(f"supremand needs order {spec.order}", "/order")
    p_list = _ascending(raw.get("p", DEFAULT_P), "/p")
    ladder = _ascending(raw.get("sweep", {}).get("ladder", DEFAULT_LADDER), "/sweep/ladder")
    lam = raw.get("lambda", "auto")
    lam = None if lam == "auto" else float(lam)
    return Problem(raw, digest, grid, spec, phi, order, p_list, lam, float(raw.get("alpha0", 1.0)),
                   dict(raw.get("solver", {})), dict(raw.get("verify", {})), ladder)

"""JSON formats for spaces, sequences, densities, plans, functions and
experiment configurations."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .ambient import Density, FiniteSpace, GeodesicTemplate, SpaceSequence, refining_sequence
from .calculus import SpaceFunction
from .plans import CurvePlan, DiscreteCurve


class ConfigError(ValueError):
    """Malformed or missing input file or configuration."""


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc


def dumps(obj) -> str:
    """Deterministic JSON text."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _need(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"{where}: missing field {key!r}")
    return d[key]


def _floats(x, where: str):
    try:
        return [float(v) for v in x]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected a list of numbers") from exc


def _rel(base: Path, ref) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


# templates and spaces

def template_to_dict(t: GeodesicTemplate) -> dict:
    return {"kind": t.kind, "extent": list(t.extent), "tiebreak": t.tiebreak}


def template_from_dict(d: dict) -> GeodesicTemplate:
    try:
        return GeodesicTemplate(_need(d, "kind", "template"), tuple(np.atleast_1d(d.get("extent", 1.0))),
                                d.get("tiebreak", "positive"))
    except ValueError as exc:
        raise ConfigError(f"template: {exc}") from exc


def space_to_dict(space: FiniteSpace, with_dist: bool = False) -> dict:
    out = {"template": template_to_dict(space.template),
           "points": space.points.tolist(),
           "weights": space.weights.tolist(),
           "basepoint": space.basepoint,
           "name": space.name}
    if with_dist:
        out["dist"] = space.dist.tolist()
    return out


def space_from_dict(d: dict) -> FiniteSpace:
    t = template_from_dict(_need(d, "template", "space"))
    try:
        return FiniteSpace(t, np.asarray(_need(d, "points", "space"), dtype=float).reshape(-1, t.dim),
                           np.asarray(_floats(_need(d, "weights", "space"), "space.weights")),
                           basepoint=int(d.get("basepoint", 0)),
                           dist=None if d.get("dist") is None else np.asarray(d["dist"], dtype=float),
                           name=str(d.get("name", "")))
    except ValueError as exc:
        raise ConfigError(f"space: {exc}") from exc


def _space_in(d: dict, base: Path, where: str) -> FiniteSpace:
    if "space" in d:
        return space_from_dict(d["space"])
    if "space_ref" in d:
        return load_space(_rel(base, d["space_ref"]))
    raise ConfigError(f"{where}: needs 'space' or 'space_ref'")


def load_space(path) -> FiniteSpace:
    return space_from_dict(read_json(path))


# sequences

def sequence_from_dict(d: dict, base: Path = Path(".")) -> SpaceSequence:
    """Either {terms: [...], limit: ..., test_family} with inline spaces or
    file references, or a generator {template, ns, n_limit, measure}."""
    if "ns" in d:
        t = template_from_dict(_need(d, "template", "sequence"))
        if d.get("measure", "uniform") != "uniform":
            raise ConfigError("sequence: only the uniform measure can be generated")
        try:
            seq = refining_sequence(t, list(d["ns"]), _need(d, "n_limit", "sequence"))
        except ValueError as exc:
            raise ConfigError(f"sequence: {exc}") from exc
        return seq

    def one(x):
        return load_space(_rel(base, x)) if isinstance(x, str) else space_from_dict(x)

    terms = tuple(one(x) for x in _need(d, "terms", "sequence"))
    limit = one(_need(d, "limit", "sequence"))
    try:
        return SpaceSequence(limit.template, terms, limit, family_id=d.get("test_family", "bumps-v1"))
    except ValueError as exc:
        raise ConfigError(f"sequence: {exc}") from exc


def sequence_to_dict(seq: SpaceSequence) -> dict:
    return {"terms": [space_to_dict(s) for s in seq.terms], "limit": space_to_dict(seq.limit),
            "test_family": seq.family_id}


def load_sequence(path) -> SpaceSequence:
    p = Path(path)
    return sequence_from_dict(read_json(p), p.parent)


# densities, functions, plans

def density_from_dict(d: dict, base: Path = Path(".")) -> Density:
    space = _space_in(d, base, "density")
    try:
        if "values" in d:
            return Density(space, np.asarray(_floats(d["values"], "density.values")))
        return Density.from_masses(space, np.asarray(_floats(_need(d, "masses", "density"), "density.masses")))
    except ValueError as exc:
        raise ConfigError(f"density: {exc}") from exc


def load_density(path) -> Density:
    p = Path(path)
    return density_from_dict(read_json(p), p.parent)


def function_from_dict(d: dict, base: Path = Path("."), space: FiniteSpace = None) -> SpaceFunction:
    space = space if space is not None and "space" not in d and "space_ref" not in d else _space_in(d, base, "function")
    try:
        return SpaceFunction(space, np.asarray(_floats(_need(d, "values", "function"), "function.values")),
                             d.get("neighbors"))
    except ValueError as exc:
        raise ConfigError(f"function: {exc}") from exc


def load_function(path, space: FiniteSpace = None) -> SpaceFunction:
    p = Path(path)
    return function_from_dict(read_json(p), p.parent, space)


def plan_to_dict(plan: CurvePlan, space_ref: str = None) -> dict:
    out = {"curves": [{"grid": c.time_grid.tolist(), "nodes": c.nodes.tolist()} for c in plan.curves],
           "masses": plan.masses.tolist()}
    if space_ref is None:
        out["space"] = space_to_dict(plan.space)
    else:
        out["space_ref"] = space_ref
    return out


def plan_from_dict(d: dict, base: Path = Path("."), space: FiniteSpace = None) -> CurvePlan:
    space = space if space is not None and "space" not in d and "space_ref" not in d else _space_in(d, base, "plan")
    try:
        curves = tuple(DiscreteCurve(np.asarray(c["grid"], dtype=float), np.asarray(c["nodes"], dtype=float))
                       for c in _need(d, "curves", "plan"))
        return CurvePlan(curves, np.asarray(_floats(_need(d, "masses", "plan"), "plan.masses")), space)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"plan: {exc}") from exc


def load_plan(path, space: FiniteSpace = None) -> CurvePlan:
    p = Path(path)
    return plan_from_dict(read_json(p), p.parent, space)


# closed-form functions for experiment configs

def function_spec(spec: dict):
    """Callable on template coordinates from a small declarative spec.

    Kinds: ``poly`` (coefficients in the first coordinate), ``ramp``
    (clip((x - lo) / (hi - lo), 0, 1)), ``sin``/``cos`` (freq, axis, period),
    and ``constant``.
    """
    kind = _need(spec, "kind", "function_sequence")
    axis = int(spec.get("axis", 0))
    if kind == "poly":
        coeffs = _floats(_need(spec, "coeffs", "function_sequence"), "coeffs")
        return lambda x: np.polynomial.polynomial.polyval(x[..., axis], coeffs)
    if kind == "ramp":
        lo, hi = float(spec.get("lo", 0.0)), float(spec.get("hi", 1.0))
        if hi <= lo:
            raise ConfigError("ramp needs hi > lo")
        return lambda x: np.clip((x[..., axis] - lo) / (hi - lo), 0.0, 1.0)
    if kind in ("sin", "cos"):
        freq = float(spec.get("freq", 1.0))
        period = float(spec.get("period", 1.0))
        fn = np.sin if kind == "sin" else np.cos
        return lambda x: fn(2 * math.pi * freq * x[..., axis] / period)
    if kind == "constant":
        c = float(spec.get("value", 1.0))
        return lambda x: np.full(np.shape(x)[:-1], c)
    raise ConfigError(f"unknown function kind {kind!r}")


NAMED_FUNCTIONS = {
    "x": {"kind": "poly", "coeffs": [0.0, 1.0]},
    "x2": {"kind": "poly", "coeffs": [0.0, 0.0, 1.0]},
    "const": {"kind": "constant", "value": 1.0},
    "ramp": {"kind": "ramp", "lo": 0.25, "hi": 0.75},
    "sin": {"kind": "sin", "freq": 1.0},
}

REGIMES_Q = ("cd_nonneg", "cd_general", "mcp")
REGIMES_INF = ("cd", "mcp")


def load_config(path) -> dict:
    """Validated experiment configuration with defaults filled in."""
    p = Path(path)
    raw = read_json(p)
    cfg = {"base": p.parent}
    seq_d = _need(raw, "sequence", "config")
    cfg["sequence"] = load_sequence(_rel(p.parent, seq_d)) if isinstance(seq_d, str) else \
        sequence_from_dict(seq_d, p.parent)
    fspec = _need(raw, "function_sequence", "config")
    if isinstance(fspec, str):
        if fspec not in NAMED_FUNCTIONS:
            raise ConfigError(f"config: unknown function {fspec!r}; known: {sorted(NAMED_FUNCTIONS)}")
        fspec = NAMED_FUNCTIONS[fspec]
    if not isinstance(fspec, dict):
        raise ConfigError("config: function_sequence must be a name or an object")
    if fspec.get("kind") != "values":
        function_spec(fspec)
    cfg["function_sequence"] = fspec
    try:
        cfg["p"] = float(raw.get("p", 2.0))
        cfg["K"] = float(raw.get("K", 0.0))
        cfg["N"] = None if raw.get("N") is None else float(raw["N"])
        cfg["corpus_seed"] = int(raw.get("corpus_seed", 0))
        cfg["q_schedule"] = [float(q) for q in raw.get("q_schedule", [2, 4, 8, 16])]
        cfg["schedule"] = [(int(M), int(n)) for M, n in _need(raw, "schedule", "config")]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    if not cfg["schedule"]:
        raise ConfigError("config: schedule must be nonempty")
    cfg["regime"] = _need(raw, "regime", "config")
    allowed = REGIMES_INF if cfg["p"] == 1 else REGIMES_Q
    if cfg["regime"] not in allowed:
        raise ConfigError(f"config: regime must be one of {allowed} for p = {cfg['p']:g}")
    if cfg["regime"] == "mcp" and cfg["N"] is None:
        raise ConfigError("config: the mcp regime needs N")
    if cfg["p"] < 1:
        raise ConfigError("config: p must be at least 1")
    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict) or any(not isinstance(v, (int, float)) or v <= 0 for v in tol.values()):
        raise ConfigError("config: tolerances must be positive numbers")
    cfg["tolerances"] = dict(tol)
    cfg["output_dir"] = raw.get("output_dir", "mosco_out")
    cfg["raw"] = raw
    return cfg


def function_sequence_from_config(cfg: dict):
    from .harness import FunctionSequence

    spec = cfg["function_sequence"]
    seq = cfg["sequence"]
    p = cfg["p"]
    if spec.get("kind") == "values":
        terms = tuple(SpaceFunction(s, np.asarray(v, float)) for s, v in zip(seq.terms, _need(spec, "terms", "values")))
        limit = SpaceFunction(seq.limit, np.asarray(_need(spec, "limit", "values"), float))
        return FunctionSequence(seq, terms, limit, p)
    return FunctionSequence.from_callable(seq, function_spec(spec), p)

"""Experiment files: TOML sections with ``key = value`` pairs and inline tables.

Example::

    [potential]
    bernoulli = [0.5, 0.5]

    [observable]
    table = [1.0, -1.0]

    [experiment]
    epsilon = 0.5
    grid = [100, 200, 400, 800]
    samples = 1000000
    seed = 7

Overrides use ``section.key=value`` with a TOML value; bare words are read
as strings.  Unknown sections and keys are rejected by name.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError
from .ldlab import ExperimentConfig
from .rauzy import Permutation
from .rng import check_seed
from .shift import Observable
from .suspension import FlowObservable, Roof
from .thermo import bernoulli_potential

__all__ = [
    "SCHEMA",
    "parse_config",
    "parse_override",
    "build_potential",
    "build_observable",
    "build_roof",
    "build_flow_observable",
    "build_experiment",
    "build_permutation",
    "section",
]

# Allowed keys per section, with their defaults (None means "no default").
SCHEMA: dict[str, dict] = {
    "potential": {"alphabet": None, "depth": 1, "table": None, "bernoulli": None},
    "observable": {"alphabet": None, "depth": 1, "table": None},
    "roof": {"alphabet": None, "depth": 1, "table": None, "constant": None, "r0": None},
    "flow_observable": {
        "alphabet": None,
        "depth": 1,
        "table": None,
        "breaks": None,
        "coefficients": None,
        "support": None,
    },
    "experiment": {
        "epsilon": 0.5,
        "grid": None,
        "samples": 100_000,
        "seed": None,
        "mode": "both",
        "xi": 0.1,
        "a": 0.05,
        "zeta": None,
        "xi_lap": 0.0,
        "omega": 0.01,
        "estimator": "is",
        "block_size": 20_000,
        "workers": None,
        "min_ess": 100.0,
        "confidence": 0.95,
        "exact_budget": 4_000_000,
    },
    "rauzy": {"permutation": None, "cap": 1_000_000},
    "orbit": {"steps": 10, "lam": None, "delta": None, "seed": None},
    "livsic": {"p_max": 8, "tol": 1e-10, "budget": 2_000_000},
    "pressure": {"t": [0.0]},
    "rate": {"epsilon": None, "strict": False},
    "demo": {
        "starts": 100,
        "steps": 10_000,
        "lengths": [1000, 10_000],
        "epsilon": 0.2,
        "observable": None,
        "seed": None,
        "bins": 40,
    },
}


def parse_override(text: str) -> tuple[str, str, object]:
    """``"experiment.samples=1000"`` -> ``("experiment", "samples", 1000)``."""
    if "=" not in text:
        raise ValidationError(f"override {text!r} is not of the form section.key=value")
    lhs, raw = text.split("=", 1)
    lhs = lhs.strip()
    if lhs.count(".") != 1:
        raise ValidationError(f"override key {lhs!r} must be section.key")
    sec, key = (p.strip() for p in lhs.split("."))
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return sec, key, value


def _check_keys(data: dict) -> None:
    for sec, body in data.items():
        if sec not in SCHEMA:
            raise ValidationError(f"unknown section {sec!r}")
        if not isinstance(body, dict):
            raise ValidationError(f"{sec!r} must be a section, not a value")
        for key in body:
            if key not in SCHEMA[sec]:
                raise ValidationError(f"unknown key {sec}.{key}")


def parse_config(path: str | Path | None, overrides=()) -> dict:
    """Read a config file (may be empty or absent) and apply overrides.

    Returns ``{section: {key: value}}`` with every default filled in for the
    sections present.
    """
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file {str(p)!r} does not exist")
        try:
            data = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
            where = f" (line {line}, column {col})" if line is not None else ""
            raise ValidationError(f"{p}: parse error{where}: {exc}") from exc
    _check_keys(data)
    for text in overrides:
        sec, key, value = parse_override(text)
        _check_keys({sec: {key: value}})
        data.setdefault(sec, {})[key] = value
    return {sec: {**SCHEMA[sec], **body} for sec, body in data.items()}


def section(cfg: dict, name: str, required: bool = True) -> dict | None:
    if name in cfg:
        return cfg[name]
    if required:
        raise ValidationError(f"missing section [{name}]")
    return None


def _require(sec_name: str, body: dict, key: str):
    v = body.get(key)
    if v is None:
        raise ValidationError(f"missing key {sec_name}.{key}")
    return v


def _int(sec_name, key, v, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{sec_name}.{key} must be an integer")
    if minimum is not None and v < minimum:
        raise ValidationError(f"{sec_name}.{key} must be at least {minimum}")
    return v


def _float(sec_name, key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{sec_name}.{key} must be a finite number")
    return float(v)


def _float_list(sec_name, key, v):
    if not isinstance(v, list) or not v:
        raise ValidationError(f"{sec_name}.{key} must be a non-empty list of numbers")
    return np.array([_float(sec_name, key, x) for x in v])


def _table(sec_name: str, body: dict, alphabet: int | None = None) -> Observable:
    table = _float_list(sec_name, "table", _require(sec_name, body, "table"))
    depth = _int(sec_name, "depth", body["depth"], 1)
    L = body.get("alphabet") or alphabet
    if L is None:
        L = round(table.size ** (1 / depth))
    L = _int(sec_name, "alphabet", L, 2)
    if table.size != L**depth:
        raise ValidationError(f"{sec_name}.table has {table.size} entries, expected alphabet**depth = {L**depth}")
    return Observable(table, L, depth)


def build_potential(cfg: dict) -> Observable:
    body = section(cfg, "potential")
    if body.get("bernoulli") is not None:
        if body.get("table") is not None:
            raise ValidationError("potential: give either bernoulli or table, not both")
        p = _float_list("potential", "bernoulli", body["bernoulli"])
        if body.get("alphabet") is not None and body["alphabet"] != p.size:
            raise ValidationError("potential.alphabet does not match potential.bernoulli")
        return bernoulli_potential(p)
    return _table("potential", body)


def build_observable(cfg: dict, alphabet: int) -> Observable:
    obs = _table("observable", section(cfg, "observable"), alphabet)
    if obs.L != alphabet:
        raise ValidationError(f"observable.alphabet is {obs.L}, potential uses {alphabet}")
    return obs


def build_roof(cfg: dict, alphabet: int) -> Roof:
    body = section(cfg, "roof")
    if body.get("constant") is not None:
        if body.get("table") is not None:
            raise ValidationError("roof: give either constant or table, not both")
        c = _float("roof", "constant", body["constant"])
        if c <= 0:
            raise ValidationError("roof.constant must be positive")
        return Roof.constant(c, alphabet)
    obs = _table("roof", body, alphabet)
    if obs.L != alphabet:
        raise ValidationError(f"roof.alphabet is {obs.L}, potential uses {alphabet}")
    r0 = body.get("r0")
    return Roof(obs, None if r0 is None else _float("roof", "r0", r0))


def build_flow_observable(cfg: dict, alphabet: int) -> FlowObservable:
    body = section(cfg, "flow_observable")
    depth = _int("flow_observable", "depth", body["depth"], 1)
    if body.get("coefficients") is None:
        obs = _table("flow_observable", body, alphabet)
        return FlowObservable.fiber_constant(obs.flat, obs.L, obs.depth)
    if body.get("table") is not None:
        raise ValidationError("flow_observable: give either table or coefficients, not both")
    breaks = _float_list("flow_observable", "breaks", _require("flow_observable", body, "breaks"))
    try:
        coeffs = np.array(body["coefficients"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError("flow_observable.coefficients must be a rectangular numeric array") from exc
    L = body.get("alphabet") or alphabet
    if coeffs.ndim != 3 or coeffs.shape[0] != L**depth:
        raise ValidationError(
            f"flow_observable.coefficients must have shape (alphabet**depth = {L**depth}, pieces, degree + 1), got {coeffs.shape}"
        )
    support = body.get("support")
    return FlowObservable(L, depth, breaks, coeffs, support=None if support is None else _float("flow_observable", "support", support))


def build_permutation(cfg: dict) -> Permutation:
    body = section(cfg, "rauzy")
    v = _require("rauzy", body, "permutation")
    if isinstance(v, str):
        return Permutation.parse(v)
    if not isinstance(v, list):
        raise ValidationError("rauzy.permutation must be a list like [3, 2, 1]")
    return Permutation(tuple(_int("rauzy", "permutation", x) for x in v))


def require_seed(body: dict, sec_name: str, seed_flag) -> int:
    seed = seed_flag if seed_flag is not None else body.get("seed")
    if seed is None:
        raise ValidationError(f"a seed is required: set {sec_name}.seed or pass --seed")
    return check_seed(seed)


def build_experiment(cfg: dict, kind: str, seed_flag=None, workers_flag=None) -> ExperimentConfig:
    """Assemble an ExperimentConfig for ``kind`` in {shift, flow, lap}."""
    psi = build_potential(cfg)
    exp = section(cfg, "experiment")
    grid = _require("experiment", exp, "grid")
    if not isinstance(grid, list):
        raise ValidationError("experiment.grid must be a list")
    grid = [_float("experiment", "grid", g) for g in grid]
    mode = exp["mode"]
    stochastic = not (kind == "shift" and mode == "exact")
    seed = require_seed(exp, "experiment", seed_flag) if stochastic else check_seed(exp.get("seed") or 0)
    phi = roof = None
    if kind == "shift":
        phi = build_observable(cfg, psi.L)
    elif kind == "flow":
        roof = build_roof(cfg, psi.L)
        phi = build_flow_observable(cfg, psi.L)
    elif kind == "lap":
        roof = build_roof(cfg, psi.L)
    else:
        raise ValidationError(f"unknown experiment kind {kind!r}")
    workers = workers_flag if workers_flag is not None else exp.get("workers")
    return ExperimentConfig(
        psi=psi,
        phi=phi,
        roof=roof,
        eps=_float("experiment", "epsilon", exp["epsilon"]),
        grid=grid,
        samples=_int("experiment", "samples", exp["samples"], 1),
        seed=seed,
        mode=mode,
        xi=_float("experiment", "xi", exp["xi"]),
        a=_float("experiment", "a", exp["a"]),
        zeta=None if exp["zeta"] is None else _float("experiment", "zeta", exp["zeta"]),
        xi_lap=_float("experiment", "xi_lap", exp["xi_lap"]),
        omega=_float("experiment", "omega", exp["omega"]),
        estimator=exp["estimator"],
        block_size=_int("experiment", "block_size", exp["block_size"], 1),
        workers=None if workers is None else _int("experiment", "workers", workers, 1),
        min_ess=_float("experiment", "min_ess", exp["min_ess"]),
        confidence=_float("experiment", "confidence", exp["confidence"]),
        exact_budget=_int("experiment", "exact_budget", exp["exact_budget"], 1),
    )

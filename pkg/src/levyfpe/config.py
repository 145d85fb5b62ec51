"""Scenario files: parsing, validation and construction of run objects.

A scenario is a TOML (or JSON) document with these sections::

    name = "example1_ito"           # required
    T = 0.3                         # horizon, required
    checkpoints = [0.1, 0.3]        # optional output times in (0, T]

    [model]
    preset = "example1"             # example1 | example2 | example3, or give f/sigma/measure
    f = "x"                         # expression in x, t (see levyfpe.expr)
    sigma = "x"
    convention = "ito"              # ito | marcus

    [model.triplet]
    b = 0.0
    A = 1.0
    measure = "dirac"               # null | dirac | gaussian | stable
    lambda = 1.0                    # dirac, gaussian
    alpha = 1.5                     # stable
    c_alpha = 1.0                   # stable

    [grid]
    x_min = 0.01
    x_max = 32.0
    n = 2048

    [initial]
    kind = "gaussian"               # gaussian (mean, sd) | point-approx (x0, sd)
    mean = 1.0
    sd = 0.1

    [solver]
    dt = 1e-3
    scheme = "imex"                 # imex | rk4
    policy = "pushforward"          # pushforward | integral | series
    K = 8                           # series order
    renormalize = false
    marcus_ny = 2048                # optional, Lamperti-grid size for Marcus runs
    base_point = 1.0                # optional, Lamperti base point

    [mc]
    N = 100000
    dt = 1e-3
    eps = 0.1
    seed = 12345

    [compare]
    tolerance = 0.05
    reference = "lognormal"         # optional closed-form check (f = x, sigma = x, no jumps)

    [outputs]
    directory = "out"

Unknown keys are errors.  Presets fix ``f = sigma = x`` and the measure
family; for them only ``lambda``, ``alpha`` and ``c_alpha`` may be given.
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .expr import ExpressionError, parse_expression
from .fpe_solver import Scheme, SolverConfig
from .generator import IntegralAdditive, Pushforward, Series
from .grid import GridFunction, GridSpec, trapezoid_weights
from .levy_core import (DiracAtOne, GaussianCompoundPoisson, InvalidParameter, LevyTriplet,
                        NullMeasure, SymmetricAlphaStable)
from .model import Convention, SdeModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "PRESETS"]


class ConfigError(ValueError):
    """Malformed scenario; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


PRESETS = {
    "example1": {"measure": "dirac", "b": 0.0, "A": 1.0, "lambda": 1.0},
    "example2": {"measure": "gaussian", "b": 0.0, "A": 0.0, "lambda": 1.0},
    "example3": {"measure": "stable", "b": 1.0, "A": 0.0, "alpha": 1.5, "c_alpha": 1.0},
}
_MEASURE_KEYS = {"null": set(), "dirac": {"lambda"}, "gaussian": {"lambda"},
                 "stable": {"alpha", "c_alpha"}}
_POLICIES = {"pushforward", "integral", "series"}
_REQUIRED = object()


@dataclass(frozen=True)
class ModelSection:
    f: str
    sigma: str
    convention: str
    preset: Optional[str]
    b: float
    A: float
    measure: str
    lam: Optional[float] = None
    alpha: Optional[float] = None
    c_alpha: Optional[float] = None


@dataclass(frozen=True)
class InitialSection:
    kind: str
    center: float
    sd: float


@dataclass(frozen=True)
class SolverSection:
    dt: float
    scheme: str = "imex"
    policy: str = "pushforward"
    K: int = 8
    renormalize: bool = False
    marcus_ny: Optional[int] = None
    base_point: Optional[float] = None


@dataclass(frozen=True)
class McSection:
    N: int = 100_000
    dt: float = 1e-3
    eps: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    T: float
    model: ModelSection
    grid: GridSpec
    initial: InitialSection
    solver: SolverSection
    mc: McSection
    checkpoints: Optional[tuple] = None
    tolerance: float = 0.05
    reference: Optional[str] = None
    output_dir: str = "out"
    source: Optional[str] = field(default=None, compare=False)

    # -- construction of run objects ---------------------------------------

    def triplet(self) -> LevyTriplet:
        m = self.model
        nu = {"null": lambda: NullMeasure(),
              "dirac": lambda: DiracAtOne(m.lam),
              "gaussian": lambda: GaussianCompoundPoisson(m.lam),
              "stable": lambda: SymmetricAlphaStable(m.alpha, m.c_alpha)}[m.measure]()
        return LevyTriplet(m.b, m.A, nu)

    def sde_model(self) -> SdeModel:
        f = parse_expression(self.model.f)
        s = parse_expression(self.model.sigma)
        return SdeModel(f, s, self.triplet(), Convention(self.model.convention),
                        autonomous=not (f.uses_t or s.uses_t), sigma_constant=s.constant)

    def times(self) -> tuple:
        return tuple(self.checkpoints) if self.checkpoints else (self.T,)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        policy = {"pushforward": Pushforward(), "integral": IntegralAdditive()}.get(s.policy)
        if policy is None:
            policy = Series(s.K)
        return SolverConfig(dt=s.dt, scheme=Scheme(s.scheme), policy=policy,
                            renormalize=s.renormalize, checkpoints=self.times())

    def initial_density(self, spec: Optional[GridSpec] = None) -> GridFunction:
        spec = spec or self.grid
        c, sd = self.initial.center, self.initial.sd
        v = np.exp(-0.5 * ((spec.nodes - c) / sd) ** 2)
        total = float(trapezoid_weights(spec) @ v)
        if not total > 0:
            raise ConfigError("initial", "initial density has no mass on the grid")
        return GridFunction(spec, v / total)

    def initial_sampler(self):
        c, sd = self.initial.center, self.initial.sd
        return lambda rng, n: c + sd * rng.standard_normal(n)

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        m = self.model
        if m.preset:
            model = {"preset": m.preset, "convention": m.convention, "triplet": {}}
            for key in _MEASURE_KEYS[m.measure]:
                model["triplet"][key] = getattr(m, "lam" if key == "lambda" else key)
        else:
            tri = {"b": m.b, "A": m.A, "measure": m.measure}
            for key in sorted(_MEASURE_KEYS[m.measure]):
                tri[key] = getattr(m, "lam" if key == "lambda" else key)
            model = {"f": m.f, "sigma": m.sigma, "convention": m.convention, "triplet": tri}
        init = {"kind": self.initial.kind, "sd": self.initial.sd}
        init["mean" if self.initial.kind == "gaussian" else "x0"] = self.initial.center
        solver = {k: v for k, v in asdict(self.solver).items() if v is not None}
        out = {"name": self.name, "T": self.T, "model": model,
               "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max, "n": self.grid.n},
               "initial": init, "solver": solver, "mc": asdict(self.mc),
               "compare": {"tolerance": self.tolerance}, "outputs": {"directory": self.output_dir}}
        if self.reference:
            out["compare"]["reference"] = self.reference
        if self.checkpoints:
            out["checkpoints"] = list(self.checkpoints)
        return out


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _take(data: dict, path: str, schema: dict) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a table")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}".lstrip("."), "unknown key")
    out = {}
    for key, (kind, default) in schema.items():
        where = f"{path}.{key}".lstrip(".")
        if key not in data:
            if default is _REQUIRED:
                raise ConfigError(where, "missing required key")
            out[key] = default
            continue
        out[key] = _coerce(data[key], kind, where)
    return out


def _coerce(value, kind, where):
    if kind == "table":
        if not isinstance(value, dict):
            raise ConfigError(where, "expected a table")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(where, "must be finite")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(where, f"expected true/false, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(where, f"expected a string, got {value!r}")
        return value
    if kind == "expr":
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            raise ConfigError(where, f"expected an expression string, got {value!r}")
        return value if isinstance(value, str) else repr(float(value))
    if kind == "floats":
        if not isinstance(value, list) or not value:
            raise ConfigError(where, "expected a non-empty list of numbers")
        return tuple(_coerce(v, float, f"{where}[{i}]") for i, v in enumerate(value))
    raise AssertionError(kind)


def _positive(value, where, strict=True):
    if value is None:
        return
    if (strict and not value > 0) or (not strict and value < 0):
        raise ConfigError(where, f"must be {'> 0' if strict else '>= 0'}, got {value!r}")


def _parse_model(data) -> ModelSection:
    raw = _take(data, "model", {"preset": (str, None), "f": ("expr", None), "sigma": ("expr", None),
                                "convention": (str, "ito"), "triplet": ("table", {})})
    conv = raw["convention"]
    if conv not in ("ito", "marcus"):
        raise ConfigError("model.convention", f"expected 'ito' or 'marcus', got {conv!r}")
    tri_schema = {"b": (float, None), "A": (float, None), "measure": (str, None),
                  "lambda": (float, None), "alpha": (float, None), "c_alpha": (float, None)}
    tri = _take(raw["triplet"], "model.triplet", tri_schema)
    preset = raw["preset"]
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("model.preset", f"unknown preset {preset!r} "
                              f"(expected one of {', '.join(PRESETS)})")
        for key in ("f", "sigma"):
            if raw[key] is not None:
                raise ConfigError(f"model.{key}", f"preset {preset} fixes f = sigma = x")
        for key in ("b", "A", "measure"):
            if tri[key] is not None:
                raise ConfigError(f"model.triplet.{key}", f"preset {preset} fixes {key}")
        base = PRESETS[preset]
        f = sigma = "x"
        measure = base["measure"]
        values = {k: (tri[k] if tri[k] is not None else base.get(k)) for k in tri_schema}
    else:
        for key in ("f", "sigma"):
            if raw[key] is None:
                raise ConfigError(f"model.{key}", "missing required key (or give a preset)")
        f, sigma = raw["f"], raw["sigma"]
        measure = tri["measure"] or "null"
        values = dict(tri)
        values["b"] = 0.0 if tri["b"] is None else tri["b"]
        values["A"] = 0.0 if tri["A"] is None else tri["A"]
    if measure not in _MEASURE_KEYS:
        raise ConfigError("model.triplet.measure", f"unknown measure {measure!r} "
                          f"(expected one of {', '.join(_MEASURE_KEYS)})")
    allowed = _MEASURE_KEYS[measure]
    for key in ("lambda", "alpha", "c_alpha"):
        if key not in allowed and tri[key] is not None:
            raise ConfigError(f"model.triplet.{key}", f"not a parameter of the {measure} measure")
        if key in allowed and values[key] is None:
            raise ConfigError(f"model.triplet.{key}", f"required by the {measure} measure")
    for key in ("f", "sigma"):
        try:
            parse_expression(f if key == "f" else sigma)
        except ExpressionError as exc:
            raise ConfigError(f"model.{key}", str(exc)) from None
    return ModelSection(f, sigma, conv, preset, values["b"], values["A"], measure,
                        values["lambda"], values["alpha"], values["c_alpha"])


def parse_config(data: dict, source: Optional[str] = None) -> ScenarioConfig:
    """Validate a decoded scenario document."""
    top = _take(data, "", {"name": (str, _REQUIRED), "T": (float, _REQUIRED),
                           "checkpoints": ("floats", None), "model": ("table", _REQUIRED),
                           "grid": ("table", _REQUIRED), "initial": ("table", _REQUIRED),
                           "solver": ("table", _REQUIRED), "mc": ("table", {}),
                           "compare": ("table", {}), "outputs": ("table", {})})
    _positive(top["T"], "T")
    if top["checkpoints"]:
        for i, c in enumerate(top["checkpoints"]):
            if not 0 < c <= top["T"]:
                raise ConfigError(f"checkpoints[{i}]", f"must lie in (0, T], got {c}")
    model = _parse_model(top["model"])

    g = _take(top["grid"], "grid", {"x_min": (float, _REQUIRED), "x_max": (float, _REQUIRED),
                                    "n": (int, _REQUIRED)})
    try:
        grid = GridSpec(g["x_min"], g["x_max"], g["n"])
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None

    ini = _take(top["initial"], "initial", {"kind": (str, _REQUIRED), "mean": (float, None),
                                            "x0": (float, None), "sd": (float, _REQUIRED)})
    if ini["kind"] == "gaussian":
        centre_key, other = "mean", "x0"
    elif ini["kind"] == "point-approx":
        centre_key, other = "x0", "mean"
    else:
        raise ConfigError("initial.kind", f"expected 'gaussian' or 'point-approx', got {ini['kind']!r}")
    if ini[centre_key] is None:
        raise ConfigError(f"initial.{centre_key}", f"required for kind {ini['kind']!r}")
    if ini[other] is not None:
        raise ConfigError(f"initial.{other}", f"not used by kind {ini['kind']!r}")
    _positive(ini["sd"], "initial.sd")
    initial = InitialSection(ini["kind"], ini[centre_key], ini["sd"])

    s = _take(top["solver"], "solver", {"dt": (float, _REQUIRED), "scheme": (str, "imex"),
                                        "policy": (str, "pushforward"), "K": (int, 8),
                                        "renormalize": (bool, False), "marcus_ny": (int, None),
                                        "base_point": (float, None)})
    _positive(s["dt"], "solver.dt")
    if s["scheme"] not in ("imex", "rk4"):
        raise ConfigError("solver.scheme", f"expected 'imex' or 'rk4', got {s['scheme']!r}")
    if s["policy"] not in _POLICIES:
        raise ConfigError("solver.policy", f"expected one of {', '.join(sorted(_POLICIES))}, "
                          f"got {s['policy']!r}")
    if not 1 <= s["K"] <= 12:
        raise ConfigError("solver.K", f"series order must lie in 1..12, got {s['K']}")
    if s["marcus_ny"] is not None and s["marcus_ny"] < 16:
        raise ConfigError("solver.marcus_ny", "must be >= 16")
    solver = SolverSection(**s)

    mc = _take(top["mc"], "mc", {"N": (int, 100_000), "dt": (float, 1e-3), "eps": (float, 0.1),
                                 "seed": (int, 0)})
    _positive(mc["N"], "mc.N")
    _positive(mc["dt"], "mc.dt")
    if not 0 < mc["eps"] <= 1:
        raise ConfigError("mc.eps", f"must lie in (0, 1], got {mc['eps']}")
    if mc["seed"] < 0:
        raise ConfigError("mc.seed", "must be a non-negative integer")

    cmp_ = _take(top["compare"], "compare", {"tolerance": (float, 0.05), "reference": (str, None)})
    _positive(cmp_["tolerance"], "compare.tolerance")
    if cmp_["reference"] not in (None, "lognormal"):
        raise ConfigError("compare.reference", f"unknown reference {cmp_['reference']!r}")
    out = _take(top["outputs"], "outputs", {"directory": (str, "out")})

    cfg = ScenarioConfig(top["name"], top["T"], model, grid, initial, solver, McSection(**mc),
                         top["checkpoints"], cmp_["tolerance"], cmp_["reference"],
                         out["directory"], source)
    try:
        cfg.triplet()
    except InvalidParameter as exc:
        raise ConfigError("model.triplet", str(exc)) from None
    return cfg


def load_config(path) -> ScenarioConfig:
    """Read a scenario from a ``.toml`` or ``.json`` file.

    A JSON run summary (an object with a ``"scenario"`` key) is accepted too.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if isinstance(data, dict) and "scenario" in data:
            data = data["scenario"]
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("", f"{path}: {exc}") from None
    return parse_config(data, str(path))

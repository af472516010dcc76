"""YAML experiment configuration with line-precise validation errors.

A config is a mapping; every key is optional and falls back to the values
in :data:`DEFAULTS`. The resolved config (defaults filled in) is echoed into
every output, and its hash identifies the run.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import yaml

from . import fields
from .assembly import ARITHMETIC, HARMONIC
from .fields import GaussianFieldSpec, PiecewiseConstantSpec
from .problems import CGV, MODEL_PROBLEM_1, MODEL_PROBLEM_2, STANDARD, DarcyProblem
from .qoi import Box
from .solver import IDENTITY, MULTIGRID, SGS

DEFAULTS = {
    "problem": MODEL_PROBLEM_2,
    "dimension": 2,
    "permeability": {
        "model": fields.PIECEWISE_CONSTANT,
        "averaging": HARMONIC,
        # piecewise constant
        "mu": [0.0, 0.0, 0.0],
        "sigma2": [1.0, 1.0, 1.0],
        # piecewise correlated, top to bottom
        "layers": [
            {"mu": 0.0, "sigma2": 1.0, "lambda": 0.3, "norm": 2},
            {"mu": 4.0, "sigma2": 1.0, "lambda": 0.1, "norm": 2},
            {"mu": 0.0, "sigma2": 1.0, "lambda": 0.3, "norm": 2},
        ],
        # stationary log-normal
        "field": {"mu": 0.0, "sigma2": 1.0, "lambda": 0.3, "norm": 1},
    },
    "grid": {"m0": 8, "s": 2, "L": 3},
    "reference_level": 4,
    "box": {"centre": None, "side": 0.25},  # centre defaults to the domain centre
    "samples": 1000,
    "eps": [0.01],
    "coupling": STANDARD,
    "compare_mc": False,
    "mlmc": {"warmup": 100, "L_min": 3, "L_max": 6, "alpha": None, "beta": None},
    "solver": {"method": MULTIGRID, "tol": 1e-10, "max_iter": 500, "sweeps": 2},
    "bench": {"sizes": [16, 32, 64, 128], "systems": 100},
    "dump_field": False,
    "seed": 0,
    "output": "out",
}


class ConfigError(ValueError):
    pass


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _line_index(node, path=(), out=None):
    """Map key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            p = path + (key.value,)
            out[p] = key.start_mark.line + 1
            _line_index(value, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            p = path + (i,)
            out[p] = value.start_mark.line + 1
            _line_index(value, p, out)
    return out


class _Checker:
    def __init__(self, source, lines):
        self.source = source
        self.lines = lines

    def fail(self, path, message):
        line = None
        for n in range(len(path), 0, -1):
            line = self.lines.get(tuple(path[:n]))
            if line is not None:
                break
        where = f"{self.source}:{line}" if line else self.source
        key = ".".join(str(p) for p in path)
        raise ConfigError(f"{where}: {key}: {message}")

    def number(self, cfg, path, positive=False, nonneg=False, integer=False, minimum=None):
        v = _get(cfg, path)
        kind = int if integer else (int, float)
        if isinstance(v, bool) or not isinstance(v, kind):
            self.fail(path, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
        if positive and v <= 0:
            self.fail(path, f"must be positive, got {v}")
        if nonneg and v < 0:
            self.fail(path, f"must be non-negative, got {v}")
        if minimum is not None and v < minimum:
            self.fail(path, f"must be at least {minimum}, got {v}")
        return v

    def choice(self, cfg, path, options):
        v = _get(cfg, path)
        if v not in options:
            self.fail(path, f"must be one of {', '.join(map(str, options))}; got {v!r}")
        return v


def _get(cfg, path):
    for p in path:
        cfg = cfg[p]
    return cfg


def _check_gaussian(c: _Checker, cfg, path):
    spec = _get(cfg, path)
    if not isinstance(spec, dict):
        c.fail(path, "expected a mapping with mu, sigma2, lambda, norm")
    unknown = set(spec) - {"mu", "sigma2", "lambda", "norm"}
    if unknown:
        c.fail(path + (sorted(unknown)[0],), "unknown key")
    c.number(cfg, path + ("mu",))
    c.number(cfg, path + ("sigma2",), nonneg=True)
    c.number(cfg, path + ("lambda",), positive=True)
    c.choice(cfg, path + ("norm",), (1, 2))


def _check_keys(c, cfg, defaults, path=()):
    for k, v in _get(cfg, path).items() if path else cfg.items():
        if k not in defaults:
            c.fail(path + (k,), "unknown key")
        if isinstance(defaults[k], dict):
            if not isinstance(v, dict):
                c.fail(path + (k,), "expected a mapping")
            _check_keys(c, cfg, defaults[k], path + (k,))


def validate(cfg: dict, c: _Checker):
    c.choice(cfg, ("problem",), (MODEL_PROBLEM_1, MODEL_PROBLEM_2))
    d = c.choice(cfg, ("dimension",), (1, 2, 3))
    model = c.choice(cfg, ("permeability", "model"), (fields.PIECEWISE_CONSTANT, fields.PIECEWISE_CORRELATED, fields.LOGNORMAL))
    c.choice(cfg, ("permeability", "averaging"), (HARMONIC, ARITHMETIC))
    perm = cfg["permeability"]
    if model == fields.PIECEWISE_CONSTANT:
        for key in ("mu", "sigma2"):
            if not isinstance(perm[key], list) or len(perm[key]) != 3:
                c.fail(("permeability", key), "expected a list of three numbers")
            for i in range(3):
                c.number(cfg, ("permeability", key, i), nonneg=key == "sigma2")
    elif model == fields.PIECEWISE_CORRELATED:
        if not isinstance(perm["layers"], list) or len(perm["layers"]) != 3:
            c.fail(("permeability", "layers"), "expected three layer specs")
        for i in range(3):
            _check_gaussian(c, cfg, ("permeability", "layers", i))
    else:
        _check_gaussian(c, cfg, ("permeability", "field"))
    m0 = c.number(cfg, ("grid", "m0"), integer=True, minimum=2)
    s = c.number(cfg, ("grid", "s"), integer=True, minimum=2)
    L = c.number(cfg, ("grid", "L"), integer=True, nonneg=True)
    ref = c.number(cfg, ("reference_level",), integer=True, nonneg=True)
    if ref <= L:
        c.fail(("reference_level",), f"must be finer than the finest study level L={L}")
    c.number(cfg, ("samples",), integer=True, minimum=2)
    eps = cfg["eps"]
    if isinstance(eps, (int, float)) and not isinstance(eps, bool):
        cfg["eps"] = [eps]
    if not isinstance(cfg["eps"], list) or not cfg["eps"]:
        c.fail(("eps",), "expected a number or a list of numbers")
    for i in range(len(cfg["eps"])):
        c.number(cfg, ("eps", i), positive=True)
    c.choice(cfg, ("coupling",), (STANDARD, CGV))
    if cfg["coupling"] == CGV:
        if model != fields.LOGNORMAL:
            c.fail(("coupling",), "CGV requires stationary permeability (model lognormal)")
        if s != 2:
            c.fail(("grid", "s"), "CGV needs refinement factor 2")
    c.choice(cfg, ("compare_mc",), (True, False))
    c.choice(cfg, ("dump_field",), (True, False))
    c.number(cfg, ("mlmc", "warmup"), integer=True, minimum=2)
    lmin = c.number(cfg, ("mlmc", "L_min"), integer=True, nonneg=True)
    lmax = c.number(cfg, ("mlmc", "L_max"), integer=True, nonneg=True)
    if lmax < lmin:
        c.fail(("mlmc", "L_max"), "must not be below L_min")
    for key in ("alpha", "beta"):
        if cfg["mlmc"][key] is not None:
            c.number(cfg, ("mlmc", key), positive=True)
    c.choice(cfg, ("solver", "method"), (MULTIGRID, SGS, IDENTITY, "direct"))
    c.number(cfg, ("solver", "tol"), positive=True)
    c.number(cfg, ("solver", "max_iter"), integer=True, minimum=1)
    c.number(cfg, ("solver", "sweeps"), integer=True, minimum=1)
    sizes = cfg["bench"]["sizes"]
    if not isinstance(sizes, list) or not sizes:
        c.fail(("bench", "sizes"), "expected a list of grid sizes")
    for i in range(len(sizes)):
        c.number(cfg, ("bench", "sizes", i), integer=True, minimum=2)
    c.number(cfg, ("bench", "systems"), integer=True, minimum=1)
    seed = c.number(cfg, ("seed",), integer=True, nonneg=True)
    if seed >= 2**64:
        c.fail(("seed",), "must fit in 64 bits")
    if not isinstance(cfg["output"], str):
        c.fail(("output",), "expected a path")
    if cfg["problem"] == MODEL_PROBLEM_1:
        _check_box(c, cfg, d, m0)
    return cfg


def _check_box(c: _Checker, cfg, d, m0):
    side = c.number(cfg, ("box", "side"), positive=True)
    centre = cfg["box"]["centre"]
    if not isinstance(centre, list) or len(centre) != d:
        c.fail(("box", "centre"), f"expected {d} coordinates")
    for i in range(d):
        c.number(cfg, ("box", "centre", i))
    lo = [x - side / 2 for x in centre]
    hi = [x + side / 2 for x in centre]
    if min(lo) < 0 or max(hi) > 1:
        c.fail(("box",), "averaging box must lie inside the unit cube")
    for x in lo + hi:
        if abs(x * m0 - round(x * m0)) > 1e-9:
            c.fail(("box",), f"box faces must lie on grid lines of the coarsest grid (m0={m0})")


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict
    source: str = "<config>"

    @classmethod
    def from_dict(cls, raw: dict | None, source="<config>", lines=None) -> "ExperimentConfig":
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: top level must be a mapping")
        checker = _Checker(source, lines or {})
        _check_keys(checker, raw, DEFAULTS)
        cfg = _merge(DEFAULTS, raw)
        if cfg["box"]["centre"] is None and isinstance(cfg["dimension"], int):
            cfg["box"]["centre"] = [0.5] * cfg["dimension"]
        return cls(validate(cfg, checker), source)

    @classmethod
    def from_yaml(cls, text: str, source="<config>") -> "ExperimentConfig":
        try:
            node = yaml.compose(text)
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{source}:{mark.line + 1}" if mark else source
            raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
        return cls.from_dict(raw, source, _line_index(node) if node is not None else {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_yaml(fh.read(), str(path))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        for k, v in kw.items():
            if v is not None:
                data[k] = v
        return ExperimentConfig.from_dict(data, self.source)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def problem(self) -> DarcyProblem:
        cfg = self.data
        perm = cfg["permeability"]
        g = lambda s: GaussianFieldSpec(float(s["mu"]), float(s["sigma2"]), float(s["lambda"]), int(s["norm"]))
        box = None
        if cfg["problem"] == MODEL_PROBLEM_1:
            box = Box(tuple(float(x) for x in cfg["box"]["centre"]), float(cfg["box"]["side"]))
        return DarcyProblem(
            d=cfg["dimension"],
            problem=cfg["problem"],
            model=perm["model"],
            m0=cfg["grid"]["m0"],
            s=cfg["grid"]["s"],
            piecewise=PiecewiseConstantSpec(tuple(map(float, perm["mu"])), tuple(map(float, perm["sigma2"]))),
            layer_specs=tuple(g(s) for s in perm["layers"]),
            field_spec=g(perm["field"]),
            box=box,
            averaging=perm["averaging"],
            solver=cfg["solver"]["method"],
            tol=float(cfg["solver"]["tol"]),
            max_iter=cfg["solver"]["max_iter"],
            sweeps=cfg["solver"]["sweeps"],
        )

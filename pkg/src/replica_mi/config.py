"""Run configuration: flat ``key = value`` text.

::

    # comment
    command = replica
    prior = gauss_bernoulli
    prior.rho = 1.0
    prior.sparsity = 0.1
    ensemble = gaussian_product
    ensemble.factors = 2
    lambda_grid = [0.5, 1.0, 2.0]
    tolerance.mp_residual = 0.05

Lists are bracketed and comma separated.  Strings are bare (no ``#``).
``prior`` and ``ensemble`` are required; everything else has a default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import InvalidArgument
from .interp import InterpPath, load_path_table
from .potential import FORMULATIONS
from .prior import Prior, gauss_hermite
from .spectra import Ensemble

COMMANDS = ("replica", "spectrum", "oracle", "interp", "selftest")
CHECKS = ("none", "boundary", "derivative")
SPECTRUM_SOURCES = ("limit", "sampled")
REQUIRED = ("prior", "ensemble")


class ConfigError(InvalidArgument):
    """Config problem; ``line`` is set whenever the offending key is known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.message, self.line, self.key = message, line, key
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RunConfig:
    prior: str
    ensemble: str
    command: str = "replica"
    prior_rho: float = 1.0
    prior_sparsity: float = 1.0
    prior_atoms: tuple[float, ...] = ()
    prior_weights: tuple[float, ...] = ()
    ensemble_factors: int = 1
    ensemble_entries: str = "gaussian"
    ensemble_spectrum_file: str = ""
    n: int = 8
    m: int = 4
    n_grid: tuple[int, ...] = ()
    lambda_grid: tuple[float, ...] = (1.0,)
    trials: int = 200
    master_seed: int = 0
    output_path: str = "out.csv"
    formulation: str = "inf_sup"
    spectrum_source: str = "limit"
    realizations: int = 1
    u_grid: tuple[float, ...] = (0.1, 0.3, 0.7, 1.5)
    quad_order: int = 0
    t: float = 0.5
    eps1: float = 0.1
    eps2: float = 0.1
    r_bar: float = 0.5
    E_bar: float = 0.5
    path_r_file: str = ""
    path_E_file: str = ""
    check: str = "none"
    h: float = 1e-3
    quick: bool = False
    tolerances: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        _validate(self)

    # derived objects ------------------------------------------------------
    def make_prior(self) -> Prior:
        if self.prior == "gaussian":
            return Prior.gaussian(self.prior_rho)
        if self.prior == "rademacher":
            return Prior.rademacher()
        if self.prior == "gauss_bernoulli":
            return Prior.gauss_bernoulli(self.prior_rho, self.prior_sparsity)
        if self.prior == "discrete":
            return Prior.discrete(self.prior_atoms, self.prior_weights)
        raise InvalidArgument(f"unknown prior kind {self.prior!r}")

    def make_ensemble(self, n: int | None = None) -> Ensemble:
        ens = Ensemble(
            self.ensemble, self.m, self.n, self.ensemble_factors, self.ensemble_entries,
            self.ensemble_spectrum_file or None,
        )
        return ens if n is None or n == self.n else ens.resized(n)

    def make_quad(self):
        return gauss_hermite(self.quad_order) if self.quad_order else None

    def make_path(self) -> InterpPath:
        eps = (self.eps1, self.eps2)
        if self.path_r_file:
            return InterpPath.from_tables(
                load_path_table(self.path_r_file), load_path_table(self.path_E_file), eps
            )
        return InterpPath.constant(self.r_bar, self.E_bar, eps)

    def header(self) -> dict[str, str]:
        return {key: value for key, value in _items(self)}


_FIELDS = {f.name: f for f in fields(RunConfig)}
# text key -> attribute; dotted keys map onto flattened attribute names
_KEYS = {name.replace("prior_", "prior.", 1).replace("ensemble_", "ensemble.", 1): name
         for name in _FIELDS if name != "tolerances"}
_ATTR_TO_KEY = {v: k for k, v in _KEYS.items()}


def _kind(name: str) -> str:
    ann = str(_FIELDS[name].type)
    if ann.startswith("tuple[float"):
        return "floats"
    if ann.startswith("tuple[int"):
        return "ints"
    return ann


def _parse_scalar(kind: str, text: str):
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("non-finite number")
        return v
    if kind == "int":
        return int(text)
    if kind == "bool":
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError("expected true or false")
        return low == "true"
    return text


def _parse_value(name: str, text: str):
    kind = _kind(name)
    if kind in ("floats", "ints"):
        if not (text.startswith("[") and text.endswith("]")):
            raise ValueError("expected a bracketed list")
        body = text[1:-1].strip()
        items = [p.strip() for p in body.split(",")] if body else []
        if any(not p for p in items):
            raise ValueError("empty list element")
        return tuple(_parse_scalar("float" if kind == "floats" else "int", p) for p in items)
    return _parse_scalar(kind, text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def _items(cfg: RunConfig):
    for name in _FIELDS:
        if name == "tolerances":
            for key in sorted(cfg.tolerances):
                yield f"tolerance.{key}", _format_value(cfg.tolerances[key])
        else:
            yield _ATTR_TO_KEY[name], _format_value(getattr(cfg, name))


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in _items(cfg))


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    tolerances: dict[str, float] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key in lines:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        lines[key] = lineno
        if not val:
            if key in _KEYS and _kind(_KEYS[key]) == "str" and key not in REQUIRED:
                values[_KEYS[key]] = ""
                continue
            raise ConfigError(f"missing value for {key!r}", lineno)
        try:
            if key.startswith("tolerance."):
                name = key[len("tolerance."):]
                if not name.isidentifier():
                    raise ValueError(f"bad tolerance name {name!r}")
                tolerances[name] = _parse_scalar("float", val)
            elif key in _KEYS:
                values[_KEYS[key]] = _parse_value(_KEYS[key], val)
            else:
                raise ConfigError(f"unknown key {key!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed value for {key!r}: {exc}", lineno) from None
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    try:
        return RunConfig(tolerances=tolerances, **values)
    except ConfigError as exc:
        raise ConfigError(exc.message, lines.get(exc.key), exc.key) from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})


def _fail(attr: str, message: str):
    raise ConfigError(message, key=_ATTR_TO_KEY.get(attr, attr))


def _validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        _fail("command", f"command must be one of {COMMANDS}")
    if cfg.formulation not in FORMULATIONS:
        _fail("formulation", f"formulation must be one of {FORMULATIONS}")
    if cfg.check not in CHECKS:
        _fail("check", f"check must be one of {CHECKS}")
    if cfg.spectrum_source not in SPECTRUM_SOURCES:
        _fail("spectrum_source", f"spectrum_source must be one of {SPECTRUM_SOURCES}")
    if not cfg.lambda_grid:
        _fail("lambda_grid", "lambda_grid must not be empty")
    if list(cfg.lambda_grid) != sorted(cfg.lambda_grid):
        _fail("lambda_grid", "lambda_grid must be sorted ascending")
    if any(v < 0 for v in cfg.lambda_grid):
        _fail("lambda_grid", "lambda values must be >= 0")
    if any(v < 1 for v in cfg.n_grid):
        _fail("n_grid", "n_grid entries must be >= 1")
    for name in ("trials", "realizations", "n", "m"):
        if getattr(cfg, name) < 1:
            _fail(name, f"{name} must be >= 1")
    if cfg.quad_order < 0:
        _fail("quad_order", "quad_order must be >= 0")
    if not 0.0 <= cfg.t <= 1.0:
        _fail("t", "t must lie in [0, 1]")
    for name in ("eps1", "eps2", "r_bar", "E_bar"):
        if getattr(cfg, name) < 0:
            _fail(name, f"{name} must be >= 0")
    if not cfg.h > 0:
        _fail("h", "h must be > 0")
    if any(v < 0 for v in cfg.u_grid):
        _fail("u_grid", "u_grid entries must be >= 0")
    if bool(cfg.path_r_file) != bool(cfg.path_E_file):
        _fail("path_r_file", "path_r_file and path_E_file go together")
    for name, value in cfg.tolerances.items():
        if not value > 0:
            raise ConfigError(f"tolerance {name!r} must be > 0", key=f"tolerance.{name}")
    for attr in _FIELDS:
        value = getattr(cfg, attr)
        if isinstance(value, str) and ("#" in value or "\n" in value or value != value.strip()):
            _fail(attr, f"{attr} may not contain '#', newlines or surrounding blanks")
    try:
        cfg.make_prior()
    except InvalidArgument as exc:
        _fail("prior", f"invalid prior: {exc}")
    try:
        cfg.make_ensemble()
    except InvalidArgument as exc:
        _fail("ensemble", f"invalid ensemble: {exc}")

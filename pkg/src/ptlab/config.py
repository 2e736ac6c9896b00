"""Experiment configuration in INI form with strict schema validation.

Example::

    [model]
    kind = nnn
    size = 1024

    [window]
    E0 = 2.0
    Delta = 0.2
    kappa0 = 1.25
    c0 = 0.1

Every key has a default; unknown sections or keys are rejected.  Floats are
written with ``repr`` so that ``parse(dump(cfg)) == cfg``.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, fields

import numpy as np

from .models import ENTRY_LAWS, SYMMETRY_CLASSES, EnergyWindow, WignerSpec

ENERGY_FUNCTIONS = {
    "cos": np.cos,
    "sin": np.sin,
    "identity": lambda x: np.asarray(x, dtype=float),
    "tanh": lambda x: np.tanh(np.asarray(x, dtype=float) - 2.0),
    "gaussian": lambda x: np.exp(-((np.asarray(x, dtype=float) - 2.0) ** 2)),
    "one": lambda x: np.ones_like(np.asarray(x, dtype=float)),
}
MODEL_KINDS = ("nnn", "free-fermion", "custom")
STATE_KINDS = ("eigenprojector", "uniform-mixture", "gaussian-weighted")
OBSERVABLE_KINDS = ("odd-sublattice", "energy-function", "random-hermitian", "sector-complement")
RHO0_SOURCES = ("analytic", "estimated")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    # [model]
    model: str = "nnn"
    size: int = 1024
    path: str = ""
    # [window]
    E0: float = 2.0
    Delta: float = 0.2
    kappa0: float = 1.25
    c0: float = 0.1
    # [coupling]
    lam: float = 0.05
    symmetry_class: str = "complex-hermitian"
    entry_law: str = "gaussian"
    # [time]
    T_min: float = 0.01
    T_max: float = 8.0
    points: int = 80
    reference_lambda: float = 0.05
    # [state]
    state_kind: str = "eigenprojector"
    state_index: int = -1
    state_width: float = 0.1
    state_sector: str = "even"
    # [observable]
    observable_kind: str = "odd-sublattice"
    observable_function: str = "cos"
    observable_seed: int = 0
    observable_n: int = 0
    # [run]
    n_realizations: int = 5
    master_seed: int = 0
    output: str = "out"
    rho0_source: str = "analytic"
    # [checks]
    pre_range: tuple = (0.02, 0.2)
    late_range: tuple = (4.0, 8.0)
    pre_tol: float = 0.05
    late_tol: float = 0.1
    gap_threshold: float = 0.1
    plateau_checks: bool = True
    rhs_check: bool = False
    rhs_range: tuple = (0.2, 5.0)
    rhs_tol: float = 0.05
    rate_check: bool = True
    rate_range: tuple = (0.5, 3.0)
    rate_tol: float = 0.15
    # [lawcheck]
    sizes: tuple = (128, 256, 512, 1024)
    seeds: int = 50
    z1: complex = complex(2.0, 1.0)
    z2: complex = complex(2.0, -1.0)
    epsilon: float = 0.2
    slope_range: tuple = (-0.65, -0.35)
    # [probe]
    re_min: float = 0.5
    re_max: float = 3.5
    re_points: int = 31
    im_values: tuple = (0.01, 0.1, 1.0)
    lambdas: tuple = (0.0, 0.05, 0.1)

    def __post_init__(self):
        validate(self)

    def window(self) -> EnergyWindow:
        return EnergyWindow(self.E0, self.Delta, self.kappa0, self.c0)

    def wigner(self, dim: int) -> WignerSpec:
        return WignerSpec(dim, self.symmetry_class, self.entry_law, self.master_seed)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


# section -> {ini key: field name}
SCHEMA = {
    "model": {"kind": "model", "size": "size", "path": "path"},
    "window": {"E0": "E0", "Delta": "Delta", "kappa0": "kappa0", "c0": "c0"},
    "coupling": {"lambda": "lam", "symmetry_class": "symmetry_class", "entry_law": "entry_law"},
    "time": {"T_min": "T_min", "T_max": "T_max", "points": "points", "reference_lambda": "reference_lambda"},
    "state": {"kind": "state_kind", "index": "state_index", "width": "state_width", "sector": "state_sector"},
    "observable": {"kind": "observable_kind", "function": "observable_function", "seed": "observable_seed", "n": "observable_n"},
    "run": {"n_realizations": "n_realizations", "master_seed": "master_seed", "output": "output", "rho0_source": "rho0_source"},
    "checks": {
        "pre_range": "pre_range", "late_range": "late_range", "pre_tol": "pre_tol", "late_tol": "late_tol",
        "gap_threshold": "gap_threshold", "plateau_checks": "plateau_checks", "rhs_check": "rhs_check",
        "rhs_range": "rhs_range", "rhs_tol": "rhs_tol", "rate_check": "rate_check", "rate_range": "rate_range",
        "rate_tol": "rate_tol",
    },
    "lawcheck": {"sizes": "sizes", "seeds": "seeds", "z1": "z1", "z2": "z2", "epsilon": "epsilon", "slope_range": "slope_range"},
    "probe": {"re_min": "re_min", "re_max": "re_max", "re_points": "re_points", "im_values": "im_values", "lambdas": "lambdas"},
}

_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_PARSERS = {"int": int, "float": float, "str": str, "bool": _bool, "complex": lambda s: complex(s.replace(" ", ""))}
_TUPLE_FIELDS = {"sizes": _ints}


def _parse_value(name: str, text: str):
    typ = _TYPES[name]
    if typ == "tuple":
        return _TUPLE_FIELDS.get(name, _floats)(text)
    return _PARSERS[typ](text.strip())


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def validate(cfg: ExperimentConfig) -> None:
    """Check every upstream parameter constraint before any computation."""
    _require(cfg.model in MODEL_KINDS, f"model kind must be one of {MODEL_KINDS}")
    if cfg.model == "nnn":
        _require(cfg.size >= 4 and cfg.size % 2 == 0, "NNN size must be even and >= 4")
    elif cfg.model == "free-fermion":
        _require(cfg.size % 2 == 0 and 4 <= cfg.size <= 12, "free-fermion size L must be even in [4, 12]")
    else:
        _require(bool(cfg.path), "custom model needs a matrix path")
    EnergyWindow(cfg.E0, cfg.Delta, cfg.kappa0, cfg.c0)
    _require(cfg.lam >= 0, "lambda must be nonnegative")
    _require(cfg.symmetry_class in SYMMETRY_CLASSES, f"symmetry_class must be one of {SYMMETRY_CLASSES}")
    _require(cfg.entry_law in ENTRY_LAWS, f"entry_law must be one of {ENTRY_LAWS}")
    _require(0 < cfg.T_min < cfg.T_max and cfg.points >= 2, "need 0 < T_min < T_max and points >= 2")
    _require(cfg.reference_lambda > 0, "reference_lambda must be positive")
    _require(cfg.state_kind in STATE_KINDS, f"state kind must be one of {STATE_KINDS}")
    _require(cfg.state_width > 0, "state width must be positive")
    _require(cfg.observable_kind in OBSERVABLE_KINDS, f"observable kind must be one of {OBSERVABLE_KINDS}")
    _require(cfg.observable_function in ENERGY_FUNCTIONS, f"observable function must be one of {tuple(ENERGY_FUNCTIONS)}")
    if cfg.observable_kind == "odd-sublattice":
        _require(cfg.model == "nnn", "odd-sublattice observable needs the nnn model")
    if cfg.observable_kind == "sector-complement":
        _require(cfg.model == "free-fermion", "sector-complement observable needs the free-fermion model")
    _require(cfg.n_realizations >= 1, "n_realizations must be >= 1")
    _require(0 <= cfg.master_seed < 2**64, "master_seed must be an unsigned 64-bit integer")
    _require(cfg.rho0_source in RHO0_SOURCES, f"rho0_source must be one of {RHO0_SOURCES}")
    if cfg.rho0_source == "analytic":
        _require(cfg.model == "nnn", "analytic rho0 is only available for the nnn model")
    _require(cfg.rate_tol > 0, "rate_tol must be positive")
    for name in ("pre_range", "late_range", "rhs_range", "rate_range"):
        r = getattr(cfg, name)
        _require(len(r) == 2 and 0 <= r[0] < r[1], f"{name} must be two ascending nonnegative numbers")
    _require(len(cfg.sizes) >= 1 and all(n >= 4 for n in cfg.sizes), "lawcheck sizes must be >= 4")
    _require(cfg.seeds >= 1, "lawcheck seeds must be >= 1")
    _require(cfg.z1.imag != 0 and cfg.z2.imag != 0, "lawcheck spectral parameters must be off the real axis")
    _require(len(cfg.slope_range) == 2, "slope_range needs two numbers")
    _require(cfg.re_min < cfg.re_max and cfg.re_points >= 1, "probe needs re_min < re_max")
    _require(all(v != 0 for v in cfg.im_values), "probe imaginary parts must be nonzero")
    _require(all(v >= 0 for v in cfg.lambdas), "probe lambdas must be nonnegative")


def parse(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            name = SCHEMA[section][key]
            try:
                values[name] = _parse_value(name, raw)
            except ValueError as exc:
                raise ValueError(f"[{section}] {key}: {exc}") from None
    return ExperimentConfig(**values)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse(fh.read())


def dump(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    for section, keys in SCHEMA.items():
        buf.write(f"[{section}]\n")
        for key, name in keys.items():
            buf.write(f"{key} = {_fmt(getattr(cfg, name))}\n")
        buf.write("\n")
    return buf.getvalue()

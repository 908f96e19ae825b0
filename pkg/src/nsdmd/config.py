"""Experiment configuration: JSON in, validated dataclasses out.

Every block is validated strictly (unknown keys are rejected, types checked)
and every default is materialized, so the persisted copy of a config is
complete: re-running from it reproduces each output byte for byte at a fixed
seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "save_config"]

_SYSTEMS = ("two_well", "duffing", "vanderpol", "lorenz", "henon")
_FIT_METHODS = ("dmd", "edmd", "nsdmd_case1", "nsdmd_case2", "nsdmd_case3")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _take(block: dict, context: str, spec: dict) -> dict:
    """Pop known keys with defaults applied; reject anything left over."""
    if not isinstance(block, dict):
        raise ConfigError(f"{context}: expected an object, got {type(block).__name__}")
    block = dict(block)
    out = {}
    for key, default in spec.items():
        if key in block:
            out[key] = block.pop(key)
        elif default is _REQUIRED:
            raise ConfigError(f"{context}: missing required key {key!r}")
        else:
            out[key] = default
    if block:
        raise ConfigError(f"{context}: unknown keys {sorted(block)}")
    return out


_REQUIRED = object()


def _as_float(val, context):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{context}: expected a number, got {val!r}")
    return float(val)


def _as_int(val, context):
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{context}: expected an integer, got {val!r}")
    return int(val)


def _as_choice(val, choices, context):
    if val not in choices:
        raise ConfigError(f"{context}: expected one of {choices}, got {val!r}")
    return val


def _as_domain(val, context):
    try:
        dom = [[float(lo), float(hi)] for lo, hi in val]
    except (TypeError, ValueError):
        raise ConfigError(f"{context}: expected [[lo, hi], ...]")
    for lo, hi in dom:
        if hi <= lo:
            raise ConfigError(f"{context}: bounds must satisfy lo < hi")
    return dom


@dataclass
class SystemConfig:
    name: str
    domain: list
    n_init: int
    horizon: float
    dt: float
    seed: int = 0
    method: str = "rk4"
    variant: str = "standard"
    substeps: int | None = None

    @classmethod
    def parse(cls, block: dict) -> "SystemConfig":
        vals = _take(block, "system", {
            "name": _REQUIRED, "domain": _REQUIRED, "n_init": _REQUIRED,
            "horizon": _REQUIRED, "dt": 0.0, "seed": 0, "method": "rk4",
            "variant": "standard", "substeps": None,
        })
        name = _as_choice(vals["name"], _SYSTEMS, "system.name")
        if name != "henon" and _as_float(vals["dt"], "system.dt") <= 0:
            raise ConfigError("system.dt must be positive for a vector field")
        return cls(
            name=name,
            domain=_as_domain(vals["domain"], "system.domain"),
            n_init=_as_int(vals["n_init"], "system.n_init"),
            horizon=_as_float(vals["horizon"], "system.horizon"),
            dt=_as_float(vals["dt"], "system.dt"),
            seed=_as_int(vals["seed"], "system.seed"),
            method=_as_choice(vals["method"], ("rk4", "adaptive"), "system.method"),
            variant=_as_choice(vals["variant"], ("standard", "literal"), "system.variant"),
            substeps=None if vals["substeps"] is None else _as_int(vals["substeps"], "system.substeps"),
        )


@dataclass
class DictionaryConfig:
    kind: str = "gaussian_rbf"
    size: int = 100
    sigma: float = 0.3
    rbf_exponent: str = "squared"
    center_policy: str = "kmeans"
    ridge: float | None = None
    degree: int = 3

    @classmethod
    def parse(cls, block: dict) -> "DictionaryConfig":
        vals = _take(block, "dictionary", {
            "kind": "gaussian_rbf", "size": 100, "sigma": 0.3,
            "rbf_exponent": "squared", "center_policy": "kmeans",
            "ridge": None, "degree": 3,
        })
        return cls(
            kind=_as_choice(vals["kind"], ("gaussian_rbf", "indicator_boxes", "coordinates", "monomials"), "dictionary.kind"),
            size=_as_int(vals["size"], "dictionary.size"),
            sigma=_as_float(vals["sigma"], "dictionary.sigma"),
            rbf_exponent=_as_choice(vals["rbf_exponent"], ("squared", "absolute"), "dictionary.rbf_exponent"),
            center_policy=_as_choice(vals["center_policy"], ("kmeans", "grid"), "dictionary.center_policy"),
            ridge=None if vals["ridge"] is None else _as_float(vals["ridge"], "dictionary.ridge"),
            degree=_as_int(vals["degree"], "dictionary.degree"),
        )


@dataclass
class FitConfig:
    method: str = "nsdmd_case3"
    svd_tol: float = 1e-10
    rho: float = 1.0
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    max_iter: int = 50_000
    feasibility_eps: float = 1e-6

    @classmethod
    def parse(cls, block: dict) -> "FitConfig":
        vals = _take(block, "fit", {
            "method": "nsdmd_case3", "svd_tol": 1e-10, "rho": 1.0,
            "tol_primal": 1e-8, "tol_dual": 1e-8, "max_iter": 50_000,
            "feasibility_eps": 1e-6,
        })
        return cls(
            method=_as_choice(vals["method"], _FIT_METHODS, "fit.method"),
            svd_tol=_as_float(vals["svd_tol"], "fit.svd_tol"),
            rho=_as_float(vals["rho"], "fit.rho"),
            tol_primal=_as_float(vals["tol_primal"], "fit.tol_primal"),
            tol_dual=_as_float(vals["tol_dual"], "fit.tol_dual"),
            max_iter=_as_int(vals["max_iter"], "fit.max_iter"),
            feasibility_eps=_as_float(vals["feasibility_eps"], "fit.feasibility_eps"),
        )


@dataclass
class OutputConfig:
    grid_points: int = 32
    grid_domain: list | None = None

    @classmethod
    def parse(cls, block: dict) -> "OutputConfig":
        vals = _take(block, "output", {"grid_points": 32, "grid_domain": None})
        return cls(
            grid_points=_as_int(vals["grid_points"], "output.grid_points"),
            grid_domain=None if vals["grid_domain"] is None else _as_domain(vals["grid_domain"], "output.grid_domain"),
        )


@dataclass
class UlamConfig:
    divisions: int = 32
    mode: str = "trajectory"
    samples_per_box: int = 100

    @classmethod
    def parse(cls, block: dict) -> "UlamConfig":
        vals = _take(block, "ulam", {"divisions": 32, "mode": "trajectory", "samples_per_box": 100})
        return cls(
            divisions=_as_int(vals["divisions"], "ulam.divisions"),
            mode=_as_choice(vals["mode"], ("trajectory", "sampling"), "ulam.mode"),
            samples_per_box=_as_int(vals["samples_per_box"], "ulam.samples_per_box"),
        )


@dataclass
class LyapunovConfig:
    threshold_fraction: float = 0.1

    @classmethod
    def parse(cls, block: dict) -> "LyapunovConfig":
        vals = _take(block, "lyapunov", {"threshold_fraction": 0.1})
        return cls(threshold_fraction=_as_float(vals["threshold_fraction"], "lyapunov.threshold_fraction"))


@dataclass
class ExperimentConfig:
    system: SystemConfig
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    ulam: UlamConfig = field(default_factory=UlamConfig)
    lyapunov: LyapunovConfig = field(default_factory=LyapunovConfig)

    @classmethod
    def parse(cls, payload: dict) -> "ExperimentConfig":
        if not isinstance(payload, dict):
            raise ConfigError("top level of the config must be an object")
        payload = dict(payload)
        if "system" not in payload:
            raise ConfigError("missing required block 'system'")
        cfg = cls(
            system=SystemConfig.parse(payload.pop("system")),
            dictionary=DictionaryConfig.parse(payload.pop("dictionary", {})),
            fit=FitConfig.parse(payload.pop("fit", {})),
            output=OutputConfig.parse(payload.pop("output", {})),
            ulam=UlamConfig.parse(payload.pop("ulam", {})),
            lyapunov=LyapunovConfig.parse(payload.pop("lyapunov", {})),
        )
        if payload:
            raise ConfigError(f"unknown top-level blocks {sorted(payload)}")
        return cfg

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})")
    return ExperimentConfig.parse(payload)


def save_config(config: ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path

"""
Run configuration: a versioned YAML document.

Example::

    version: 1
    name: centred-sphere
    k: 5.0
    F: 31
    Ni: 8
    Nd: 2
    R: 2.0
    contrast: {kind: sphere, n0: 2.0, radius: 1.0}
    incident: {m_inc: 1, d: 0.0}
    gmres: {tol: 1.0e-10, max_iter: 500, restart: 50}
    sweep: {param: Ni, values: [8, 16, 32], ratio: linear}
    reference: {kind: auto}
    output: {dir: out, slice_theta: 181}
    moment_cache: null

Unknown keys are rejected at every level.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import InvalidConfig, LSSpectralError
from .scenarios import CONTRAST_KINDS, ContrastSpec, IncidentSpec

__all__ = [
    "CONFIG_VERSION",
    "RunConfig",
    "GmresOptions",
    "SweepOptions",
    "ReferenceOptions",
    "OutputOptions",
    "load_config",
    "dump_config",
]

CONFIG_VERSION = 1
SWEEP_PARAMS = ("Ni", "F", "Nd")
REFERENCE_KINDS = ("auto", "exact", "refined", "incident", "none")


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise InvalidConfig(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidConfig(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, LSSpectralError) as exc:
        raise InvalidConfig(f"{where}: {exc}") from exc


def _real(value, where):
    # YAML 1.1 reads "1e-10" as a string; accept it as a number
    if isinstance(value, bool):
        raise InvalidConfig(f"{where} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{where} must be a number, got {value!r}") from exc


@dataclass
class GmresOptions:
    tol: float = 1e-10
    max_iter: int = 500
    restart: int = 50


@dataclass
class SweepOptions:
    """Convergence study: ``param`` takes each of ``values`` in turn."""

    param: str = "Ni"
    values: list = field(default_factory=list)
    ratio: str = "linear"


@dataclass
class ReferenceOptions:
    """How the reference solution is obtained.

    ``auto`` uses the exact solution when one exists and a refined solve
    otherwise.  ``refined`` overrides any of ``F``, ``Ni``, ``Nd``.
    """

    kind: str = "auto"
    F: int | None = None
    Ni: int | None = None
    Nd: int | None = None
    tol: float | None = None


@dataclass
class OutputOptions:
    dir: str = "out"
    slice_theta: int = 181
    save_coefficients: bool = True


@dataclass
class RunConfig:
    """Complete description of a solve or a sweep."""

    k: float = 1.0
    F: int = 15
    Ni: int = 8
    Nd: int = 2
    R: float = 2.0
    name: str = "run"
    version: int = CONFIG_VERSION
    contrast: ContrastSpec = field(default_factory=ContrastSpec)
    incident: IncidentSpec = field(default_factory=IncidentSpec)
    gmres: GmresOptions = field(default_factory=GmresOptions)
    sweep: SweepOptions | None = None
    reference: ReferenceOptions = field(default_factory=ReferenceOptions)
    output: OutputOptions = field(default_factory=OutputOptions)
    moment_cache: str | None = None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidConfig("config must be a mapping at the top level")
        data = copy.deepcopy(data)
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise InvalidConfig(f"unknown key(s) {', '.join(unknown)}")
        version = data.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise InvalidConfig(f"unsupported config version {version}; expected {CONFIG_VERSION}")
        inc = data.pop("incident", None)
        if isinstance(inc, dict) and "k" in inc:
            raise InvalidConfig("incident: the wavenumber is set by the top-level key k")
        sub = {
            "contrast": _build(ContrastSpec, data.pop("contrast", None), "contrast"),
            "gmres": _build(GmresOptions, data.pop("gmres", None), "gmres"),
            "reference": _build(ReferenceOptions, data.pop("reference", None), "reference"),
            "output": _build(OutputOptions, data.pop("output", None), "output"),
        }
        sweep = data.pop("sweep", None)
        sub["sweep"] = None if sweep is None else _build(SweepOptions, sweep, "sweep")
        incident = _build(_IncidentKeys, inc, "incident")
        cfg = cls(**data, **sub)
        cfg.k = _real(cfg.k, "k")
        cfg.R = _real(cfg.R, "R")
        cfg.gmres.tol = _real(cfg.gmres.tol, "gmres.tol")
        if cfg.reference.tol is not None:
            cfg.reference.tol = _real(cfg.reference.tol, "reference.tol")
        for key in ("n0", "radius", "offset", "beta", "inner", "outer"):
            setattr(cfg.contrast, key, _real(getattr(cfg.contrast, key), f"contrast.{key}"))
        cfg.incident = IncidentSpec(incident.m_inc, cfg.k, _real(incident.d, "incident.d"))
        cfg.validate()
        return cfg

    def to_dict(self):
        out = asdict(self)
        out["incident"].pop("k")
        if self.sweep is None:
            out["sweep"] = None
        return out

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise InvalidConfig(msg)

        need(isinstance(self.name, str), "name must be a string")
        need(float(self.k) > 0, f"k must be positive, got {self.k}")
        need(float(self.R) > 0, f"R must be positive, got {self.R}")
        for key in ("F", "Ni", "Nd"):
            v = getattr(self, key)
            need(isinstance(v, int) and not isinstance(v, bool), f"{key} must be an integer")
        need(self.F >= 0, "F must be >= 0")
        need(self.Ni >= 1, "Ni must be >= 1")
        need(self.Nd >= 2, "Nd must be >= 2")
        need(self.contrast.kind in CONTRAST_KINDS, f"contrast.kind must be one of {CONTRAST_KINDS}")
        need(self.gmres.tol > 0, "gmres.tol must be positive")
        need(self.gmres.max_iter >= 1 and self.gmres.restart >= 1, "gmres limits must be >= 1")
        need(self.reference.kind in REFERENCE_KINDS, f"reference.kind must be one of {REFERENCE_KINDS}")
        need(self.output.slice_theta >= 2, "output.slice_theta must be >= 2")
        if self.sweep is not None:
            sw = self.sweep
            need(sw.param in SWEEP_PARAMS, f"sweep.param must be one of {SWEEP_PARAMS}")
            need(isinstance(sw.values, list) and len(sw.values) >= 2, "sweep.values needs at least two entries")
            need(all(isinstance(v, int) and not isinstance(v, bool) for v in sw.values), "sweep.values must be integers")
            need(sw.ratio in ("linear", "log2"), "sweep.ratio must be 'linear' or 'log2'")
        if self.contrast.kind == "shifted-sphere":
            need(
                abs(self.incident.d - self.contrast.offset) < 1e-14 or self.reference.kind in ("refined", "none"),
                "shifted sphere: incident.d must equal contrast.offset for the exact reference",
            )
        return self

    def with_value(self, param, value):
        """Copy with one discretisation parameter replaced."""
        cfg = copy.deepcopy(self)
        setattr(cfg, param, int(value))
        return cfg


@dataclass
class _IncidentKeys:
    m_inc: int = 1
    d: float = 0.0


def load_config(path):
    """Read and validate a YAML run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"config file not found: {path}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: not valid YAML ({exc})") from exc
    return RunConfig.from_dict(data)


def dump_config(cfg, path=None):
    """Serialise a configuration; returns the YAML text."""
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text

"""Declarative run configuration (JSON), with environment-variable overrides.

A config is a JSON object; only ``model`` is required. The metadata JSON that
every run writes embeds the fully resolved config under ``"config"`` and is
itself accepted as a config file.

Environment overrides use the prefix ``HYPERDIFF_`` and ``__`` for nesting, e.g.
``HYPERDIFF_T_MAX=50`` or ``HYPERDIFF_MODEL__DELTA=1.5``. Values are parsed as
JSON when possible, otherwise taken as strings.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .lattice import GOLDEN_BETA

ENV_PREFIX = "HYPERDIFF_"
MODEL_KINDS = ("free", "disordered", "harper")

# assumed defaults, flagged in run metadata when used
DEFAULT_DISORDER_V = 1.0
DEFAULT_SUBLATTICE_L = 100
DEFAULT_DISORDER_REALIZATIONS = 20


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, path: str | None = None):
        self.message = message
        self.field = field
        self.path = path
        where = " ".join(x for x in (path and f"{path}:", field and f"[{field}]") if x)
        super().__init__(f"{where} {message}".strip())


@dataclass
class ModelConfig:
    kind: str
    L: int | None = None
    V: float | None = None
    Delta: float | None = None
    beta: float = GOLDEN_BETA
    phi: float = 0.0

    def resolve(self) -> tuple["ModelConfig", list[str]]:
        """Fill kind-dependent defaults; returns the names of assumed defaults used."""
        flagged = []
        m = dataclasses.replace(self)
        if m.kind == "free":
            m.L = 0 if m.L is None else m.L
        if m.L is None:
            m.L = DEFAULT_SUBLATTICE_L
            flagged.append("model.L")
        if m.kind == "disordered" and m.V is None:
            m.V = DEFAULT_DISORDER_V
            flagged.append("model.V")
        if m.kind == "harper" and m.Delta is None:
            raise ConfigError("harper model needs Delta", field="model.Delta")
        return m, flagged


@dataclass
class RecordConfig:
    t_min: float = 0.1
    count: int = 60
    times: list[float] | None = None


@dataclass
class IntegratorSettings:
    dt: float | None = None
    error_control: str = "fixed"
    step_tol: float = 1e-9
    convergence_tol: float = 1e-6
    check_convergence: bool = False
    positivity_tol: float = 1e-8
    checkpoints: list[float] = field(default_factory=list)
    window_tol: float = 1e-20
    force_density_matrix: bool = False


@dataclass
class EnsembleSettings:
    realizations: int | None = None
    seed: int = 0
    workers: int = 1


@dataclass
class FitSettings:
    t_lo: float | None = None
    t_hi: float | None = None
    epsilon: float = 0.05


@dataclass
class RunConfig:
    model: ModelConfig
    gamma: float | list[float] = 0.0
    hopping_J: float = -1.0
    t_max: float = 100.0
    lead_length: int | None = None
    boundary_margin: int = 5
    record: RecordConfig = field(default_factory=RecordConfig)
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    output: str | None = None

    def realization_count(self) -> int:
        if self.ensemble.realizations is not None:
            return self.ensemble.realizations
        return DEFAULT_DISORDER_REALIZATIONS if self.model.kind == "disordered" else 1

    def resolved(self) -> tuple["RunConfig", list[str]]:
        """Copy with every defaulted field made explicit, plus the assumed defaults that were used."""
        model, flagged = self.model.resolve()
        cfg = dataclasses.replace(
            self,
            model=model,
            record=dataclasses.replace(self.record),
            integrator=dataclasses.replace(self.integrator),
            ensemble=dataclasses.replace(self.ensemble),
            fit=dataclasses.replace(self.fit),
        )
        if self.ensemble.realizations is None:
            cfg.ensemble.realizations = self.realization_count()
            if model.kind == "disordered":
                flagged.append("ensemble.realizations")
        return cfg, flagged

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_SECTIONS = {
    "model": ModelConfig,
    "record": RecordConfig,
    "integrator": IntegratorSettings,
    "ensemble": EnsembleSettings,
    "fit": FitSettings,
}


def _check_number(value: Any, name: str, *, integer: bool = False, positive: bool = False,
                  nonneg: bool = False, optional: bool = False) -> None:
    if value is None:
        if optional:
            return
        raise ConfigError("is required", field=name)
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        raise ConfigError(f"expected {'integer' if integer else 'number'}, got {value!r}", field=name)
    if positive and not value > 0:
        raise ConfigError(f"must be > 0, got {value}", field=name)
    if nonneg and value < 0:
        raise ConfigError(f"must be >= 0, got {value}", field=name)


def _build_section(cls, data: Any, name: str):
    if not isinstance(data, Mapping):
        raise ConfigError("expected an object", field=name)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=name)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc), field=name) from None


def validate(cfg: RunConfig) -> None:
    m = cfg.model
    if m.kind not in MODEL_KINDS:
        raise ConfigError(f"must be one of {MODEL_KINDS}, got {m.kind!r}", field="model.kind")
    _check_number(m.L, "model.L", integer=True, nonneg=True, optional=True)
    _check_number(m.V, "model.V", positive=True, optional=True)
    _check_number(m.Delta, "model.Delta", optional=True)
    _check_number(m.beta, "model.beta")
    _check_number(m.phi, "model.phi")
    if isinstance(cfg.gamma, list):
        for k, g in enumerate(cfg.gamma):
            _check_number(g, f"gamma[{k}]", nonneg=True)
    else:
        _check_number(cfg.gamma, "gamma", nonneg=True)
    _check_number(cfg.hopping_J, "hopping_J")
    if cfg.hopping_J == 0:
        raise ConfigError("must be nonzero", field="hopping_J")
    _check_number(cfg.t_max, "t_max", positive=True)
    _check_number(cfg.lead_length, "lead_length", integer=True, nonneg=True, optional=True)
    _check_number(cfg.boundary_margin, "boundary_margin", integer=True, positive=True)
    r = cfg.record
    _check_number(r.t_min, "record.t_min", positive=True)
    _check_number(r.count, "record.count", integer=True, positive=True)
    if r.times is not None and (not isinstance(r.times, list) or not r.times):
        raise ConfigError("must be a non-empty list", field="record.times")
    it = cfg.integrator
    _check_number(it.dt, "integrator.dt", positive=True, optional=True)
    if it.error_control not in ("fixed", "step-doubling"):
        raise ConfigError("must be 'fixed' or 'step-doubling'", field="integrator.error_control")
    for name in ("step_tol", "convergence_tol", "positivity_tol", "window_tol"):
        _check_number(getattr(it, name), f"integrator.{name}", positive=True)
    if not isinstance(it.checkpoints, list) or len(it.checkpoints) > 8:
        raise ConfigError("must be a list of at most 8 times", field="integrator.checkpoints")
    e = cfg.ensemble
    _check_number(e.realizations, "ensemble.realizations", integer=True, positive=True, optional=True)
    _check_number(e.seed, "ensemble.seed", integer=True, nonneg=True)
    if e.seed >= 2**64:
        raise ConfigError("must fit in 64 bits", field="ensemble.seed")
    _check_number(e.workers, "ensemble.workers", integer=True, positive=True)
    f = cfg.fit
    _check_number(f.t_lo, "fit.t_lo", positive=True, optional=True)
    _check_number(f.t_hi, "fit.t_hi", positive=True, optional=True)
    _check_number(f.epsilon, "fit.epsilon", positive=True)
    if not f.epsilon < 0.5:
        raise ConfigError("must be < 0.5", field="fit.epsilon")


def from_dict(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    if "config" in data and isinstance(data["config"], Mapping):
        data = data["config"]  # run metadata document
    data = dict(data)
    if "model" not in data or data["model"] is None:
        raise ConfigError("is required", field="model")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    if isinstance(data["model"], Mapping) and "kind" not in data["model"]:
        raise ConfigError("is required", field="model.kind")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def _set_path(data: dict, parts: list[str], value: Any, env_name: str) -> None:
    node = data
    cls = RunConfig
    for depth, part in enumerate(parts):
        names = {f.name.lower(): f.name for f in dataclasses.fields(cls)} if cls else {}
        key = names.get(part.lower())
        if key is None:
            raise ConfigError(f"environment override {env_name} names no config field")
        if depth == len(parts) - 1:
            node[key] = value
        else:
            cls = _SECTIONS.get(key) if depth == 0 else None
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {env_name} targets a non-object")


def apply_env(data: dict, environ: Mapping[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    data = json.loads(json.dumps(data))
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].split("__")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(data, parts, value, name)
    return data


def load(path: str | os.PathLike | None, environ: Mapping[str, str] | None = None,
         overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a JSON config file, then apply environment and explicit overrides (dotted keys)."""
    data: dict = {}
    src = str(path) if path is not None else None
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("file not found", path=src) from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", path=src) from None
    try:
        data = apply_env(data, environ)
        for key, value in (overrides or {}).items():
            _set_path(data, key.split("."), value, key)
        return from_dict(data)
    except ConfigError as exc:
        raise ConfigError(exc.message, field=exc.field, path=src) from None

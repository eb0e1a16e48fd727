"""Run configuration: a JSON tree of dataclass records with dotted-key overrides."""
from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

OUT_ENV = "KPPSPREAD_OUT"
DEFAULT_OUT = "kppspread_out"


class ConfigError(ValueError):
    """Malformed configuration."""


def _float_or_inf(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return float(v)


def _encode(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: _encode(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_encode(x) for x in v]
    return v


def _from_mapping(cls, d: Mapping[str, Any] | None, where: str):
    d = dict(d or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    return cls(**d)


@dataclass
class HJConfig:
    h: float = 0.01
    s_max: float = 8.0
    mu_cap: float | None = None
    scheme: str = "llf"
    cfl: float = 0.45
    defect_tol: float = 1e-7
    tau_max: float = 40.0
    zero_tol: float | None = None


@dataclass
class SimConfig:
    x_lo: float = -50.0
    x_hi: float = 450.0
    dx: float = 0.2
    dt: float | None = None
    T: float = 200.0
    theta: float = 0.1
    trace_every: float = 0.5
    snapshot_every: float = 5.0
    diffusion: str = "explicit"
    window: list | None = None
    write_snapshots: bool = False


@dataclass
class ValidateConfig:
    hj_abs_tol: float = 0.02
    sim_rel_tol: float = 0.10
    force_regime: str | None = None


@dataclass
class SweepConfig:
    """Lattice of speed evaluations.

    kind: "single" (rates r_minus / r_plus, model kernel), "single_kpp"
    (closed forms, r1 = r_minus[0], r2 = r_plus[0]), "two_shift_kpp"
    (leading rate 1, middle r_plus[0], trailing r_minus[0]) or "homogeneous"
    (rates r_plus).  Each axis is a list or {"start", "stop", "num"}.
    """
    kind: str = "single_kpp"
    r_minus: list = field(default_factory=lambda: [0.25, 0.0])
    r_plus: list = field(default_factory=lambda: [1.0, 0.0])
    mu: Any = field(default_factory=lambda: ["inf"])
    c1: Any = field(default_factory=lambda: {"start": 0.5, "stop": 4.0, "num": 8})
    c2: Any = field(default_factory=lambda: [None])

    def axis(self, name: str) -> list:
        v = getattr(self, name)
        if isinstance(v, Mapping):
            extra = set(v) - {"start", "stop", "num"}
            if extra:
                raise ConfigError(f"unknown range keys for sweep.{name}: {sorted(extra)}")
            import numpy as np
            return [float(x) for x in np.linspace(float(v["start"]), float(v["stop"]), int(v["num"]))]
        if not isinstance(v, Sequence) or isinstance(v, str):
            v = [v]
        return [None if x is None else _float_or_inf(x) for x in v]


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"f1": {"type": "fisher", "r": {"base": 1.0}}})
    ic: dict = field(default_factory=lambda: {"type": "inf"})
    mu: Any = None
    hj: HJConfig = field(default_factory=HJConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    out: str | None = None
    seed: int = 0

    _SECTIONS = {"hj": HJConfig, "sim": SimConfig, "validate": ValidateConfig, "sweep": SweepConfig}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> "RunConfig":
        d = dict(d or {})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {unknown}")
        for key, sub in cls._SECTIONS.items():
            if key in d:
                d[key] = _from_mapping(sub, d[key], key)
        cfg = cls(**d)
        cfg.build()   # validate model and initial data eagerly
        return cfg

    def to_dict(self) -> dict:
        return _encode(dataclasses.asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # resolved objects ---------------------------------------------------------
    def build(self):
        from .simulate import InitialData, ModelSpec
        try:
            model = ModelSpec.from_dict(self.model)
            ic = InitialData.from_dict(self.ic)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad model or initial data: {exc}") from exc
        return model, ic

    def decay_rate(self) -> float:
        """mu: explicit value, else the rate of exponential initial data, else inf."""
        if self.mu is not None:
            mu = _float_or_inf(self.mu)
        elif self.ic.get("type") == "mu":
            mu = float(self.ic["mu"])
        else:
            mu = math.inf
        if not mu > 0:
            raise ConfigError("mu must be positive")
        return mu

    def out_dir(self, flag: str | None = None) -> Path:
        return Path(flag or self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def set_dotted(tree: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = tree
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {key!r}: {p!r} is not a section")
        node = nxt
    node[parts[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: str | os.PathLike | None = None, overrides: Sequence[str] = ()) -> RunConfig:
    tree: dict = {}
    if path is not None:
        try:
            tree = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(tree, dict):
            raise ConfigError("config root must be an object")
    base = RunConfig().to_dict()
    merged = _merge(base, tree)
    for item in overrides:
        k, v = parse_override(item)
        set_dotted(merged, k, v)
    return RunConfig.from_dict(merged)


def _merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        # model / ic are replaced wholesale; sections merge key by key
        if k in RunConfig._SECTIONS and isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out

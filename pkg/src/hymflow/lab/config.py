"""Versioned JSON experiment configuration.

A config file looks like::

    {
      "version": 1,
      "seed": 7,
      "base": {"kind": "flat", "dim": 1, "grid": 32},
      "bundle": {"degrees": [1, -1]},
      "initial_metric": {"kind": "random", "amplitude": 0.5},
      "integrator": {"scheme": "rk4", "t_end": 1.0, "renormalize": true},
      "monitors": {"every": 0.05},
      "outputs": {"dir": "out", "name": "split"}
    }

Unknown keys are errors, so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

SCHEMA_VERSION = 1
BASE_KINDS = ("flat", "gauduchon")
METRIC_KINDS = ("background", "conformal", "random")
BETA_KINDS = ("constant", "packet")
FORMATS = ("jsonl", "csv", "svg")


class ConfigError(ValueError):
    """Invalid configuration; `line` points into the source text when known."""

    def __init__(self, msg, line=None, col=None):
        self.line = line
        self.col = col
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + msg)


@dataclass
class BaseSection:
    kind: str = "flat"
    dim: int = 1
    grid: int = 32
    eps: float = 0.0


@dataclass
class BetaSection:
    kind: str = "constant"
    # constant: list of [k, a, b, re, im]; packet: amplitude, slot, centre, mode
    entries: list = field(default_factory=list)
    amplitude: float = 0.0
    slot: list = field(default_factory=lambda: [0, 1])
    x0: float = 0.5
    mode: int = 0


@dataclass
class BundleSection:
    degrees: list = field(default_factory=lambda: [0])
    beta: Optional[BetaSection] = None


@dataclass
class MetricSection:
    kind: str = "background"
    amplitude: float = 0.0
    mode: list = field(default_factory=list)  # integer wave vector for "conformal"
    weights: list = field(default_factory=list)  # per-summand factor for "conformal"
    traceless: bool = False


@dataclass
class IntegratorSection:
    scheme: str = "rk4"
    dt: Optional[float] = None
    t_end: float = 1.0
    safety: float = 0.2
    tolerance: float = 1e-8
    renormalize: bool = False


@dataclass
class MonitorSection:
    every: float = 0.1
    times: Optional[list] = None
    hym_pairs: list = field(default_factory=lambda: [[1.0, 0.0], [1.0, 1.0], [2.0, 0.0], [2.0, 1.0]])


@dataclass
class OutputSection:
    dir: str = "."
    name: str = "run"
    formats: list = field(default_factory=lambda: ["jsonl", "csv"])


@dataclass
class ExperimentConfig:
    version: int = SCHEMA_VERSION
    seed: int = 0
    base: BaseSection = field(default_factory=BaseSection)
    bundle: BundleSection = field(default_factory=BundleSection)
    initial_metric: MetricSection = field(default_factory=MetricSection)
    pair: Optional[MetricSection] = None  # second initial metric for paired runs
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    monitors: MonitorSection = field(default_factory=MonitorSection)
    outputs: OutputSection = field(default_factory=OutputSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def validate(self, text: Optional[str] = None):
        _validate(self, text)
        return self


_SECTIONS = {
    "base": BaseSection,
    "bundle": BundleSection,
    "initial_metric": MetricSection,
    "pair": MetricSection,
    "integrator": IntegratorSection,
    "monitors": MonitorSection,
    "outputs": OutputSection,
}


def _line_of(text: Optional[str], key: str):
    """First line mentioning "key": in the source, for diagnostics."""
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def _build(cls, data, path, text):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object", _line_of(text, path.split(".")[-1]))
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown key {path}.{unknown[0]} (allowed: {', '.join(names)})",
                          _line_of(text, unknown[0]))
    kw = {}
    for k, v in data.items():
        if cls is BundleSection and k == "beta" and v is not None:
            v = _build(BetaSection, v, f"{path}.beta", text)
        kw[k] = v
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_dict(data: dict, text: Optional[str] = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", 1)
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} (allowed: {', '.join(sorted(top))})",
                          _line_of(text, unknown[0]))
    if "version" not in data:
        raise ConfigError("missing schema version", 1)
    if data["version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {data['version']!r} (expected {SCHEMA_VERSION})",
                          _line_of(text, "version"))
    kw = {}
    for k, v in data.items():
        if k in _SECTIONS and v is not None:
            v = _build(_SECTIONS[k], v, k, text)
        kw[k] = v
    cfg = ExperimentConfig(**kw)
    return cfg.validate(text)


def loads(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from None
    return from_dict(data, text)


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def _num(v, name, text, integer=False):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if integer:
        ok = ok and float(v) == int(v)
    if not ok or not np.isfinite(v):
        raise ConfigError(f"{name} must be {'an integer' if integer else 'a number'}, got {v!r}",
                          _line_of(text, name.split(".")[-1]))


def _validate(cfg: ExperimentConfig, text=None):
    ln = lambda key: _line_of(text, key)
    _num(cfg.seed, "seed", text, integer=True)
    b = cfg.base
    if b.kind not in BASE_KINDS:
        raise ConfigError(f"base.kind must be one of {BASE_KINDS}", ln("kind"))
    _num(b.dim, "base.dim", text, integer=True)
    _num(b.grid, "base.grid", text, integer=True)
    _num(b.eps, "base.eps", text)
    if b.dim not in (1, 2):
        raise ConfigError("base.dim must be 1 or 2", ln("dim"))
    if b.grid < 8 or b.grid & (b.grid - 1):
        raise ConfigError("base.grid must be a power of two >= 8", ln("grid"))
    if b.kind == "gauduchon":
        if b.dim != 2:
            raise ConfigError("the Gauduchon base is a complex surface (dim 2)", ln("kind"))
        if not 0 < abs(b.eps) < 0.25:
            raise ConfigError("base.eps must satisfy 0 < |eps| < 1/4", ln("eps"))
    elif b.eps != 0:
        raise ConfigError("base.eps only applies to the Gauduchon base", ln("eps"))

    degs = cfg.bundle.degrees
    if not isinstance(degs, list) or not degs:
        raise ConfigError("bundle.degrees must be a nonempty list", ln("degrees"))
    for d in degs:
        _num(d, "bundle.degrees", text, integer=True)
    if any(degs[i] < degs[i + 1] for i in range(len(degs) - 1)):
        raise ConfigError("bundle.degrees must be nonincreasing", ln("degrees"))
    if b.dim == 2 and any(degs):
        raise ConfigError("nonzero degrees are unsupported on the two-dimensional torus", ln("degrees"))
    beta = cfg.bundle.beta
    if beta is not None:
        if beta.kind not in BETA_KINDS:
            raise ConfigError(f"bundle.beta.kind must be one of {BETA_KINDS}", ln("kind"))
        if beta.kind == "constant":
            if b.dim == 1 and len(set(degs)) > 1:
                raise ConfigError("constant beta needs equal degrees on the one-dimensional torus "
                                  "(use a packet)", ln("beta"))
            for e in beta.entries:
                if not (isinstance(e, list) and len(e) == 5):
                    raise ConfigError("beta entries are [k, a, b, re, im]", ln("entries"))
        else:
            if b.dim != 1:
                raise ConfigError("packet beta is for the one-dimensional torus", ln("kind"))
            if len(beta.slot) != 2 or not beta.slot[0] < beta.slot[1] < len(degs):
                raise ConfigError("beta.slot must be [a, b] with a < b < rank", ln("slot"))

    for label, m in (("initial_metric", cfg.initial_metric), ("pair", cfg.pair)):
        if m is None:
            continue
        if m.kind not in METRIC_KINDS:
            raise ConfigError(f"{label}.kind must be one of {METRIC_KINDS}", ln(label))
        _num(m.amplitude, f"{label}.amplitude", text)
        if m.kind == "conformal":
            if len(m.mode) != 2 * b.dim:
                raise ConfigError(f"{label}.mode needs {2 * b.dim} integers", ln("mode"))
            if m.weights and len(m.weights) != len(degs):
                raise ConfigError(f"{label}.weights needs one entry per summand", ln("weights"))

    it = cfg.integrator
    if it.scheme not in ("euler", "rk4", "adaptive"):
        raise ConfigError("integrator.scheme must be euler, rk4 or adaptive", ln("scheme"))
    _num(it.t_end, "integrator.t_end", text)
    if it.t_end < 0:
        raise ConfigError("integrator.t_end must be nonnegative", ln("t_end"))
    if it.dt is not None:
        _num(it.dt, "integrator.dt", text)
        if it.dt <= 0:
            raise ConfigError("integrator.dt must be positive", ln("dt"))
    if it.renormalize and beta is not None:
        raise ConfigError("frame renormalisation needs a split bundle", ln("renormalize"))

    mo = cfg.monitors
    _num(mo.every, "monitors.every", text)
    if mo.every <= 0:
        raise ConfigError("monitors.every must be positive", ln("every"))
    for p in mo.hym_pairs:
        if not (isinstance(p, list) and len(p) == 2) or p[0] < 1:
            raise ConfigError("hym_pairs entries are [rho, N] with rho >= 1", ln("hym_pairs"))
    for f in cfg.outputs.formats:
        if f not in FORMATS:
            raise ConfigError(f"unknown output format {f!r}", ln("formats"))
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", cfg.outputs.name):
        raise ConfigError("outputs.name may only contain letters, digits, '_', '.', '-'", ln("name"))


class SeedStream:
    """Counted deterministic generator: the i-th draw depends only on (seed, i)."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.count = 0

    def next_seed(self) -> int:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.count,))
        self.count += 1
        return int(ss.generate_state(1, dtype=np.uint32)[0])

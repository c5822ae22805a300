"""Build and execute experiments described by an ExperimentConfig."""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..analytics import AnalyticsError
from ..bundle import (
    NumericalBreakdown,
    conformal_metric,
    constant_beta,
    deform,
    make_split_bundle,
    packet_beta,
    random_metric,
)
from ..flow import (
    ConvergenceError,
    FlowState,
    IntegratorConfig,
    MonitorSchedule,
    StabilityError,
    run,
    run_pair,
)
from ..geometry import make_flat_torus, make_gauduchon_torus
from .config import ExperimentConfig, MetricSection, SeedStream


class RunFailure(RuntimeError):
    """Numerical failure during a run; `dump` is the path of the state dump."""

    def __init__(self, msg, dump=None):
        super().__init__(msg)
        self.dump = dump


@dataclass
class Experiment:
    config: ExperimentConfig
    spec: object
    states: list
    integrator: IntegratorConfig
    schedule: MonitorSchedule


@dataclass
class RunResult:
    traces: list
    files: list = field(default_factory=list)


def build_base(cfg: ExperimentConfig):
    b = cfg.base
    if b.kind == "gauduchon":
        return make_gauduchon_torus(b.grid, b.eps)
    return make_flat_torus(b.dim, b.grid)


def build_spec(cfg: ExperimentConfig, base=None):
    base = base or build_base(cfg)
    spec = make_split_bundle(base, cfg.bundle.degrees)
    beta = cfg.bundle.beta
    if beta is not None:
        if beta.kind == "constant":
            coeffs = {(int(k), int(a), int(b)): complex(re, im) for k, a, b, re, im in beta.entries}
            arr = constant_beta(spec, coeffs)
        else:
            a, b = beta.slot
            arr = packet_beta(spec, beta.amplitude, a, b, beta.x0, beta.mode)
        spec = deform(spec, arr)
    return spec


def build_metric(spec, m: MetricSection, seeds: SeedStream):
    if m.kind == "background":
        return spec.identity_metric()
    if m.kind == "conformal":
        coords = spec.base.coords()
        phase = 2 * np.pi * sum(int(k) * x for k, x in zip(m.mode, coords))
        phi = m.amplitude * np.cos(phase)
        w = m.weights or [1.0] * spec.rank
        return conformal_metric(spec, [wa * phi for wa in w])
    return random_metric(spec, seeds.next_seed(), m.amplitude, m.traceless)


def build(cfg: ExperimentConfig) -> Experiment:
    seeds = SeedStream(cfg.seed)
    spec = build_spec(cfg)
    it = cfg.integrator
    icfg = IntegratorConfig(it.scheme, it.dt, it.t_end, it.safety, it.tolerance, it.renormalize)
    icfg.validate(spec.base)
    states = [FlowState.initial(spec, build_metric(spec, cfg.initial_metric, seeds), it.renormalize)]
    if cfg.pair is not None:
        states.append(FlowState.initial(spec, build_metric(spec, cfg.pair, seeds), it.renormalize))
    mo = cfg.monitors
    sched = MonitorSchedule(mo.every, mo.times, tuple(tuple(float(v) for v in p) for p in mo.hym_pairs))
    return Experiment(cfg, spec, states, icfg, sched)


def execute(exp: Experiment, on_sample=None):
    """Run the experiment in memory and return its traces."""
    if len(exp.states) == 1:
        tr = run(exp.states[0], exp.integrator, exp.schedule,
                 callback=(lambda s: on_sample(s)) if on_sample else None)
        return [tr]
    t1, t2 = run_pair(exp.states[0], exp.states[1], exp.integrator, exp.schedule,
                      callback=(lambda a, b: on_sample(a, b)) if on_sample else None)
    return [t1, t2]


def atomic_write(path, data: str | bytes):
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_names(cfg: ExperimentConfig) -> list:
    name = cfg.outputs.name
    return [name] if cfg.pair is None else [f"{name}.1", f"{name}.2"]


def _dump_failure(out: Path, cfg: ExperimentConfig, exc, last):
    info = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("min_eig", "location", "cond", "residual", "steps"):
        v = getattr(exc, attr, None)
        if v is not None:
            info[attr] = v if not isinstance(v, tuple) else list(v)
    arrays = {}
    if last:
        info["t"] = float(last[0].t)
        info["last_record"] = last[0].monitors.to_dict() if last[0].monitors is not None else None
        for i, s in enumerate(last):
            arrays[f"h{i + 1}"] = s.h.values
            arrays[f"gauge{i + 1}"] = s.gauge
    path = out / f"{cfg.outputs.name}.failure.json"
    atomic_write(path, json.dumps(info, indent=2, default=float) + "\n")
    if arrays:
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        atomic_write(out / f"{cfg.outputs.name}.final.npz", buf.getvalue())
    return path


def run_config(cfg: ExperimentConfig, out_dir=None, write=True) -> RunResult:
    """Build, run and persist an experiment.

    Trace files are only written once the whole run has succeeded, so a
    failing run never leaves a partial trace behind. Numerical failures
    write a `<name>.failure.json` dump (plus the last sampled metric) and
    raise RunFailure; an under-resolved metric counts as a numerical failure.
    """
    out = Path(out_dir if out_dir is not None else cfg.outputs.dir)
    exp = build(cfg)
    last = []

    def keep(*states):
        last[:] = states

    try:
        traces = execute(exp, keep)
    except (NumericalBreakdown, ConvergenceError, StabilityError, FloatingPointError, AnalyticsError) as exc:
        # AnalyticsError here means theta lost H-self-adjointness, i.e. the
        # grid no longer resolves the metric
        dump = _dump_failure(out, cfg, exc, last) if write else None
        raise RunFailure(f"{type(exc).__name__}: {exc}", dump) from exc
    result = RunResult(traces)
    if not write:
        return result
    contents = []
    for name, tr in zip(trace_names(cfg), traces):
        if "jsonl" in cfg.outputs.formats:
            contents.append((out / f"{name}.jsonl", tr.to_jsonl()))
        if "csv" in cfg.outputs.formats:
            contents.append((out / f"{name}.csv", tr.to_csv()))
    if "svg" in cfg.outputs.formats:
        from .plots import render_trace

        for name, tr in zip(trace_names(cfg), traces):
            for group, svg in render_trace(tr.rows(), title=name).items():
                contents.append((out / f"{name}.{group}.svg", svg))
    for path, data in contents:
        atomic_write(path, data)
        result.files.append(path)
    return result

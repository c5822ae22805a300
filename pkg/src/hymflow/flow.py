"""Time integration of the Hermitian-Yang-Mills flow.

The unknown is h = K^-1 H relative to the fixed background K, evolving by

    dh/dt = -2 h (theta_H - lambda),

with theta_H = i Lambda F_H. Because h theta_H is Hermitian, every stage is
re-Hermitised and checked for positivity.

Renormalised frame
------------------
On split bundles with distinct slopes the metric degenerates exponentially
(h ~ diag(e^{-2 pi t}, e^{2 pi t}) for degrees (1, -1)), and the breakdown
threshold on cond(h) would be reached after a couple of time units. A
constant diagonal g is a holomorphic automorphism of a split bundle, so the
state may keep h~ = g h g instead of h, where g is chosen after each step to
balance the log-means of the diagonal. The accumulated log g is stored in
`FlowState.gauge`. Eigenvalues, |Phi|^2_H, det h, tr F and every energy are
unchanged by this frame change, and the true metric is g^-1 h~ g^-1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import matfield as mf
from .bundle import (
    BundleSpec,
    MetricField,
    NumericalBreakdown,
    check_conditioning,
    theta_array,
)


class PositivityError(NumericalBreakdown):
    pass


class StabilityError(ValueError):
    """Integrator configuration violates the explicit stability bound."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None, steps=None):
        super().__init__(msg)
        self.residual = residual
        self.steps = steps


SCHEMES = ("euler", "rk4", "adaptive")


def stable_dt(base, safety=0.2) -> float:
    """safety * dx^2 / sup|g^-1| with the trace norm of the inverse metric."""
    gnorm = float(np.max(np.real(sum(base.ginv[j, j] for j in range(base.dim_c)))))
    return safety * base.spacing ** 2 / gnorm


@dataclass
class IntegratorConfig:
    scheme: str = "rk4"
    dt: Optional[float] = None  # None: largest step allowed by the bound
    t_end: float = 1.0
    safety: float = 0.2
    tolerance: float = 1e-8
    renormalize: bool = False

    def validate(self, base) -> float:
        if self.scheme not in SCHEMES:
            raise StabilityError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.t_end < 0:
            raise StabilityError("t_end must be nonnegative")
        if not self.safety > 0:
            raise StabilityError("safety must be positive")
        bound = stable_dt(base, self.safety)
        dt = bound if self.dt is None else float(self.dt)
        if not dt > 0:
            raise StabilityError("dt must be positive")
        if dt > bound * (1 + 1e-12):
            raise StabilityError(
                f"dt={dt:.3e} exceeds the stability bound {bound:.3e} "
                f"(safety {self.safety}, grid {base.grid})"
            )
        return dt


@dataclass(eq=False)
class FlowState:
    t: float
    h: MetricField
    spec: BundleSpec
    lambda_const: float
    gauge: np.ndarray = None  # log of the diagonal frame change g
    ref: Optional[dict] = None  # initial det h and tr F, for drift monitors
    monitors: Optional[object] = None

    def __post_init__(self):
        if self.gauge is None:
            self.gauge = np.zeros(self.spec.rank)

    @classmethod
    def initial(cls, spec: BundleSpec, h: Optional[MetricField] = None, renormalize=False):
        if h is None:
            h = spec.identity_metric()
        st = cls(0.0, h, spec, spec.lambda_const)
        if renormalize:
            st = renormalized(st)
        st.ref = reference_data(st)
        return st

    def true_metric(self) -> np.ndarray:
        """h in the original frame (may be badly conditioned)."""
        e = np.exp(-self.gauge)
        return _scale(self.h.values, e, e)

    def theta(self) -> np.ndarray:
        return theta_array(self.h.values, self.spec)


def _scale(a, left, right):
    """diag(left) a diag(right) for a matrix field."""
    nd = a.ndim - 2
    L = left.reshape((-1, 1) + (1,) * nd)
    R = right.reshape((1, -1) + (1,) * nd)
    return a * L * R


def reference_data(state: FlowState) -> dict:
    from .bundle import curvature_arrays

    h = state.h.values
    F = curvature_arrays(h, state.spec)
    return {"det": mf.det(h), "trF": np.einsum("jkaa...->jk...", F)}


def renormalized(state: FlowState) -> FlowState:
    """Apply the balancing diagonal frame change (split bundles only)."""
    if not state.spec.is_split:
        raise ValueError("frame renormalisation needs a split bundle")
    h = state.h.values
    r = h.shape[0]
    ell = np.array([np.mean(np.log(np.real(h[j, j]))) for j in range(r)])
    a = -0.5 * (ell - ell.mean())
    e = np.exp(a)
    hn = _scale(h, e, e)
    return FlowState(state.t, MetricField(mf.herm(hn), state.h.mode, state.h.twist), state.spec,
                     state.lambda_const, state.gauge + a, state.ref, None)


def rhs(h, spec: BundleSpec, lam: float, hinv=None):
    """-2 h (theta_H - lambda), Hermitian part."""
    th = theta_array(h, spec, hinv)
    return -2.0 * mf.herm(mf.mul(h, th) - lam * h)


def _check_stage(h, where=""):
    try:
        check_conditioning(h)
    except NumericalBreakdown as exc:
        if exc.cond is None:
            raise PositivityError(f"{where}: {exc}", exc.min_eig, exc.location) from None
        raise


_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def _advance(h, spec, lam, dt, scheme):
    """One explicit step; returns (new h, error estimate or None)."""
    f = lambda x: rhs(x, spec, lam)
    if scheme == "euler":
        out = mf.herm(h + dt * f(h))
        _check_stage(out, "euler")
        return out, None
    if scheme == "rk4":
        k1 = f(h)
        h2 = mf.herm(h + 0.5 * dt * k1)
        _check_stage(h2, "rk4 stage 2")
        k2 = f(h2)
        h3 = mf.herm(h + 0.5 * dt * k2)
        _check_stage(h3, "rk4 stage 3")
        k3 = f(h3)
        h4 = mf.herm(h + dt * k3)
        _check_stage(h4, "rk4 stage 4")
        k4 = f(h4)
        out = mf.herm(h + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        _check_stage(out, "rk4")
        return out, None
    # Dormand-Prince 5(4)
    ks = []
    for i in range(7):
        hi = h
        for a, k in zip(_DP_A[i], ks):
            if a:
                hi = hi + dt * a * k
        if i:
            hi = mf.herm(hi)
            _check_stage(hi, f"dopri stage {i + 1}")
        ks.append(f(hi))
    out = h + dt * sum(b * k for b, k in zip(_DP_B5, ks) if b)
    low = h + dt * sum(b * k for b, k in zip(_DP_B4, ks) if b)
    out = mf.herm(out)
    _check_stage(out, "dopri")
    err = float(np.max(np.abs(out - low)) / max(1.0, float(np.max(np.abs(out)))))
    return out, err


def step(state: FlowState, cfg: IntegratorConfig, dt: Optional[float] = None) -> FlowState:
    """Advance by one step of size dt (default: the configured step)."""
    dmax = cfg.validate(state.spec.base)
    dt = dmax if dt is None else dt
    if dt > dmax * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds {dmax:.3e}")
    scheme = "rk4" if cfg.scheme == "adaptive" else cfg.scheme
    h, _ = _advance(state.h.values, state.spec, state.lambda_const, dt, scheme)
    new = FlowState(state.t + dt, MetricField(h, state.h.mode, state.h.twist), state.spec,
                    state.lambda_const, state.gauge.copy(), state.ref, None)
    if cfg.renormalize:
        new = renormalized(new)
    return new


def advance_to(state: FlowState, cfg: IntegratorConfig, t_target: float) -> FlowState:
    """Integrate from state.t to t_target."""
    span = t_target - state.t
    if span <= 0:
        return state
    dmax = cfg.validate(state.spec.base)
    if cfg.scheme != "adaptive":
        nsteps = max(1, int(math.ceil(span / dmax - 1e-9)))
        dt = span / nsteps
        s = state
        for _ in range(nsteps):
            s = step(s, cfg, dt)
        # remove accumulated rounding in t
        s.t = t_target
        return s
    return _advance_adaptive(state, cfg, t_target, dmax)


def _advance_adaptive(state, cfg, t_target, dmax):
    s = state
    dt = dmax
    h = s.h.values
    t = s.t
    gauge = s.gauge.copy()
    while t < t_target - 1e-14:
        dt = min(dt, dmax, t_target - t)
        new, err = _advance(h, s.spec, s.lambda_const, dt, "dopri")
        if err <= cfg.tolerance or dt <= 1e-12:
            t += dt
            h = new
            if cfg.renormalize:
                tmp = renormalized(FlowState(t, MetricField(h, s.h.mode, s.h.twist), s.spec,
                                             s.lambda_const, gauge))
                h, gauge = tmp.h.values, tmp.gauge
            fac = 0.9 * (cfg.tolerance / max(err, 1e-300)) ** 0.2
            dt = dt * min(4.0, max(0.2, fac))
        else:
            dt = dt * max(0.2, 0.9 * (cfg.tolerance / err) ** 0.2)
    return FlowState(t_target, MetricField(h, s.h.mode, s.h.twist), s.spec, s.lambda_const,
                     gauge, s.ref, None)


# -- traces -------------------------------------------------------------------

@dataclass
class MonitorSchedule:
    every: float = 0.1
    times: Optional[Sequence[float]] = None
    hym_pairs: Sequence = ((1.0, 0.0), (1.0, 1.0), (2.0, 0.0), (2.0, 1.0))
    snapshots: bool = False

    def sample_times(self, t_end: float) -> list:
        if self.times is not None:
            ts = sorted(set(float(t) for t in self.times if 0 <= t <= t_end) | {0.0})
            return ts
        if t_end == 0:
            return [0.0]
        n = max(1, int(round(t_end / self.every)))
        ts = [t_end * i / n for i in range(n + 1)]
        return ts


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)  # MonitorRecord
    snapshots: list = field(default_factory=list)
    extra: list = field(default_factory=list)  # per-sample dicts of additional columns

    @property
    def times(self):
        return np.array([r.t for r in self.records])

    def series(self, name: str):
        from .analytics import record_value

        return np.array([record_value(r, name) for r in self.records])

    def rows(self) -> list:
        out = []
        for i, r in enumerate(self.records):
            row = r.to_dict()
            if i < len(self.extra) and self.extra[i]:
                row.update(self.extra[i])
            out.append(row)
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(row, sort_keys=False, allow_nan=True) + "\n" for row in self.rows())

    def to_csv(self) -> str:
        from .analytics import flatten_row

        rows = [flatten_row(r) for r in self.rows()]
        if not rows:
            return ""
        cols = list(rows[0].keys())
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join(_fmt(r.get(c)) for c in cols))
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run(state0: FlowState, cfg: IntegratorConfig, schedule: Optional[MonitorSchedule] = None,
        callback=None) -> FlowTrace:
    """Integrate to cfg.t_end, recording monitors at the scheduled times."""
    from .analytics import monitors

    schedule = schedule or MonitorSchedule()
    cfg.validate(state0.spec.base)
    trace = FlowTrace()
    s = state0
    if s.ref is None:
        s.ref = reference_data(s)
    for t in schedule.sample_times(cfg.t_end):
        s = advance_to(s, cfg, t)
        rec = monitors(s, schedule.hym_pairs)
        s.monitors = rec
        trace.records.append(rec)
        if schedule.snapshots:
            trace.snapshots.append(s)
        if callback is not None:
            callback(s)
    trace.final = s
    return trace


def transported_pair(s1: FlowState, s2: FlowState):
    """(h1, theta1, h2, theta2) with run 2 expressed in run 1's frame."""
    q = np.exp(s1.gauge - s2.gauge)
    h2 = _scale(s2.h.values, q, q)
    th2 = _scale(s2.theta(), 1.0 / q, q)
    return s1.h.values, s1.theta(), h2, th2


def run_pair(s1: FlowState, s2: FlowState, cfg: IntegratorConfig,
             schedule: Optional[MonitorSchedule] = None, callback=None):
    """Two flows on one bundle advanced in lockstep with pair diagnostics."""
    from .analytics import monitors, pair_distance, trace_gap

    schedule = schedule or MonitorSchedule()
    cfg.validate(s1.spec.base)
    t1, t2 = FlowTrace(), FlowTrace()
    for s in (s1, s2):
        if s.ref is None:
            s.ref = reference_data(s)
    for t in schedule.sample_times(cfg.t_end):
        s1 = advance_to(s1, cfg, t)
        s2 = advance_to(s2, cfg, t)
        r1 = monitors(s1, schedule.hym_pairs)
        r2 = monitors(s2, schedule.hym_pairs)
        th, eg, cb = pair_distance(s1, s2)
        extra = {"pair_theta_L2": th, "pair_eig_L2": eg, "pair_cond": cb,
                 "pair_trace_gap": trace_gap(s1, s2)}
        t1.records.append(r1)
        t2.records.append(r2)
        t1.extra.append(extra)
        t2.extra.append({})
        if callback is not None:
            callback(s1, s2)
    t1.final, t2.final = s1, s2
    return t1, t2


# -- gauge picture ------------------------------------------------------------

@dataclass(eq=False)
class ConnectionData:
    """Unitary connection A(t) = sigma(A0) on (E, H0), as a dbar-operator.

    dbar_{A(t)} = dbar_E + alpha with alpha an End-valued (0,1) form; the
    (1,0) part is fixed by unitarity with respect to H0.
    """

    alpha: np.ndarray  # (n, r, r, *grid)
    metric: np.ndarray  # H0 (relative to K)
    spec: BundleSpec

    def as_spec(self) -> BundleSpec:
        beta = self.alpha if self.spec.beta is None else self.alpha + self.spec.beta
        return BundleSpec(self.spec.base, self.spec.degrees, beta, self.spec.twist)

    def curvature(self):
        from .bundle import curvature_arrays

        return curvature_arrays(self.metric, self.as_spec())

    def mean_curvature(self):
        return theta_array(self.metric, self.as_spec())


def gauge_pair(state: FlowState, state0: FlowState):
    """sigma = positive square root of H0^-1 H(t) and the connection sigma(A0).

    sigma is self-adjoint and positive with respect to H0. Both states must
    share a frame; frames are aligned here through the stored gauges.
    """
    q = np.exp(state.gauge - state0.gauge)
    h0 = _scale(state0.h.values, q, q)  # H0 in the frame of `state`
    h = state.h.values
    s0 = mf.sqrtm_pd(h0)
    s0i = mf.inv(s0)
    M = mf.herm(mf.mul3(s0i, h, s0i))
    sigma = mf.mul3(s0i, mf.sqrtm_pd(M), s0)
    spec = state.spec
    sig_inv = mf.inv(sigma)
    dsig = spec.d_anti(sigma)
    n = spec.base.dim_c
    alpha = np.empty((n,) + sigma.shape, dtype=complex)
    for k in range(n):
        d = dsig[k]
        if spec.beta is not None:
            d = d + spec.beta_comm(k, sigma)
        alpha[k] = -mf.mul(d, sig_inv)
    return ConnectionData(alpha, h0, spec), sigma


# -- perturbed equation ------------------------------------------------------

def _log_rel(h, k):
    """log(K^-1 H) for positive Hermitian fields h (H) and k (K)."""
    ks = mf.sqrtm_pd(k)
    ksi = mf.inv(ks)
    L = mf.logm_pd(mf.herm(mf.mul3(ksi, h, ksi)))
    return mf.mul3(ksi, L, ks)


def perturbed_residual(H, spec: BundleSpec, K=None, eps=0.1):
    """(L2 norm, field) of theta_H - lambda + eps log(K^-1 H).

    theta is evaluated in a balanced diagonal frame so that exponentially
    degenerate solutions stay well conditioned; diagonal frame changes are
    automorphisms of split bundles and leave the residual invariant when K
    is diagonal.
    """
    h = H.values if isinstance(H, MetricField) else H
    k = spec.identity_metric().values if K is None else (K.values if isinstance(K, MetricField) else K)
    lam = spec.lambda_const
    lg = _log_rel(h, k)
    if spec.is_split:
        st = renormalized(FlowState(0.0, MetricField(h), spec, lam))
        e = np.exp(st.gauge)
        th = _scale(st.theta(), e, 1.0 / e)
        hn = st.h.values
        R_frame = _scale(th - lam * mf.identity(spec.rank, spec.base.shape) + eps * lg, 1.0 / e, e)
        norm_sq = mf.hnorm_sq(R_frame, hn)
    else:
        th = theta_array(h, spec)
        R_frame = th - lam * mf.identity(spec.rank, spec.base.shape) + eps * lg
        norm_sq = mf.hnorm_sq(R_frame, h)
    return float(np.sqrt(spec.base.integrate(norm_sq))), R_frame


def perturbed_distance(H, spec: BundleSpec) -> float:
    """|| theta_H - (2 pi/Vol) Phi^HN ||_{L2} in the background frame."""
    h = H.values if isinstance(H, MetricField) else H
    if spec.is_split:
        st = renormalized(FlowState(0.0, MetricField(h), spec, spec.lambda_const))
        e = np.exp(st.gauge)
        th = _scale(st.theta(), e, 1.0 / e)
    else:
        th = theta_array(h, spec)
    target = 2 * np.pi / spec.base.volume * np.array(spec.degrees, dtype=float)
    D = th.copy()
    for a in range(spec.rank):
        D[a, a] -= target[a]
    dens = np.real(mf.trace(mf.mul(D, mf.dagger(D))))
    return float(np.sqrt(max(0.0, spec.base.integrate(dens))))


def _solve_linear(base, eps, rhs, tol):
    """(eps - Lambda i d dbar) u = rhs for a real scalar field u."""
    sym = base.flat_symbol()  # nonpositive
    if base.is_flat:
        u = base.ifft(base.fft(rhs) / (eps - sym))
        return np.real(u)
    from scipy.sparse.linalg import LinearOperator, gmres

    shape = base.shape
    N = int(np.prod(shape))

    def A(v):
        v = v.reshape(shape)
        return (eps * v - base.ddbar_contract(v)).ravel()

    def M(v):
        v = v.reshape(shape)
        return base.ifft(base.fft(v) / (eps - sym)).ravel()

    op = LinearOperator((N, N), matvec=A, dtype=complex)
    pre = LinearOperator((N, N), matvec=M, dtype=complex)
    b = np.asarray(rhs, dtype=complex).ravel()
    u, info = gmres(op, b, rtol=tol, atol=0.0, M=pre, restart=60, maxiter=200)
    if info != 0:
        raise ConvergenceError(f"GMRES did not converge (info={info})")
    return np.real(u.reshape(shape))


def solve_perturbed(spec: BundleSpec, K=None, eps: float = 0.1, tol: float = 1e-8,
                    max_steps: int = 200000, cfg: Optional[IntegratorConfig] = None) -> MetricField:
    """Solve theta_H - lambda + eps log(K^-1 H) = 0.

    Split bundles with diagonal K decouple into scalar linear equations,
    (eps - Lambda i d dbar) u_a = lambda - theta_{K0,a} + eps psi_a with
    H = diag(e^{u_a}) and K = diag(e^{psi_a}); these are solved directly.
    Anything else uses the damped flow dh/dt = -2 h (Phi(H) + eps log h).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    base = spec.base
    r = spec.rank
    lam = spec.lambda_const
    kv = spec.identity_metric().values if K is None else (K.values if isinstance(K, MetricField) else np.asarray(K))
    offdiag = kv.copy()
    for a in range(r):
        offdiag[a, a] = 0
    if spec.is_split and not np.any(offdiag) and np.all(spec.theta_K[np.eye(r, dtype=bool) == False] == 0):
        h = np.zeros_like(kv)
        for a in range(r):
            psi = np.log(np.real(kv[a, a]))
            b = lam - np.real(spec.theta_K[a, a]) + eps * psi
            u = _solve_linear(base, eps, b, tol * 1e-4)
            h[a, a] = np.exp(u)
        H = MetricField(h, "relative", spec.twist)
        res, _ = perturbed_residual(H, spec, kv, eps)
        if not res < tol:
            raise ConvergenceError(f"perturbed solve residual {res:.3e} above tolerance {tol:.1e}",
                                   residual=res)
        return H
    return _damped_flow(spec, kv, eps, tol, max_steps, cfg)


def _damped_flow(spec, kv, eps, tol, max_steps, cfg):
    cfg = cfg or IntegratorConfig()
    dt = cfg.validate(spec.base)
    lam = spec.lambda_const
    eye = mf.identity(spec.rank, spec.base.shape)

    def f(h):
        th = theta_array(h, spec)
        return -2.0 * mf.herm(mf.mul(h, th - lam * eye + eps * _log_rel(h, kv)))

    h = kv.copy()
    check_every = 50
    res = np.inf
    for n in range(max_steps):
        if n % check_every == 0:
            res, _ = perturbed_residual(h, spec, kv, eps)
            if res < tol:
                return MetricField(h, "relative", spec.twist)
        k1 = f(h)
        k2 = f(mf.herm(h + 0.5 * dt * k1))
        k3 = f(mf.herm(h + 0.5 * dt * k2))
        k4 = f(mf.herm(h + dt * k3))
        h = mf.herm(h + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        _check_stage(h, "damped flow")
    res, _ = perturbed_residual(h, spec, kv, eps)
    if res < tol:
        return MetricField(h, "relative", spec.twist)
    raise ConvergenceError(
        f"damped flow did not reach tolerance {tol:.1e} in {max_steps} steps; residual {res:.3e}",
        residual=res, steps=max_steps)

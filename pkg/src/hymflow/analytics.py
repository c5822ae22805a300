"""Eigenvalue fields of the mean curvature and the scalar functionals built on them."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from . import matfield as mf

ADJOINT_TOL = 1e-6


class AnalyticsError(ValueError):
    pass


@dataclass(eq=False)
class EigenField:
    """Per-point eigenvalues sorted nonincreasing, shape (r, *grid)."""

    values: np.ndarray

    @property
    def rank(self):
        return self.values.shape[0]

    def lower_sum(self, k):
        """lambda_{L,k}: sum of the k smallest eigenvalues."""
        return self.values[self.rank - k:].sum(axis=0)

    def upper_sum(self, k):
        """lambda_{U,k}: sum of the k largest eigenvalues."""
        return self.values[:k].sum(axis=0)


def _hermitian_frame(theta, h):
    """L^-1 (h theta) L^-dagger with h = L L^dagger: Hermitian, same spectrum."""
    ht = mf.mul(h, theta)
    scale = float(np.max(np.abs(ht))) + 1.0
    defect = float(np.max(np.abs(ht - mf.dagger(ht)))) / scale
    if defect > ADJOINT_TOL:
        raise AnalyticsError(f"theta is not self-adjoint for the metric (defect {defect:.2e})")
    L = np.linalg.cholesky(mf.to_last(h))
    Li = np.linalg.inv(L)
    M = Li @ mf.to_last(ht) @ np.conj(np.swapaxes(Li, -1, -2))
    return mf.from_last(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))))


def eigen_field(theta, H) -> EigenField:
    """Sorted spectrum of an H-self-adjoint endomorphism field."""
    h = H.values if hasattr(H, "values") else np.asarray(H)
    theta = np.asarray(theta)
    M = _hermitian_frame(theta, h)
    w = mf.eigvalsh(M)  # ascending
    return EigenField(np.ascontiguousarray(w[::-1]))


# -- monitor record -------------------------------------------------------

@dataclass
class MonitorRecord:
    t: float
    hatL: float
    hatU: float
    mL: float
    mU: float
    hatL_k: list
    hatU_k: list
    mL_k: list
    mU_k: list
    phi_norm_sq: float
    phi_sup_sq: float
    theta_norm_sq: float
    theta_sup_sq: float
    grad_energy: float
    hym: dict
    det_drift: float
    trF_drift: float
    hn_distance: float
    limit_distance: float
    eig_variance: float

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                v = [float(x) for x in v]
            elif isinstance(v, dict):
                v = {k: float(x) for k, x in v.items()}
            else:
                v = float(v)
            d[f.name] = v
        return d


def hym_key(rho, N) -> str:
    return f"rho{rho:g}_N{N:g}"


def flatten_row(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if isinstance(v, list):
            for i, x in enumerate(v):
                out[f"{k}.{i + 1}"] = x
        elif isinstance(v, dict):
            for kk, x in v.items():
                out[f"{k}.{kk}"] = x
        else:
            out[k] = v
    return out


def record_value(rec: MonitorRecord, name: str):
    """Look up `name` or a flattened `name.idx` / `hym.key` column."""
    if "." in name:
        head, tail = name.split(".", 1)
        v = getattr(rec, head)
        if isinstance(v, dict):
            return v[tail]
        return v[int(tail) - 1]
    return getattr(rec, name)


def _slope_target(spec):
    return 2 * np.pi / spec.base.volume * np.array(spec.degrees, dtype=float)


def grad_energy_density(theta, h, spec):
    """|D_H theta|^2 = 2 |dbar_E theta|^2_{H, omega} pointwise."""
    base = spec.base
    n = base.dim_c
    d = spec.d_anti(theta)
    if spec.beta is not None:
        d = [d[k] + spec.beta_comm(k, theta) for k in range(n)]
    hinv = mf.inv(h)
    adj = [mf.mul3(hinv, mf.dagger(x), h) for x in d]
    if base.is_flat:
        acc = sum(mf.trace(mf.mul(d[k], adj[k])) for k in range(n))
    else:
        acc = sum(base.ginv[k, j] * mf.trace(mf.mul(d[k], adj[j])) for j in range(n) for k in range(n))
    return 2.0 * np.real(acc)


def monitors(state, hym_pairs=((1.0, 0.0), (1.0, 1.0), (2.0, 0.0), (2.0, 1.0))) -> MonitorRecord:
    from .bundle import curvature_arrays

    spec = state.spec
    base = spec.base
    h = state.h.values
    r = spec.rank
    vol = base.volume
    F = curvature_arrays(h, spec)
    theta = _theta_from_F(F, base)
    ef = eigen_field(theta, h)
    lam = ef.values
    lower = [ef.lower_sum(k) for k in range(1, r + 1)]
    upper = [ef.upper_sum(k) for k in range(1, r + 1)]
    mean = lambda f: float(np.real(base.integrate(f))) / vol
    phi_sq = ((lam - state.lambda_const) ** 2).sum(axis=0)
    th_sq = (lam ** 2).sum(axis=0)
    target = _slope_target(spec)
    diff_sq = ((lam - target.reshape((r,) + (1,) * (lam.ndim - 1))) ** 2).sum(axis=0)
    hn_sq = np.real(mf.trace(mf.mul(theta - _diag_field(target, base), mf.dagger(theta - _diag_field(target, base)))))
    means = np.array([mean(lam[j]) for j in range(r)])
    var = sum(mean((lam[j] - means[j]) ** 2) for j in range(r))
    if state.ref is not None:
        det_drift = float(np.max(np.abs(mf.det(h) / state.ref["det"] - 1.0)))
        trF = np.einsum("jkaa...->jk...", F)
        trF_drift = float(np.max(np.abs(trF - state.ref["trF"])))
    else:
        det_drift = trF_drift = float("nan")
    hym = {hym_key(rho, N): hym_from_eigs(ef, base, rho, N) for rho, N in hym_pairs}
    return MonitorRecord(
        t=float(state.t),
        hatL=float(np.min(lower[0])),
        hatU=float(np.max(upper[0])),
        mL=mean(lower[0]),
        mU=mean(upper[0]),
        hatL_k=[float(np.min(x)) for x in lower],
        hatU_k=[float(np.max(x)) for x in upper],
        mL_k=[mean(x) for x in lower],
        mU_k=[mean(x) for x in upper],
        phi_norm_sq=float(np.real(base.integrate(phi_sq))),
        phi_sup_sq=float(np.max(phi_sq)),
        theta_norm_sq=float(np.real(base.integrate(th_sq))),
        theta_sup_sq=float(np.max(th_sq)),
        grad_energy=float(np.real(base.integrate(grad_energy_density(theta, h, spec)))),
        hym=hym,
        det_drift=det_drift,
        trF_drift=trF_drift,
        hn_distance=float(np.sqrt(max(0.0, np.real(base.integrate(hn_sq))))),
        limit_distance=float(np.sqrt(max(0.0, np.real(base.integrate(diff_sq))))),
        eig_variance=float(var),
    )


def _theta_from_F(F, base):
    n = base.dim_c
    if base.is_flat:
        return sum(F[j, j] for j in range(n))
    return sum(base.ginv[k, j] * F[j, k] for j in range(n) for k in range(n))


def _diag_field(vals, base):
    r = len(vals)
    out = np.zeros((r, r) + base.shape, dtype=complex)
    for a in range(r):
        out[a, a] = vals[a]
    return out


def hn_projection_distance(state, spec=None) -> float:
    """|| theta_H - (2 pi/Vol) Phi^HN ||_{L2(K)}.

    For the bundles built here the HN filtration is the flag of leading
    summands, orthogonal for the background metric, so Phi^HN is the
    constant diagonal of degrees. K is the background of the state's frame.
    """
    spec = spec or state.spec
    theta = state.theta()
    base = spec.base
    D = theta - _diag_field(_slope_target(spec), base)
    dens = np.real(mf.trace(mf.mul(D, mf.dagger(D))))
    return float(np.sqrt(max(0.0, np.real(base.integrate(dens)))))


def pair_distance(s1, s2):
    """(||theta2 - theta1||_{L2(H1)}, ||lambda2 - lambda1||_{L2}, sup cond(sigma))."""
    from .flow import transported_pair

    h1, th1, h2, th2 = transported_pair(s1, s2)
    base = s1.spec.base
    D = th2 - th1
    dens = mf.hnorm_sq(D, h1)
    e1 = eigen_field(th1, h1).values
    e2 = eigen_field(th2, h2).values
    ed = ((e2 - e1) ** 2).sum(axis=0)
    c = cond_sigma(h1, h2)
    return (float(np.sqrt(max(0.0, np.real(base.integrate(dens))))),
            float(np.sqrt(max(0.0, np.real(base.integrate(ed))))),
            float(np.max(c)))


def cond_sigma(h1, h2):
    """Pointwise cond(sigma) for sigma^2 = h1^-1 h2, i.e. sqrt(max/min eig)."""
    L = np.linalg.cholesky(mf.to_last(h1))
    Li = np.linalg.inv(L)
    M = Li @ mf.to_last(h2) @ np.conj(np.swapaxes(Li, -1, -2))
    w = np.linalg.eigvalsh(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))))
    return np.sqrt(w[..., -1] / w[..., 0])


def trace_gap(s1, s2) -> float:
    """sup tr(h12 + h12^-1) - 2r with h12 = H1^-1 H2."""
    from .flow import transported_pair

    h1, _, h2, _ = transported_pair(s1, s2)
    h12 = mf.mul(mf.inv(h1), h2)
    r = h1.shape[0]
    val = np.real(mf.trace(h12) + mf.trace(mf.inv(h12))) - 2 * r
    return float(np.max(val))


def hym_from_eigs(ef: EigenField, base, rho, N) -> float:
    if rho < 1:
        raise AnalyticsError("rho must be at least 1")
    s = (np.abs(base.volume / (2 * np.pi) * ef.values + N) ** rho).sum(axis=0)
    return float(np.real(base.integrate(s)))


def hym_functional(state, rho: float, N: float) -> float:
    """HYM_{rho,N} = int sum_j |(Vol/2pi) lambda_j + N|^rho.

    The eigenvalues of Lambda F_A for A = sigma(A0) are those of theta_H,
    since the two curvatures are conjugate by sigma.
    """
    if rho < 1:
        raise AnalyticsError("rho must be at least 1")
    ef = eigen_field(state.theta(), state.h.values)
    return hym_from_eigs(ef, state.spec.base, rho, N)


def eig_variance(ef: EigenField, base) -> float:
    vol = base.volume
    tot = 0.0
    for j in range(ef.rank):
        m = float(np.real(base.integrate(ef.values[j]))) / vol
        tot += float(np.real(base.integrate((ef.values[j] - m) ** 2))) / vol
    return tot


# -- finite-dimensional checks ----------------------------------------------

def _pd_matrix(rng, r):
    A = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    return A @ A.conj().T * np.exp(rng.uniform(-3, 3)) + 1e-3 * np.eye(r)


def _self_adjoint_for(rng, H):
    r = H.shape[0]
    X = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    return np.linalg.solve(H, X + X.conj().T)


def estek_ratios(r: int, count: int, seed: int = 0) -> np.ndarray:
    """|lambda(H2)-lambda(H1)|^2 / (cond(sigma) |theta2-theta1|^2_{H1}) on random pairs."""
    rng = np.random.default_rng(seed)
    out = np.empty(count)
    for i in range(count):
        H1, H2 = _pd_matrix(rng, r), _pd_matrix(rng, r)
        t1, t2 = _self_adjoint_for(rng, H1), _self_adjoint_for(rng, H2)
        l1 = eigen_field(t1[:, :, None], H1[:, :, None]).values[:, 0]
        l2 = eigen_field(t2[:, :, None], H2[:, :, None]).values[:, 0]
        D = t2 - t1
        n2 = float(np.real(np.trace(D @ np.linalg.solve(H1, D.conj().T) @ H1)))
        c = float(cond_sigma(H1[:, :, None], H2[:, :, None])[0])
        out[i] = np.sum((l2 - l1) ** 2) / (c * n2)
    return out

"""Chern-Weil integrals: degrees and the rank-2 second Chern form on surfaces."""

from __future__ import annotations

import numpy as np

from . import matfield as mf
from .bundle import BundleSpec, MetricField, curvature_arrays, theta_array
from .geometry import wedge_11_density

TRACE_TOL = 1e-6


class ChernWeilError(ValueError):
    pass


def _h(H):
    return H.values if isinstance(H, MetricField) else np.asarray(H)


def degree(H, spec: BundleSpec) -> float:
    """(i/2pi) int tr F_H ^ omega^{n-1}/(n-1)!, i.e. (1/2pi) int tr theta_H."""
    th = theta_array(_h(H), spec)
    return float(np.real(spec.base.integrate(mf.trace(th)))) / (2 * np.pi)


def chern2_parts(H, spec: BundleSpec) -> dict:
    """Pointwise pieces of the rank-2 second Chern form computation.

    Returns the density of tr(F_perp ^ F_perp) relative to omega^2/2, the
    squared norms |i F_perp|^2_{H,omega} and |i Lambda F_perp|^2_H, all real
    fields on the grid.
    """
    base = spec.base
    if base.dim_c != 2 or spec.rank != 2:
        raise ChernWeilError("the second Chern form computation needs rank 2 on a complex surface")
    h = _h(H)
    F = curvature_arrays(h, spec)
    n = 2
    eye = mf.identity(2, base.shape)
    Fp = np.empty_like(F)
    for j in range(n):
        for k in range(n):
            Fp[j, k] = F[j, k] - 0.5 * mf.trace(F[j, k]) * eye
    wedge = mf.trace(wedge_11_density(Fp, Fp, base))
    hinv = mf.inv(h)
    adj = [[mf.mul3(hinv, mf.dagger(Fp[l, m]), h) for m in range(n)] for l in range(n)]
    gi = base.ginv
    f_sq = 0.0
    for j in range(n):
        for k in range(n):
            for l in range(n):
                for m in range(n):
                    w = gi[l, j] * gi[k, m]
                    if base.is_flat and not np.any(w):
                        continue
                    f_sq = f_sq + w * mf.trace(mf.mul(Fp[j, k], adj[l][m]))
    th = sum(gi[k, j] * Fp[j, k] for j in range(n) for k in range(n))
    t_sq = mf.hnorm_sq(th, h, hinv)
    return {
        "wedge": np.real(wedge),
        "wedge_imag": np.imag(wedge),
        "F_perp_sq": np.real(f_sq),
        "theta_perp_sq": t_sq,
    }


def chern2_defect(H, spec: BundleSpec):
    """(lhs, rhs) densities relative to omega^2/2 of

        4 pi^2 (2 c2 - c1^2/2) = tr(F_perp ^ F_perp)

    and |i F_perp|^2 - |i Lambda F_perp|^2. They agree pointwise.
    """
    p = chern2_parts(H, spec)
    return p["wedge"], p["F_perp_sq"] - p["theta_perp_sq"]


def chern2_margin(H, spec: BundleSpec):
    """|i F_perp|^2 - |i Lambda F_perp|^2 / 2, nonnegative pointwise."""
    p = chern2_parts(H, spec)
    return p["F_perp_sq"] - 0.5 * p["theta_perp_sq"]


def c2_positivity_bound(theta_eigs) -> np.ndarray:
    """2 - |i Lambda F_perp|^2 = 2 lambda_1 lambda_2 for trace-normalised rank 2.

    Requires lambda_1 + lambda_2 = 2 at every point.
    """
    lam = theta_eigs.values if hasattr(theta_eigs, "values") else np.asarray(theta_eigs)
    if lam.shape[0] != 2:
        raise ChernWeilError("positivity bound is for rank 2")
    s = lam[0] + lam[1]
    if np.max(np.abs(s - 2.0)) > TRACE_TOL:
        raise ChernWeilError(f"eigenvalues must sum to 2 (max deviation {np.max(np.abs(s - 2.0)):.2e})")
    return 2.0 * lam[0] * lam[1]


def c2_positivity_from_perp(theta_eigs) -> np.ndarray:
    """The same field computed as 2 - sum (lambda_i - 1)^2."""
    lam = theta_eigs.values if hasattr(theta_eigs, "values") else np.asarray(theta_eigs)
    return 2.0 - ((lam - 1.0) ** 2).sum(axis=0)

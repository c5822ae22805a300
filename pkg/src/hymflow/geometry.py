"""Discretized flat complex tori and spectral differential operators.

A base is C^n/(Z^n + iZ^n) sampled on a uniform grid over [0,1)^(2n), with real
coordinates ordered (x1, y1, x2, y2) and z_j = x_j + i y_j. The Hermitian metric
is stored as the matrix field G[j, k] = g_{j kbar}, so that

    omega = i * sum_{j,k} g_{j kbar} dz^j ^ dz^kbar.

Differential forms keep fully antisymmetric coefficient arrays (the usual
1/(p! q!) convention). Holomorphic indices come first, then antiholomorphic
ones, then any bundle indices, then the grid axes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft


class GeometryError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _wavenumbers(grid: int) -> np.ndarray:
    k = np.fft.fftfreq(grid, 1.0 / grid)
    return k


@dataclass(eq=False)
class HermitianBase:
    """Discretized torus carrying a Hermitian metric."""

    dim_c: int
    grid: int
    metric_coeffs: np.ndarray  # (n, n, *shape)
    gauduchon_eps: float = 0.0
    volume: float = field(default=0.0)

    def __post_init__(self):
        n = self.dim_c
        if n not in (1, 2):
            raise GeometryError(f"dim_c must be 1 or 2, got {n}")
        if self.grid < 8 or not _is_pow2(self.grid):
            raise GeometryError(f"grid must be a power of two >= 8, got {self.grid}")
        g = np.asarray(self.metric_coeffs, dtype=complex)
        if g.shape != (n, n) + self.shape:
            raise GeometryError(f"metric_coeffs has shape {g.shape}")
        self.metric_coeffs = g
        gm = np.moveaxis(g, (0, 1), (-2, -1))
        if np.max(np.abs(gm - np.conj(np.swapaxes(gm, -1, -2)))) > 1e-12:
            raise GeometryError("metric is not Hermitian")
        if np.min(np.linalg.eigvalsh(gm)) <= 0:
            raise GeometryError("metric is not positive definite")
        inv = np.linalg.inv(gm)
        self.ginv = np.moveaxis(inv, (-2, -1), (0, 1))
        self.detg = np.real(np.linalg.det(gm))
        self.volume = float(np.mean(self.detg) * 2.0 ** n)
        self._build_multipliers()

    # -- grid data --------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return (self.grid,) * (2 * self.dim_c)

    @property
    def axes(self) -> tuple:
        m = 2 * self.dim_c
        return tuple(range(-m, 0))

    @property
    def spacing(self) -> float:
        return 1.0 / self.grid

    @property
    def is_flat(self) -> bool:
        return self.gauduchon_eps == 0.0

    def coords(self) -> list:
        """Real coordinate arrays [x1, y1, (x2, y2)] on the grid."""
        t = np.arange(self.grid) / self.grid
        return list(np.meshgrid(*([t] * (2 * self.dim_c)), indexing="ij"))

    def _build_multipliers(self):
        n, G = self.dim_c, self.grid
        k = _wavenumbers(G)
        kd = k.copy()
        kd[G // 2] = 0.0  # Nyquist mode has no consistent derivative
        m = 2 * n
        self._kx, self._ky, self._dz, self._dzb = [], [], [], []
        self._dx1d = 2j * np.pi * kd
        for j in range(n):
            sx = [1] * m
            sy = [1] * m
            sx[2 * j] = G
            sy[2 * j + 1] = G
            kx = kd.reshape(sx)
            ky = kd.reshape(sy)
            self._kx.append(kx)
            self._ky.append(ky)
            # d/dz = (d/dx - i d/dy)/2 on exp(2 pi i (kx x + ky y))
            self._dz.append(np.pi * 1j * kx + np.pi * ky)
            self._dzb.append(np.pi * 1j * kx - np.pi * ky)
        # sum_k dbar_k ginv[k, j], used when contracting dbar of a (1,0) form
        self._dbar_ginv = [sum(self.ifft(self._dzb[k] * self.fft(self.ginv[k, j])) for k in range(n))
                           for j in range(n)]
        ksq = sum((2 * np.pi) ** 2 * (self._kx[j] ** 2 + self._ky[j] ** 2) for j in range(n))
        self._ksq = np.broadcast_to(ksq, self.shape)

    # -- spectral calculus --------------------------------------------------
    def fft(self, f):
        return sfft.fftn(f, axes=self.axes)

    def ifft(self, fh):
        return sfft.ifftn(fh, axes=self.axes)

    def d_dz(self, f, j: int):
        return self.ifft(self._dz[j] * self.fft(f))

    def d_dzbar(self, f, j: int):
        return self.ifft(self._dzb[j] * self.fft(f))

    def d_real(self, f, axis: int):
        """Derivative along real coordinate `axis` (0..2n-1) by 1d FFT."""
        ax = axis - 2 * self.dim_c
        sh = [1] * (2 * self.dim_c)
        sh[axis] = self.grid
        mult = self._dx1d.reshape(sh)
        return np.fft.ifft(mult * np.fft.fft(f, axis=ax), axis=ax)

    def ddbar_contract(self, u):
        """Lambda(i d dbar u) = sum_{jk} ginv[k,j] d_j dbar_k u."""
        uh = self.fft(u)
        n = self.dim_c
        if self.is_flat:
            return self.ifft(sum(self._dz[j] * self._dzb[j] for j in range(n)) * uh)
        out = 0.0
        for j in range(n):
            for k in range(n):
                out = out + self.ginv[k, j] * self.ifft(self._dz[j] * self._dzb[k] * uh)
        return out

    def flat_symbol(self) -> np.ndarray:
        """Fourier symbol of Lambda(i d dbar) on the flat metric (nonpositive)."""
        n = self.dim_c
        return np.broadcast_to(sum(self._dz[j] * self._dzb[j] for j in range(n)), self.shape)

    # -- quadrature ------------------------------------------------------
    def integrate(self, f):
        """Integral of a scalar field against omega^n/n!."""
        f = np.asarray(f)
        val = np.mean(f * self.detg, axis=self.axes) * 2.0 ** self.dim_c
        if np.iscomplexobj(val) and np.all(np.abs(np.imag(val)) == 0):
            val = np.real(val)
        return val[()] if isinstance(val, np.ndarray) and val.ndim == 0 else val

    def l2_norm(self, f) -> float:
        return float(np.sqrt(np.real(self.integrate(np.abs(f) ** 2))))

    def kahler_form(self) -> "FormField":
        return FormField((1, 1), 1j * self.metric_coeffs)


def make_flat_torus(dim_c: int, grid: int) -> HermitianBase:
    if grid < 8 or not _is_pow2(grid):
        raise GeometryError(f"grid must be a power of two >= 8, got {grid}")
    if dim_c not in (1, 2):
        raise GeometryError(f"dim_c must be 1 or 2, got {dim_c}")
    shape = (grid,) * (2 * dim_c)
    g = np.zeros((dim_c, dim_c) + shape, dtype=complex)
    for j in range(dim_c):
        g[j, j] = 1.0
    return HermitianBase(dim_c, grid, g, 0.0)


def make_gauduchon_torus(grid: int, eps: float) -> HermitianBase:
    """Two-dimensional torus with a non-Kaehler Gauduchon metric.

    The off-diagonal entry g_{1 2bar} = eps*sin(2 pi x1) depends on x1 only,
    which makes d dbar omega vanish while d omega does not.
    """
    if not abs(eps) < 0.25:
        raise GeometryError(f"|eps| must be below 1/4, got {eps}")
    if grid < 8 or not _is_pow2(grid):
        raise GeometryError(f"grid must be a power of two >= 8, got {grid}")
    shape = (grid,) * 4
    t = np.arange(grid) / grid
    h = np.sin(2 * np.pi * t).reshape(grid, 1, 1, 1) * np.ones(shape)
    g = np.zeros((2, 2) + shape, dtype=complex)
    g[0, 0] = 1.0
    g[1, 1] = 1.0
    g[0, 1] = eps * h
    g[1, 0] = eps * np.conj(h)
    return HermitianBase(2, grid, g, float(eps))


@dataclass(eq=False)
class FormField:
    """Differential form of type (p, q) with coefficients on the grid.

    `values` has shape (n,)*(p+q) + extra + grid. `twist`, if set, is an
    object providing covariant d_dz / d_dzbar for twisted End-valued fields.
    """

    bidegree: tuple
    values: np.ndarray
    twist: Optional[object] = None

    def check(self, base: HermitianBase):
        p, q = self.bidegree
        n = base.dim_c
        v = self.values
        lead = v.shape[: p + q]
        if lead != (n,) * (p + q) or v.shape[v.ndim - 2 * n:] != base.shape:
            raise GeometryError(
                f"values shape {v.shape} inconsistent with bidegree {self.bidegree}"
            )
        return self


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] == seq[j]:
                return 0
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _deriv(f: FormField, base, j, holo):
    if f.twist is not None:
        fn = f.twist.d_dz if holo else f.twist.d_dzbar
        return lambda a: fn(a, j, base)
    fn = base.d_dz if holo else base.d_dzbar
    return lambda a: fn(a, j)


def dbar(f: FormField, base: HermitianBase) -> FormField:
    """dbar of a (p,q) form, giving (p, q+1)."""
    f.check(base)
    p, q = f.bidegree
    n = base.dim_c
    extra = f.values.shape[p + q:]
    out = np.zeros((n,) * (p + q + 1) + extra, dtype=complex)
    if q + 1 > n:
        return FormField((p, q + 1), out, f.twist)
    sgn_p = (-1) ** p
    derivs = [_deriv(f, base, k, False) for k in range(n)]
    cache = {}
    for I in itertools.product(range(n), repeat=p):
        for K in itertools.product(range(n), repeat=q + 1):
            if len(set(K)) < q + 1:
                continue
            acc = 0.0
            for s in range(q + 1):
                rest = K[:s] + K[s + 1:]
                key = (I + rest, K[s])
                if key not in cache:
                    cache[key] = derivs[K[s]](f.values[I + rest])
                acc = acc + (-1) ** s * cache[key]
            out[I + K] = sgn_p * acc
    return FormField((p, q + 1), out, f.twist)


def del_(f: FormField, base: HermitianBase) -> FormField:
    """d (holomorphic part) of a (p,q) form, giving (p+1, q)."""
    f.check(base)
    p, q = f.bidegree
    n = base.dim_c
    extra = f.values.shape[p + q:]
    out = np.zeros((n,) * (p + q + 1) + extra, dtype=complex)
    if p + 1 > n:
        return FormField((p + 1, q), out, f.twist)
    derivs = [_deriv(f, base, j, True) for j in range(n)]
    cache = {}
    for J in itertools.product(range(n), repeat=p + 1):
        if len(set(J)) < p + 1:
            continue
        for K in itertools.product(range(n), repeat=q):
            acc = 0.0
            for s in range(p + 1):
                rest = J[:s] + J[s + 1:]
                key = (rest + K, J[s])
                if key not in cache:
                    cache[key] = derivs[J[s]](f.values[rest + K])
                acc = acc + (-1) ** s * cache[key]
            out[J + K] = acc
    return FormField((p + 1, q), out, f.twist)


def contract(f: FormField, base: HermitianBase) -> FormField:
    """Lambda_omega of a (1,1) form: -i * sum_{jk} ginv[k,j] f_{j kbar}."""
    if tuple(f.bidegree) != (1, 1):
        raise GeometryError("contract expects a (1,1) form")
    f.check(base)
    v = f.values
    n = base.dim_c
    extra_nd = v.ndim - 2 - 2 * n
    acc = 0.0
    for j in range(n):
        for k in range(n):
            gk = base.ginv[k, j].reshape((1,) * extra_nd + base.shape)
            acc = acc + gk * v[j, k]
    return FormField((0, 0), -1j * acc, f.twist)


def integrate(f, base: HermitianBase):
    """Integral of a scalar (0,0) field against the volume form."""
    if isinstance(f, FormField):
        if tuple(f.bidegree) != (0, 0):
            raise GeometryError("integrate expects a (0,0) form")
        f = f.values
    return base.integrate(f)


def scalar(values) -> FormField:
    return FormField((0, 0), np.asarray(values, dtype=complex))


def gauduchon_residual(base: HermitianBase) -> float:
    """sup-norm of d dbar omega^(n-1)."""
    if base.dim_c == 1:
        return 0.0
    w = base.kahler_form()
    return float(np.max(np.abs(del_(dbar(w, base), base).values)))


def domega_norm(base: HermitianBase) -> float:
    """sup-norm of d omega (both type components)."""
    w = base.kahler_form()
    a = np.max(np.abs(del_(w, base).values))
    b = np.max(np.abs(dbar(w, base).values))
    return float(max(a, b))


def torsion_form(base: HermitianBase) -> FormField:
    """The (2,1) form d omega, which carries the torsion of the metric.

    Kept as a diagnostic; nothing in the flow depends on it.
    """
    return del_(base.kahler_form(), base)


def wedge_11_density(a, b, base: HermitianBase):
    """(a ^ b) / (omega^2/2) for (1,1) coefficient arrays on a complex surface.

    Leading indices of a and b are (2, 2); trailing axes broadcast. Bundle
    matrix indices, if present, are multiplied as matrices (a before b).
    """
    if base.dim_c != 2:
        raise GeometryError("wedge density defined here for complex surfaces only")

    def mul(x, y):
        if x.ndim > 2 * base.dim_c:
            return np.einsum("ik...,kj...->ij...", x, y)
        return x * y

    num = mul(a[0, 0], b[1, 1]) + mul(a[1, 1], b[0, 0]) - mul(a[0, 1], b[1, 0]) - mul(a[1, 0], b[0, 1])
    return -num / base.detg

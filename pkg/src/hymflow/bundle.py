"""Holomorphic bundles over the model tori.

Bundles are direct sums of line bundles L_{d_1} + ... + L_{d_r}, optionally
deformed by a strictly upper-triangular End-valued (0,1) form beta, so that
dbar_E = dbar_{A0} + beta. On the one-dimensional torus a line bundle of
degree d is realised by the factor of automorphy

    s(x + 1, y) = exp(2 pi i d y) s(x, y),    s(x, y + 1) = s(x, y),

and the unitary background connection A = -2 pi i d x dy, whose curvature is
the constant (1,1) form pi*d dz ^ dzbar. In this frame the background metric
K is the identity, so a metric relative to K and the metric itself share the
same matrix entries. Entry (a, b) of an endomorphism picks up the phase of
degree d_a - d_b.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import matfield as mf
from .geometry import FormField, HermitianBase

BREAKDOWN_COND = 1e12


class BundleError(ValueError):
    pass


class NumericalBreakdown(ArithmeticError):
    """Metric too ill-conditioned (or not positive) for a meaningful step."""

    def __init__(self, msg, min_eig=None, location=None, cond=None):
        super().__init__(msg)
        self.min_eig = min_eig
        self.location = location
        self.cond = cond


@dataclass(eq=False)
class TwistData:
    """Quasi-periodic identifications for a sum of line bundles on T^1."""

    degrees: tuple
    grid: int

    def __post_init__(self):
        d = np.asarray(self.degrees, dtype=float)
        self.delta = (d[:, None] - d[None, :])  # twist degree of End entries
        t = np.arange(self.grid) / self.grid
        x, y = np.meshgrid(t, t, indexing="ij")
        self.x, self.y = x, y
        dl = self.delta[:, :, None, None]
        self._phase = np.exp(2j * np.pi * dl * x * y)  # exp(iP), P = 2 pi delta x y
        self._ay = -2j * np.pi * dl * x  # adjoint action of A_y on End entries
        self._ax = 2j * np.pi * dl * y  # x-derivative correction from the phase
        self.twisted = bool(np.any(self.delta != 0))
        k = np.fft.fftfreq(self.grid, 1.0 / self.grid)
        k[self.grid // 2] = 0.0
        # spectral differentiation matrix: D @ f equals ifft(2 pi i k fft(f))
        eye = np.eye(self.grid)
        D = np.fft.ifft(2j * np.pi * k[:, None] * np.fft.fft(eye, axis=0), axis=0)
        self._Dr = np.ascontiguousarray(np.real(D))
        self._cz = 0.5 * (self._ax - 1j * self._ay)
        self._czb = 0.5 * (self._ax + 1j * self._ay)

    def transition_x(self, y):
        """Factor s(x+1,y)/s(x,y) for each summand."""
        return np.exp(2j * np.pi * np.outer(self.degrees, np.atleast_1d(y)))

    def cocycle_phase(self):
        """Phase picked up going around the corner of the fundamental domain.

        Going x -> x+1 at y = 1 and back at y = 0 differs by exp(2 pi i d);
        for integer degrees this is one, which is exactly the integrality
        condition on the first Chern number.
        """
        return np.exp(2j * np.pi * np.asarray(self.degrees, dtype=float))

    def _dx(self, a):
        # D is real, so it can act on the float view (re/im interleaved in y)
        a = np.ascontiguousarray(a)
        return (self._Dr @ a.view(float)).view(complex)

    def _dy(self, a):
        at = np.ascontiguousarray(np.swapaxes(a, -1, -2))
        return np.swapaxes((self._Dr @ at.view(float)).view(complex), -1, -2)

    def grad(self, a):
        """Covariant (d/dx, d/dy) of an End-valued field, shape (..., r, r, G, G).

        In x the field is first made periodic by removing the phase exp(iP).
        Differentiation uses the dense spectral matrix, which is the same
        operator as FFT differentiation but faster at these sizes.
        """
        if self.twisted:
            ph = self._phase
            gx = ph * self._dx(np.conj(ph) * a) + self._ax * a
            gy = self._dy(a) + self._ay * a
        else:
            gx = self._dx(a)
            gy = self._dy(a)
        return gx, gy

    def d_dz(self, a, j=0, base=None):
        """Covariant d/dz = (d/dx - i d/dy)/2."""
        if self.twisted:
            ph = self._phase
            return 0.5 * (ph * self._dx(np.conj(ph) * a) - 1j * self._dy(a)) + self._cz * a
        return 0.5 * (self._dx(a) - 1j * self._dy(a))

    def d_dzbar(self, a, j=0, base=None):
        """Covariant d/dzbar = (d/dx + i d/dy)/2."""
        if self.twisted:
            ph = self._phase
            return 0.5 * (ph * self._dx(np.conj(ph) * a) + 1j * self._dy(a)) + self._czb * a
        return 0.5 * (self._dx(a) + 1j * self._dy(a))

    def section_packet(self, deg, x0, my, width=0.2, nimg=5):
        """Smooth section of L_deg: periodised Gaussian in x times a mode in y."""
        x, y = self.x, self.y
        s = np.zeros_like(x, dtype=complex)
        for n in range(-nimg, nimg + 1):
            s += np.exp(-((x + n - x0) ** 2) / (2 * width ** 2)) * np.exp(-2j * np.pi * deg * n * y)
        return s * np.exp(2j * np.pi * my * y)


@dataclass(eq=False)
class BundleSpec:
    base: HermitianBase
    degrees: tuple
    beta: Optional[np.ndarray] = None  # (n, r, r, *grid): beta = beta_k dzbar^k
    twist: Optional[TwistData] = None

    def __post_init__(self):
        self.degrees = tuple(int(d) for d in self.degrees)
        r = len(self.degrees)
        if r < 1:
            raise BundleError("rank must be positive")
        if any(self.degrees[i] < self.degrees[i + 1] for i in range(r - 1)):
            raise BundleError(f"degrees must be nonincreasing, got {self.degrees}")
        if self.base.dim_c == 2 and any(self.degrees):
            raise BundleError("nonzero degrees are only supported on the one-dimensional torus")
        if self.twist is None and self.base.dim_c == 1:
            self.twist = TwistData(self.degrees, self.base.grid)
        self._background()

    @property
    def rank(self) -> int:
        return len(self.degrees)

    @property
    def dim_c(self) -> int:
        return self.base.dim_c

    @property
    def is_split(self) -> bool:
        return self.beta is None

    @property
    def slope(self) -> float:
        return sum(self.degrees) / self.rank

    @property
    def lambda_const(self) -> float:
        return 2 * np.pi * self.slope / self.base.volume

    # -- covariant derivatives on End(E) ---------------------------------
    def _twisted(self):
        # on the one-dimensional torus every End field goes through TwistData
        return self.twist is not None

    def d_holo(self, a):
        """[nabla_{z_j} a for j] (background connection only)."""
        if self._twisted():
            return [self.twist.d_dz(a)]
        base = self.base
        ah = base.fft(a)
        return [base.ifft(base._dz[j] * ah) for j in range(base.dim_c)]

    def d_anti(self, a):
        if self._twisted():
            return [self.twist.d_dzbar(a)]
        base = self.base
        ah = base.fft(a)
        return [base.ifft(base._dzb[j] * ah) for j in range(base.dim_c)]

    def d_both(self, a):
        if self._twisted():
            gx, gy = self.twist.grad(a)
            return [0.5 * (gx - 1j * gy)], [0.5 * (gx + 1j * gy)]
        base = self.base
        ah = base.fft(a)
        n = base.dim_c
        return ([base.ifft(base._dz[j] * ah) for j in range(n)],
                [base.ifft(base._dzb[j] * ah) for j in range(n)])

    def _beta_entries(self):
        """Nonzero entries of beta as [(a, b, coefficient)] per direction."""
        if getattr(self, "_beta_nz", None) is None:
            out = []
            for k in range(self.base.dim_c):
                ent = []
                for a in range(self.rank):
                    for b in range(self.rank):
                        c = self.beta[k, a, b]
                        if np.any(c):
                            flat = c.ravel()
                            ent.append((a, b, flat[0] if np.all(flat == flat[0]) else c))
                out.append(ent)
            self._beta_nz = out
        return self._beta_nz

    def beta_comm(self, k, x, adjoint=False):
        """[beta_k, x] (or [beta_k^dagger, x]) using the sparsity of beta."""
        out = np.zeros(np.broadcast_shapes(x.shape, (self.rank, self.rank) + self.base.shape), dtype=complex)
        for a, b, c in self._beta_entries()[k]:
            if adjoint:
                a, b, c = b, a, np.conj(c)
            out[a, :] += c * x[b, :]
            out[:, b] -= c * x[:, a]
        return out

    # -- background curvature -------------------------------------------
    def _background(self):
        base, r, n = self.base, self.rank, self.base.dim_c
        shape = base.shape
        fk = np.zeros((n, n, r, r) + shape, dtype=complex)
        if n == 1:
            for a, d in enumerate(self.degrees):
                fk[0, 0, a, a] = np.pi * d
        if self.beta is not None:
            b = self.beta
            bd = [mf.dagger(b[j]) for j in range(n)]
            db = [self.d_holo(b[k]) for k in range(n)]  # db[k][j] = nabla_j beta_k
            dbd = [self.d_anti(bd[j]) for j in range(n)]  # dbd[j][k] = nabla_kbar beta_j^dag
            for j in range(n):
                for k in range(n):
                    fk[j, k] += db[k][j] + dbd[j][k] + mf.comm(b[k], bd[j])
        self.F_K = fk
        self.theta_K = _contract_end(fk, base)

    def integrability_residual(self) -> float:
        """sup-norm of the (0,2) part dbar beta + beta ^ beta."""
        if self.beta is None or self.base.dim_c == 1:
            return 0.0
        b = self.beta
        dk = [self.d_anti(b[l]) for l in range(2)]  # dk[l][k] = nabla_kbar beta_l
        c = dk[1][0] - dk[0][1] + mf.comm(b[0], b[1])
        return float(np.max(np.abs(c)))

    def identity_metric(self) -> "MetricField":
        return MetricField(mf.identity(self.rank, self.base.shape), "relative", self.twist)


def _contract_end(F, base: HermitianBase):
    """theta = i Lambda F = sum_{jk} ginv[k,j] F_{j kbar} for End-valued F."""
    n = base.dim_c
    if base.is_flat:
        return sum(F[j, j] for j in range(n))
    acc = 0.0
    for j in range(n):
        for k in range(n):
            acc = acc + base.ginv[k, j] * F[j, k]
    return acc


@dataclass(eq=False)
class MetricField:
    """Field of Hermitian positive-definite r x r matrices, shape (r, r, *grid)."""

    values: np.ndarray
    mode: str = "relative"  # "relative" (h = K^-1 H) or "absolute" (H)
    twist: Optional[TwistData] = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=complex)

    @property
    def rank(self):
        return self.values.shape[0]

    def hermitian_defect(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - mf.dagger(v))))

    def min_eig(self) -> float:
        return float(np.min(mf.eigvalsh(self.values)))

    def check(self, tol=1e-12):
        if self.hermitian_defect() > tol * max(1.0, float(np.max(np.abs(self.values)))):
            raise BundleError("metric field is not Hermitian")
        if self.min_eig() <= 0:
            raise BundleError("metric field is not positive definite")
        return self


def check_conditioning(h, max_cond=BREAKDOWN_COND):
    w = mf.eigvalsh(h)
    lo, hi = w[0], w[-1]
    mn = float(np.min(lo))
    if not np.isfinite(mn) or mn <= 0:
        loc = np.unravel_index(int(np.argmin(lo)), lo.shape)
        raise NumericalBreakdown(f"metric lost positivity: min eigenvalue {mn:.3e} at {loc}",
                                 min_eig=mn, location=loc)
    cond = float(np.max(hi / lo))
    if cond > max_cond:
        loc = np.unravel_index(int(np.argmax(hi / lo)), lo.shape)
        raise NumericalBreakdown(f"metric condition number {cond:.3e} exceeds {max_cond:.0e}",
                                 min_eig=mn, location=loc, cond=cond)
    return cond


# -- constructors -----------------------------------------------------------

def make_split_bundle(base: HermitianBase, degrees: Sequence[int]) -> BundleSpec:
    return BundleSpec(base, tuple(degrees))


def deform(spec: BundleSpec, beta) -> BundleSpec:
    """New holomorphic structure dbar_E + beta (beta strictly upper triangular)."""
    if isinstance(beta, FormField):
        if tuple(beta.bidegree) != (0, 1):
            raise BundleError("beta must be a (0,1) form")
        beta = beta.values
    n, r = spec.base.dim_c, spec.rank
    beta = np.asarray(beta, dtype=complex)
    if beta.shape[:3] == (n, r, r) and beta.ndim == 3:
        beta = beta.reshape(beta.shape + (1,) * (2 * n)) * np.ones(spec.base.shape)
    if beta.shape != (n, r, r) + spec.base.shape:
        raise BundleError(f"beta has shape {beta.shape}")
    if not np.any(beta):
        return BundleSpec(spec.base, spec.degrees, spec.beta, spec.twist)
    low = np.tril(np.ones((r, r), dtype=bool))
    if np.max(np.abs(beta[:, low])) > 0:
        raise BundleError("beta must be strictly upper triangular in the degree-ordered frame")
    total = beta if spec.beta is None else spec.beta + beta
    new = BundleSpec(spec.base, spec.degrees, total, spec.twist)
    res = new.integrability_residual()
    if res > 1e-10:
        raise BundleError(f"deformation is not integrable (residual {res:.2e})")
    return new


def constant_beta(spec: BundleSpec, coeffs: dict) -> np.ndarray:
    """beta with constant entries; coeffs maps (k, a, b) -> value."""
    n, r = spec.base.dim_c, spec.rank
    b = np.zeros((n, r, r) + spec.base.shape, dtype=complex)
    for (k, a, c), v in coeffs.items():
        b[k, a, c] = v
    return b


def packet_beta(spec: BundleSpec, amp: complex, a=0, b=1, x0=0.5, my=0) -> np.ndarray:
    """beta = amp * (twisted wave packet) dzbar in slot Hom(L_b, L_a), dim 1."""
    if spec.base.dim_c != 1:
        raise BundleError("packet deformations live on the one-dimensional torus")
    r = spec.rank
    out = np.zeros((1, r, r) + spec.base.shape, dtype=complex)
    deg = spec.degrees[a] - spec.degrees[b]
    out[0, a, b] = amp * spec.twist.section_packet(deg, x0, my)
    return out


def _smooth_scalar(rng, base: HermitianBase, kmax=2, amp=1.0, real=True):
    """Random trigonometric polynomial with modes |k_i| <= kmax."""
    coords = base.coords()
    out = np.zeros(base.shape, dtype=complex)
    m = len(coords)
    nterm = 4 * m
    for _ in range(nterm):
        ks = rng.integers(-kmax, kmax + 1, size=m)
        c = (rng.normal() + 1j * rng.normal()) / np.sqrt(2 * nterm)
        out += c * np.exp(2j * np.pi * sum(int(k) * x for k, x in zip(ks, coords)))
    if real:
        out = out.real + 0j
    return amp * out


def random_log_metric(spec: BundleSpec, seed: int, amplitude=0.5, traceless=False, kmax=1):
    """Smooth random Hermitian End-valued field respecting the twist."""
    rng = np.random.default_rng(seed)
    base, r = spec.base, spec.rank
    S = np.zeros((r, r) + base.shape, dtype=complex)
    for a in range(r):
        S[a, a] = _smooth_scalar(rng, base, kmax, 1.0, real=True)
    for a in range(r):
        for b in range(a + 1, r):
            deg = spec.degrees[a] - spec.degrees[b]
            if base.dim_c == 1 and deg != 0:
                x0 = rng.uniform(0, 1)
                my = int(rng.integers(-1, 2))
                c = (rng.normal() + 1j * rng.normal()) / 2
                v = c * spec.twist.section_packet(deg, x0, my)
            else:
                v = _smooth_scalar(rng, base, kmax, 1.0, real=False)
            S[a, b] = v
            S[b, a] = np.conj(v)
    if traceless:
        tr = mf.trace(S) / r
        for a in range(r):
            S[a, a] -= tr
    return amplitude * S


def random_metric(spec: BundleSpec, seed: int, amplitude=0.5, traceless=False) -> MetricField:
    """h = exp(S) for a smooth random Hermitian S; det h = 1 when traceless."""
    S = random_log_metric(spec, seed, amplitude, traceless)
    return MetricField(mf.herm(mf.expm_h(S)), "relative", spec.twist)


def conformal_metric(spec: BundleSpec, phis) -> MetricField:
    """Diagonal metric diag(exp(phi_a))."""
    r = spec.rank
    h = np.zeros((r, r) + spec.base.shape, dtype=complex)
    for a in range(r):
        h[a, a] = np.exp(np.broadcast_to(phis[a], spec.base.shape))
    return MetricField(h, "relative", spec.twist)


# -- curvature -------------------------------------------------------------

def _as_array(H):
    return H.values if isinstance(H, MetricField) else np.asarray(H)


def _b_terms(h, spec: BundleSpec, hinv=None):
    """B_j = h^-1 (d_K h)_j, with d_K h = nabla_j h - [beta_j^dag, h]."""
    if hinv is None:
        hinv = mf.inv(h)
    dh = spec.d_holo(h)
    if spec.beta is not None:
        for j in range(spec.base.dim_c):
            dh[j] = dh[j] - spec.beta_comm(j, h, adjoint=True)
    return [mf.mul(hinv, d) for d in dh]


def curvature_arrays(h, spec: BundleSpec, hinv=None):
    """F_H[j, k] (End-valued) for h relative to the background."""
    n = spec.base.dim_c
    B = _b_terms(h, spec, hinv)
    F = spec.F_K.copy()
    for j in range(n):
        dB = spec.d_anti(B[j])
        for k in range(n):
            corr = dB[k]
            if spec.beta is not None:
                corr = corr + spec.beta_comm(k, B[j])
            F[j, k] -= corr
    return F


def theta_array(h, spec: BundleSpec, hinv=None):
    """i Lambda F_H without forming every component.

    On untwisted bases the contraction is moved inside the derivative,
    sum_jk ginv[k,j] dbar_k B_j = sum_k dbar_k C_k - sum_j (sum_k dbar_k ginv[k,j]) B_j
    with C_k = sum_j ginv[k,j] B_j, so one transform per direction suffices.
    """
    base = spec.base
    n = base.dim_c
    B = _b_terms(h, spec, hinv)
    th = spec.theta_K.copy() if isinstance(spec.theta_K, np.ndarray) else spec.theta_K
    if spec._twisted():
        th = th - spec.d_anti(B[0])[0]
        if spec.beta is not None:
            th = th - spec.beta_comm(0, B[0])
        return th
    if base.is_flat:
        C = B
    else:
        C = [sum(base.ginv[k, j] * B[j] for j in range(n)) for k in range(n)]
    acc = sum(base._dzb[k] * base.fft(C[k]) for k in range(n))
    th = th - base.ifft(acc)
    if not base.is_flat:
        th = th + sum(base._dbar_ginv[j] * B[j] for j in range(n))
    if spec.beta is not None:
        for k in range(n):
            th = th - spec.beta_comm(k, C[k])
    return th


def chern_curvature(H, spec: BundleSpec, check=True) -> FormField:
    """Chern curvature F_H = F_K + dbar_E(h^-1 d_K h) as an End-valued (1,1) form."""
    h = _as_array(H)
    if check:
        check_conditioning(h)
    return FormField((1, 1), curvature_arrays(h, spec), spec.twist)


def mean_curvature(H, spec: BundleSpec, check=True):
    """theta_H = i Lambda F_H, an End field self-adjoint with respect to H."""
    h = _as_array(H)
    if check:
        check_conditioning(h)
    return theta_array(h, spec)


def adjoint_defect(theta, h) -> float:
    """sup |h theta - (h theta)^dag|, zero iff theta is h-self-adjoint."""
    ht = mf.mul(h, theta)
    return float(np.max(np.abs(ht - mf.dagger(ht))))


def gauge_transform_spec(spec: BundleSpec, g) -> BundleSpec:
    """Structure g^-1 o dbar_E o g for constant invertible g (untwisted use)."""
    g = np.asarray(g, dtype=complex)
    gi = np.linalg.inv(g)
    if spec.beta is None:
        return spec
    n = spec.base.dim_c
    nb = np.einsum("ab,kbc...,cd->kad...", gi, spec.beta, g)
    return BundleSpec(spec.base, spec.degrees, nb, spec.twist)

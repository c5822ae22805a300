"""Pointwise linear algebra on fields of small matrices.

Matrix fields are stored with the matrix indices first, shape (r, r, *grid).
This keeps elementwise products over the grid vectorised, which is much
faster than stacked LAPACK calls for r = 2..4.
"""

import numpy as np


def mul(a, b):
    if a.shape[0] == 2 and b.shape[0] == 2 and a.shape[:2] == (2, 2) and b.shape[:2] == (2, 2):
        a00, a01, a10, a11 = a[0, 0], a[0, 1], a[1, 0], a[1, 1]
        b00, b01, b10, b11 = b[0, 0], b[0, 1], b[1, 0], b[1, 1]
        out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
        out[0, 0] = a00 * b00 + a01 * b10
        out[0, 1] = a00 * b01 + a01 * b11
        out[1, 0] = a10 * b00 + a11 * b10
        out[1, 1] = a10 * b01 + a11 * b11
        return out
    return np.einsum("ik...,kj...->ij...", a, b)


def mul3(a, b, c):
    return mul(mul(a, b), c)


def dagger(a):
    return np.conj(np.swapaxes(a, 0, 1))


def herm(a):
    return np.ascontiguousarray(0.5 * (a + dagger(a)))


def comm(a, b):
    return mul(a, b) - mul(b, a)


def trace(a):
    return np.einsum("ii...->...", a)


def eye_like(a):
    r = a.shape[0]
    e = np.zeros_like(a)
    for i in range(r):
        e[i, i] = 1.0
    return e


def identity(r, shape, dtype=complex):
    e = np.zeros((r, r) + tuple(shape), dtype=dtype)
    for i in range(r):
        e[i, i] = 1.0
    return e


def to_last(a):
    return np.moveaxis(a, (0, 1), (-2, -1))


def from_last(a):
    return np.moveaxis(a, (-2, -1), (0, 1))


def inv(a):
    r = a.shape[0]
    if r == 1:
        return 1.0 / a
    if r == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        out = np.empty_like(a)
        out[0, 0] = a[1, 1] / det
        out[1, 1] = a[0, 0] / det
        out[0, 1] = -a[0, 1] / det
        out[1, 0] = -a[1, 0] / det
        return out
    return from_last(np.linalg.inv(to_last(a)))


def det(a):
    r = a.shape[0]
    if r == 1:
        return a[0, 0]
    if r == 2:
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return np.linalg.det(to_last(a))


def eigvalsh(a):
    """Ascending eigenvalues of a Hermitian field, shape (r, *grid)."""
    r = a.shape[0]
    if r == 2:
        p = 0.5 * np.real(a[0, 0] + a[1, 1])
        q = np.sqrt(0.25 * np.real(a[0, 0] - a[1, 1]) ** 2 + np.abs(a[0, 1]) ** 2)
        return np.stack([p - q, p + q])
    w = np.linalg.eigvalsh(to_last(a))
    return np.moveaxis(w, -1, 0)


def eigh(a):
    w, v = np.linalg.eigh(to_last(a))
    return np.moveaxis(w, -1, 0), from_last(v)


def hfunc(a, fn):
    """Apply a scalar function to a Hermitian matrix field via eigh."""
    w, v = eigh(a)
    fw = fn(w)
    return np.ascontiguousarray(np.einsum("ik...,k...,jk...->ij...", v, fw, np.conj(v)))


def sqrtm_pd(a):
    return hfunc(a, np.sqrt)


def logm_pd(a):
    return hfunc(a, np.log)


def expm_h(a):
    return hfunc(a, np.exp)


def hnorm_sq(a, h, hinv=None):
    """|a|^2_H = tr(a a^{*H}) with a^{*H} = h^{-1} a^dagger h."""
    if hinv is None:
        hinv = inv(h)
    return np.real(trace(mul(a, mul3(hinv, dagger(a), h))))

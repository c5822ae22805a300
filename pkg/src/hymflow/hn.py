"""Harder-Narasimhan type vectors and the maps induced by tensor operations.

An HN type is a nonincreasing real vector of slopes. Tensor products,
tensor powers, symmetric powers and exterior powers act on types by
sorting sums of entries over the appropriate index sets.
"""

from __future__ import annotations

import itertools
from math import comb
from typing import Sequence

import numpy as np

MAX_RANK = 8
MAX_POWER = 6


class HNError(ValueError):
    pass


def sort_tau(x: Sequence[float]) -> np.ndarray:
    """Descending rearrangement (stable, so ties are deterministic)."""
    x = np.asarray(x, dtype=float).ravel()
    idx = np.argsort(-x, kind="stable")
    return x[idx]


def _check_type(a, name="type"):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise HNError(f"{name} must be nonempty")
    if a.size > MAX_RANK:
        raise HNError(f"{name} rank {a.size} exceeds {MAX_RANK}")
    return a


def _check_k(k):
    if int(k) != k or k < 1:
        raise HNError(f"power must be a positive integer, got {k}")
    if k > MAX_POWER:
        raise HNError(f"power {k} exceeds {MAX_POWER}")
    return int(k)


def tensor_type(a, b) -> np.ndarray:
    """Type of E (x) E': all pairwise sums x_i + y_j, sorted."""
    a, b = _check_type(a, "a"), _check_type(b, "b")
    return sort_tau(np.add.outer(a, b).ravel())


def tensor_power_type(a, k: int) -> np.ndarray:
    """Type of E^{(x)k}: sums over all k-tuples of indices."""
    a = _check_type(a)
    k = _check_k(k)
    acc = np.zeros(1)
    for _ in range(k):
        acc = np.add.outer(acc, a).ravel()
    return sort_tau(acc)


def sym_power_type(a, k: int) -> np.ndarray:
    """Type of S^k E: sums over multisets of size k (nondecreasing index tuples)."""
    a = _check_type(a)
    k = _check_k(k)
    vals = [sum(a[i] for i in c) for c in itertools.combinations_with_replacement(range(a.size), k)]
    return sort_tau(vals)


def ext_power_type(a, k: int) -> np.ndarray:
    """Type of the k-th exterior power: sums over strictly increasing tuples."""
    a = _check_type(a)
    k = _check_k(k)
    if k > a.size:
        raise HNError(f"exterior power {k} exceeds rank {a.size}")
    vals = [sum(a[i] for i in c) for c in itertools.combinations(range(a.size), k)]
    return sort_tau(vals)


def expected_size(op: str, r: int, k: int = 1, s: int = 1) -> int:
    return {
        "tensor": r * s,
        "power": r ** k,
        "sym": comb(r + k - 1, k),
        "ext": comb(r, k),
    }[op]


def slope(deg: float, rank: int) -> float:
    if rank < 1:
        raise HNError("rank must be at least 1")
    return deg / rank


def hn_type_of_spec(spec) -> np.ndarray:
    """HN type of a split or upper-triangularly deformed bundle.

    The filtration by leading summands has line-bundle quotients, so the
    slopes are the degrees (in the degree-ordered frame).
    """
    return sort_tau(np.array(spec.degrees, dtype=float))


def mu_L(a) -> float:
    return float(np.min(a))


def mu_U(a) -> float:
    return float(np.max(a))


def lipschitz_constant(op: str, r: int, k: int = 1, s: int = 1) -> float:
    """Euclidean Lipschitz constant of op before sorting.

    Before sorting the map is linear, given by the incidence matrix whose rows
    count how often each index occurs in a tuple. Its spectral norm is the
    Lipschitz constant, and sorting does not increase it. For "tensor" the
    input is the concatenation (x, y) with len(x) = r, len(y) = s.
    """
    if op == "tensor":
        rows = []
        for i in range(r):
            for j in range(s):
                row = np.zeros(r + s)
                row[i] += 1
                row[r + j] += 1
                rows.append(row)
        M = np.array(rows)
    elif op == "power":
        M = _incidence(itertools.product(range(r), repeat=k), r)
    elif op == "sym":
        M = _incidence(itertools.combinations_with_replacement(range(r), k), r)
    elif op == "ext":
        M = _incidence(itertools.combinations(range(r), k), r)
    else:
        raise HNError(f"unknown op {op!r}")
    return float(np.linalg.norm(M, 2))


def _incidence(tuples, r):
    rows = []
    for t in tuples:
        row = np.zeros(r)
        for i in t:
            row[i] += 1
        rows.append(row)
    return np.array(rows)


def apply(op: str, a, k: int = 1, b=None) -> np.ndarray:
    if op == "tensor":
        if b is None:
            raise HNError("tensor needs a second type")
        return tensor_type(a, b)
    if op == "power":
        return tensor_power_type(a, k)
    if op == "sym":
        return sym_power_type(a, k)
    if op == "ext":
        return ext_power_type(a, k)
    raise HNError(f"unknown operation {op!r}")

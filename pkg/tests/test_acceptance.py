"""The twelve primary acceptance criteria at their stated tolerances.

Each test prints one pass/fail line; the lines are repeated in the terminal
summary. The paired split run dominates the runtime (several minutes).
"""

import conftest
import pytest

from hymflow.lab.acceptance import CRITERIA, RunCache


@pytest.fixture(scope="session")
def cache():
    return RunCache()


def check(n, cache):
    r = CRITERIA[n](cache)
    line = r.summary()
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    for c in r.checks:
        print("   ", c.to_dict())
    assert r.passed, line


@pytest.mark.slow
def test_criterion_01_monotonicity(cache):
    check(1, cache)


@pytest.mark.slow
def test_criterion_02_convergence(cache):
    check(2, cache)


@pytest.mark.slow
def test_criterion_03_uniqueness(cache):
    check(3, cache)


@pytest.mark.slow
def test_criterion_04_conservation(cache):
    check(4, cache)


@pytest.mark.slow
def test_criterion_05_energy(cache):
    check(5, cache)


def test_criterion_06_estek(cache):
    check(6, cache)


def test_criterion_07_hn_types(cache):
    check(7, cache)


@pytest.mark.slow
def test_criterion_08_hym(cache):
    check(8, cache)


def test_criterion_09_perturbed(cache):
    check(9, cache)


@pytest.mark.slow
def test_criterion_10_pinched(cache):
    check(10, cache)


@pytest.mark.slow
def test_criterion_11_chern2(cache):
    check(11, cache)


def test_criterion_12_geometry(cache):
    check(12, cache)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hymflow.geometry import (
    FormField,
    GeometryError,
    contract,
    dbar,
    del_,
    domega_norm,
    gauduchon_residual,
    integrate,
    make_flat_torus,
    make_gauduchon_torus,
    scalar,
    wedge_11_density,
)

modes = st.lists(st.integers(-3, 3), min_size=4, max_size=4)


def plane_wave(base, k):
    coords = base.coords()
    return np.exp(2j * np.pi * sum(ki * x for ki, x in zip(k, coords)))


# -- construction -------------------------------------------------------------

def test_volumes(torus1, torus2):
    assert torus1.volume == pytest.approx(2.0, abs=1e-14)
    assert torus2.volume == pytest.approx(4.0, abs=1e-14)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
def test_gauduchon_volume_closed_form(eps):
    # det g = 1 - eps^2 sin^2(2 pi x1), whose mean is 1 - eps^2/2
    base = make_gauduchon_torus(16, eps)
    assert base.volume == pytest.approx(4 * (1 - eps ** 2 / 2), abs=1e-13)


@pytest.mark.parametrize("bad", [6, 12, 4])
def test_grid_must_be_power_of_two(bad):
    with pytest.raises(GeometryError):
        make_flat_torus(1, bad)


@pytest.mark.parametrize("eps", [0.25, -0.3, 1.0])
def test_gauduchon_eps_bound(eps):
    with pytest.raises(GeometryError):
        make_gauduchon_torus(16, eps)


def test_bad_dimension():
    with pytest.raises(GeometryError):
        make_flat_torus(3, 8)


# -- spectral calculus ---------------------------------------------------------

@given(k=modes)
def test_d_dz_on_plane_waves(k):
    base = make_flat_torus(2, 8)
    f = plane_wave(base, k)
    for j in range(2):
        kx, ky = k[2 * j], k[2 * j + 1]
        # d/dz = (d/dx - i d/dy)/2
        want = 0.5 * (2j * np.pi * kx - 1j * 2j * np.pi * ky) * f
        assert np.max(np.abs(base.d_dz(f, j) - want)) < 1e-10
        want_b = 0.5 * (2j * np.pi * kx + 1j * 2j * np.pi * ky) * f
        assert np.max(np.abs(base.d_dzbar(f, j) - want_b)) < 1e-10


def test_lambda_ddbar_is_quarter_laplacian(torus1):
    x, y = torus1.coords()
    u = np.cos(2 * np.pi * x) + 0.5 * np.sin(4 * np.pi * y)
    lap = -4 * np.pi ** 2 * np.cos(2 * np.pi * x) - 0.5 * 16 * np.pi ** 2 * np.sin(4 * np.pi * y)
    assert np.max(np.abs(torus1.ddbar_contract(u) - lap / 4)) < 1e-10


def test_integrate_constant_is_volume(gauduchon):
    assert integrate(scalar(np.ones(gauduchon.shape)), gauduchon) == pytest.approx(gauduchon.volume)


def test_integrate_rejects_non_scalar(torus2):
    with pytest.raises(GeometryError):
        integrate(torus2.kahler_form(), torus2)


@given(k=modes, c=st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False))
def test_dbar_squared_vanishes(k, c):
    base = make_flat_torus(2, 8)
    f = FormField((0, 1), np.stack([c * plane_wave(base, k), plane_wave(base, k[::-1])]))
    assert np.max(np.abs(dbar(dbar(f, base), base).values)) < 1e-9
    g = FormField((1, 0), f.values.copy())
    assert np.max(np.abs(del_(del_(g, base), base).values)) < 1e-9


@given(k=modes)
def test_ddbar_anticommute_on_functions(k):
    # d dbar f = - dbar d f as (1,1) forms
    base = make_flat_torus(2, 8)
    f = scalar(plane_wave(base, k))
    a = del_(dbar(f, base), base).values
    b = dbar(del_(f, base), base).values
    assert np.max(np.abs(a + b)) < 1e-9


def test_contract_of_kahler_form_is_dimension(torus2, gauduchon):
    for base in (torus2, gauduchon):
        lam = contract(base.kahler_form(), base).values
        assert np.max(np.abs(lam - base.dim_c)) < 1e-12


def test_contract_rejects_wrong_bidegree(torus2):
    with pytest.raises(GeometryError):
        contract(FormField((0, 1), np.zeros((2,) + torus2.shape)), torus2)


def test_form_shape_check(torus2):
    with pytest.raises(GeometryError):
        dbar(FormField((0, 1), np.zeros((3,) + torus2.shape)), torus2)


# -- Gauduchon condition ------------------------------------------------------

def test_gauduchon_residual_and_torsion():
    base = make_gauduchon_torus(16, 0.1)
    assert gauduchon_residual(base) < 1e-10
    # d omega: d/dz1 of i eps sin(2 pi x1) has sup norm pi * eps
    assert domega_norm(base) == pytest.approx(np.pi * 0.1, rel=1e-10)


def test_flat_metric_is_closed(torus2):
    assert domega_norm(torus2) < 1e-12
    assert gauduchon_residual(torus2) < 1e-12


def test_wedge_of_kahler_forms(gauduchon):
    # omega ^ omega = 2 * (omega^2 / 2)
    w = gauduchon.kahler_form().values
    assert np.max(np.abs(wedge_11_density(w, w, gauduchon) - 2.0)) < 1e-12


def test_wedge_rejects_curves(torus1):
    with pytest.raises(GeometryError):
        wedge_11_density(np.zeros((1, 1) + torus1.shape), np.zeros((1, 1) + torus1.shape), torus1)

import numpy as np
import pytest

from hymflow.analytics import eigen_field
from hymflow.bundle import (
    conformal_metric,
    constant_beta,
    deform,
    make_split_bundle,
    mean_curvature,
    random_metric,
)
from hymflow.chern_weil import (
    ChernWeilError,
    c2_positivity_bound,
    c2_positivity_from_perp,
    chern2_defect,
    chern2_margin,
    chern2_parts,
    degree,
)
from hymflow.geometry import make_gauduchon_torus


@pytest.fixture(scope="module")
def gauduchon_ext():
    base = make_gauduchon_torus(16, 0.1)
    spec = make_split_bundle(base, (0, 0))
    return deform(spec, constant_beta(spec, {(1, 0, 1): 0.1}))


def test_conformal_oracle(torus2):
    # H = e^phi + e^-phi, phi = a cos 2pi x1 + b cos 2pi x2: both sides equal
    # -4 pi^4 a b cos(2 pi x1) cos(2 pi x2)
    spec = make_split_bundle(torus2, (0, 0))
    c = torus2.coords()
    a, b = 0.3, 0.2
    phi = a * np.cos(2 * np.pi * c[0]) + b * np.cos(2 * np.pi * c[2])
    lhs, rhs = chern2_defect(conformal_metric(spec, [phi, -phi]), spec)
    want = -4 * np.pi ** 4 * a * b * np.cos(2 * np.pi * c[0]) * np.cos(2 * np.pi * c[2])
    scale = np.max(np.abs(want))
    assert np.max(np.abs(lhs - want)) < 1e-8 * scale
    assert np.max(np.abs(rhs - want)) < 1e-8 * scale


def test_single_mode_has_no_second_chern_density(torus2):
    # the Hessian of a single Fourier mode has rank one
    spec = make_split_bundle(torus2, (0, 0))
    c = torus2.coords()
    phi = 0.3 * np.cos(2 * np.pi * (c[0] + c[3]))
    lhs, rhs = chern2_defect(conformal_metric(spec, [phi, -phi]), spec)
    assert np.max(np.abs(lhs)) < 1e-10 and np.max(np.abs(rhs)) < 1e-10


@pytest.mark.parametrize("seed", [1, 2])
def test_identity_on_gauduchon_surface(gauduchon_ext, seed):
    spec = gauduchon_ext
    h = random_metric(spec, seed, 0.1)
    parts = chern2_parts(h, spec)
    lhs, rhs = chern2_defect(h, spec)
    assert np.max(np.abs(lhs - rhs)) < 1e-6 * np.max(np.abs(lhs))
    # the wedge density is real up to the aliasing of exp(S) on G=16
    assert np.max(np.abs(parts["wedge_imag"])) < 1e-6 * np.max(np.abs(lhs))
    assert np.min(chern2_margin(h, spec)) >= -1e-9


def test_degree_zero_on_surface(gauduchon_ext):
    h = random_metric(gauduchon_ext, 4, 0.3)
    assert abs(degree(h, gauduchon_ext)) < 1e-8


def test_rejects_wrong_rank_or_dimension(torus1_small, torus2):
    with pytest.raises(ChernWeilError):
        chern2_parts(None, make_split_bundle(torus1_small, (1, -1)))
    with pytest.raises(ChernWeilError):
        chern2_defect(None, make_split_bundle(torus2, (0, 0, 0)))


def test_positivity_bound_examples():
    lam = np.array([[1.5, 1.0, 2.0], [0.5, 1.0, 0.0]])
    assert list(c2_positivity_bound(lam)) == [1.5, 2.0, 0.0]
    assert np.allclose(c2_positivity_from_perp(lam), c2_positivity_bound(lam), atol=1e-15)
    with pytest.raises(ChernWeilError):
        c2_positivity_bound(np.array([[1.0], [0.5]]))
    with pytest.raises(ChernWeilError):
        c2_positivity_bound(np.ones((3, 4)))


def test_positivity_bound_on_eigen_field(torus2):
    # shift theta by a constant so the eigenvalues sum to 2 everywhere
    spec = make_split_bundle(torus2, (0, 0))
    c = torus2.coords()
    phi = 0.02 * np.cos(2 * np.pi * c[0])
    H = conformal_metric(spec, [phi, -phi])
    th = mean_curvature(H, spec)
    th = th + np.eye(2).reshape(2, 2, 1, 1, 1, 1)
    ef = eigen_field(th, H)
    bound = c2_positivity_bound(ef)
    assert np.all(ef.values > 0)
    assert np.all(bound > 0)
    assert np.allclose(bound, 2 * ef.values[0] * ef.values[1], rtol=0, atol=0)

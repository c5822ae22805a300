import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hymflow import matfield as mf
from hymflow.bundle import (
    BundleError,
    BundleSpec,
    MetricField,
    NumericalBreakdown,
    adjoint_defect,
    chern_curvature,
    check_conditioning,
    conformal_metric,
    constant_beta,
    deform,
    make_split_bundle,
    mean_curvature,
    packet_beta,
    random_metric,
)
from hymflow.chern_weil import degree
from hymflow.geometry import FormField, make_flat_torus


# -- background structure -----------------------------------------------------

@pytest.mark.parametrize("degrees", [(1, -1), (2, 0, -2), (3, 1), (0,)])
def test_background_mean_curvature_is_constant(degrees):
    base = make_flat_torus(1, 16)
    spec = make_split_bundle(base, degrees)
    th = spec.theta_K
    for a, d in enumerate(degrees):
        assert np.max(np.abs(th[a, a] - np.pi * d)) < 1e-11
    off = th - np.stack([np.stack([th[a, b] if a == b else 0 * th[a, b] for b in range(len(degrees))])
                         for a in range(len(degrees))])
    assert np.max(np.abs(off)) < 1e-11


def test_lambda_const_matches_slope():
    base = make_flat_torus(1, 8)
    spec = make_split_bundle(base, (3, 1))
    assert spec.slope == 2.0
    assert spec.lambda_const == pytest.approx(2 * np.pi * 2 / base.volume)


def test_constant_deformation_curvature():
    # h = identity: i Lambda F_K = sum_k |c_k|^2 diag(1, -1) on a flat torus
    for n, coeffs in [(1, {(0, 0, 1): 0.3}), (2, {(0, 0, 1): 0.3, (1, 0, 1): 0.4j})]:
        base = make_flat_torus(n, 8)
        spec = make_split_bundle(base, (0, 0))
        spec = deform(spec, constant_beta(spec, coeffs))
        s = sum(abs(v) ** 2 for v in coeffs.values())
        th = spec.theta_K
        assert np.max(np.abs(th[0, 0] - s)) < 1e-12
        assert np.max(np.abs(th[1, 1] + s)) < 1e-12
        assert np.max(np.abs(th[0, 1])) < 1e-12
        assert spec.integrability_residual() == 0.0


# -- metric-dependent curvature ----------------------------------------------

@given(a=st.floats(-0.6, 0.6), m=st.integers(-1, 1), k=st.integers(-1, 1), d=st.integers(-2, 2))
def test_conformal_line_bundle_curvature(a, m, k, d):
    # h = exp(phi) gives theta = pi d - (1/4) Laplacian phi; exp(phi) has an
    # infinite spectrum, so the mode range is kept where G=32 resolves it
    base = make_flat_torus(1, 32)
    spec = make_split_bundle(base, (d,))
    x, y = base.coords()
    phi = a * np.cos(2 * np.pi * (m * x + k * y))
    th = mean_curvature(conformal_metric(spec, [phi]), spec)
    want = np.pi * d + np.pi ** 2 * (m * m + k * k) * phi
    assert np.max(np.abs(th[0, 0] - want)) < 1e-9


def test_conformal_on_surface():
    base = make_flat_torus(2, 16)
    spec = make_split_bundle(base, (0, 0))
    x1, y1, x2, y2 = base.coords()
    phi = 0.4 * np.cos(2 * np.pi * x1) + 0.2 * np.sin(2 * np.pi * y2)
    th = mean_curvature(conformal_metric(spec, [phi, -phi]), spec)
    assert np.max(np.abs(th[0, 0] - np.pi ** 2 * phi)) < 1e-8
    assert np.max(np.abs(th[1, 1] + np.pi ** 2 * phi)) < 1e-8


def test_twisted_commutator():
    # [nabla_z, nabla_zbar] on Hom(L_b, L_a) is pi (d_a - d_b)
    base = make_flat_torus(1, 32)
    spec = make_split_bundle(base, (1, -1))
    tw = spec.twist
    u = np.zeros((2, 2) + base.shape, dtype=complex)
    u[0, 1] = tw.section_packet(2, 0.4, 1)
    u[1, 0] = tw.section_packet(-2, 0.7, 0)
    u[0, 0] = np.cos(2 * np.pi * tw.x)
    c = tw.d_dz(tw.d_dzbar(u)) - tw.d_dzbar(tw.d_dz(u))
    delta = np.array([[0, 2], [-2, 0]])
    for a in range(2):
        for b in range(2):
            assert np.max(np.abs(c[a, b] - np.pi * delta[a, b] * u[a, b])) < 1e-8


def test_cocycle_is_trivial_for_integer_degrees():
    base = make_flat_torus(1, 8)
    spec = make_split_bundle(base, (3, -2))
    assert np.allclose(spec.twist.cocycle_phase(), 1.0)
    y = np.array([0.0, 1.0])
    t = spec.twist.transition_x(y)
    assert np.allclose(t[:, 0], t[:, 1])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_theta_is_self_adjoint(seed):
    # random packets need G=32 to be resolved
    base = make_flat_torus(1, 32)
    spec = make_split_bundle(base, (1, -1))
    spec = deform(spec, packet_beta(spec, 0.3))
    h = random_metric(spec, seed, 0.5)
    th = mean_curvature(h, spec)
    assert adjoint_defect(th, h.values) < 1e-9


@pytest.mark.parametrize("degrees,seed", [((1, -1), 3), ((2, 0), 4), ((1, 1, -1), 5)])
def test_degree_is_metric_independent(degrees, seed):
    base = make_flat_torus(1, 16)
    spec = make_split_bundle(base, degrees)
    h = random_metric(spec, seed, 0.5)
    assert degree(h, spec) == pytest.approx(sum(degrees), abs=1e-9)


def test_traceless_random_metric_has_unit_determinant():
    base = make_flat_torus(1, 16)
    spec = make_split_bundle(base, (1, -1))
    h = random_metric(spec, 7, 0.6, traceless=True)
    det = np.real(np.linalg.det(np.moveaxis(h.values, (0, 1), (-2, -1))))
    assert np.max(np.abs(det - 1)) < 1e-12
    assert h.hermitian_defect() < 1e-14


def test_chern_curvature_contracts_to_theta():
    base = make_flat_torus(2, 8)
    spec = make_split_bundle(base, (0, 0))
    spec = deform(spec, constant_beta(spec, {(0, 0, 1): 0.2}))
    h = random_metric(spec, 1, 0.3)
    F = chern_curvature(h, spec).values
    assert np.max(np.abs(F[0, 0] + F[1, 1] - mean_curvature(h, spec))) < 1e-10


# -- validation ---------------------------------------------------------------

def test_rejects_increasing_degrees():
    with pytest.raises(BundleError):
        make_split_bundle(make_flat_torus(1, 8), (-1, 1))


def test_rejects_degrees_on_surface():
    with pytest.raises(BundleError):
        make_split_bundle(make_flat_torus(2, 8), (1, -1))


def test_deform_rejects_lower_triangular():
    spec = make_split_bundle(make_flat_torus(1, 8), (0, 0))
    with pytest.raises(BundleError):
        deform(spec, constant_beta(spec, {(0, 1, 0): 0.1}))


def test_deform_rejects_wrong_bidegree_and_shape():
    spec = make_split_bundle(make_flat_torus(1, 8), (0, 0))
    with pytest.raises(BundleError):
        deform(spec, FormField((1, 0), constant_beta(spec, {(0, 0, 1): 0.1})))
    with pytest.raises(BundleError):
        deform(spec, np.zeros((1, 3, 3)))


def test_deform_rejects_non_integrable():
    base = make_flat_torus(2, 8)
    spec = make_split_bundle(base, (0, 0))
    beta = constant_beta(spec, {})
    # beta_1 depending on x2 alone has dbar_2 beta_1 != 0
    beta[0, 0, 1] = np.cos(2 * np.pi * base.coords()[2])
    with pytest.raises(BundleError):
        deform(spec, beta)


def test_deform_by_zero_is_split():
    spec = make_split_bundle(make_flat_torus(1, 8), (0, 0))
    assert deform(spec, constant_beta(spec, {})).is_split


def test_breakdown_on_indefinite_metric():
    base = make_flat_torus(1, 8)
    h = mf.identity(2, base.shape).copy()
    h[1, 1, 3, 4] = -0.5
    with pytest.raises(NumericalBreakdown) as info:
        check_conditioning(h)
    assert info.value.location == (3, 4)


def test_metric_check():
    base = make_flat_torus(1, 8)
    v = mf.identity(2, base.shape).copy()
    v[0, 1] = 0.5
    with pytest.raises(BundleError):
        MetricField(v).check()


def test_spec_without_twist_on_surface():
    spec = BundleSpec(make_flat_torus(2, 8), (0, 0))
    assert spec.twist is None and spec.rank == 2 and spec.dim_c == 2

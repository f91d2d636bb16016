import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmc_index_lab import ambient, dec
from cmc_index_lab.errors import MeshError

CLOSED = [
    ("r3", "sphere", (), 0),
    ("s3", "clifford", (), 2),
    ("t3", "subtorus", (), 2),
    ("rect_t2xr", "slice_torus", (), 2),
    ("r3", "double_plate", (), 4),
]
WITH_BOUNDARY = [
    ("ball", "disk", (), 0),
    ("ball", "annulus", (), 1),
    ("ball", "cap", (("H", 1.0),), 0),
    ("t3", "punctured_torus", (), 2),
    ("r3", "holed_plate", (("holes", 3),), 3),
]


@pytest.mark.parametrize("space,family,params,dim", CLOSED + WITH_BOUNDARY)
def test_harmonic_dimension(cache, space, family, params, dim):
    assert len(cache.basis(space, family, 32, params)) == dim


@pytest.mark.parametrize("space,family,params,dim", CLOSED + WITH_BOUNDARY)
def test_fields_are_harmonic(cache, space, family, params, dim):
    for xi in cache.basis(space, family, 32, params):
        assert xi.residual_div < 1e-8
        assert xi.residual_codiv < 1e-8


@pytest.mark.parametrize("space,family,params,dim", WITH_BOUNDARY)
def test_tangential_fields_are_tangent(cache, space, family, params, dim):
    for xi in cache.basis(space, family, 32, params):
        assert xi.tangential
        assert xi.tangency_residual < 1e-8


def test_wrong_basis_kind_rejected(cache):
    with pytest.raises(MeshError):
        dec.harmonic_basis(cache.mesh("ball", "annulus", 16))
    with pytest.raises(MeshError):
        dec.tangential_harmonic_basis(cache.mesh("s3", "clifford", 16))


@pytest.mark.parametrize("space,family", [("s3", "clifford"), ("r3", "double_plate"), ("ball", "annulus")])
def test_d1_d0_vanishes(cache, space, family):
    D = dec.build_dec(cache.mesh(space, family, 24))
    assert abs(D.d1 @ D.d0).max() == 0


def test_constants_in_kernel(cache):
    D = dec.build_dec(cache.mesh("r3", "sphere", 32))
    assert np.abs(D.laplacian @ np.ones(D.d0.shape[1])).max() < 1e-12


def test_flat_torus_fourier_mode(cache):
    m = cache.mesh("rect_t2xr", "slice_torus", 64)
    D = dec.build_dec(m)
    f = np.cos(2 * np.pi * m.uv[:, 0]) + np.sin(2 * np.pi * m.uv[:, 1])
    Lf = D.laplacian @ f
    assert np.linalg.norm(Lf - 4 * np.pi**2 * f) / np.linalg.norm(4 * np.pi**2 * f) < 1e-2
    assert D.negative_cotan == 0


def _chart_derivatives(m):
    """Ambient images of d/du and d/dv at the vertices of a slice torus."""
    chart = np.column_stack([m.uv, np.zeros(m.n_vertices)])
    J = ambient.embedding_jacobian(m.space, chart)
    return J[..., 0], J[..., 1]


def _fit_constant(m, xi):
    du, dv = _chart_derivatives(m)
    X = xi.vectors
    A = np.stack([du.ravel(), dv.ravel()], axis=1)
    coef, *_ = np.linalg.lstsq(A, X.ravel(), rcond=None)
    resid = np.linalg.norm(A @ coef - X.ravel()) / np.linalg.norm(X)
    return coef, resid


def test_flat_torus_fields_are_parallel(cache):
    m = cache.mesh("rect_t2xr", "slice_torus", 64)
    coefs = []
    for xi in cache.basis("rect_t2xr", "slice_torus", 64):
        c, resid = _fit_constant(m, xi)
        assert resid < 1e-3
        coefs.append(c)
    assert abs(np.linalg.det(np.array(coefs))) > 1e-3


def test_flat_torus_rotation_maps_du_to_dv(cache):
    m = cache.mesh("rect_t2xr", "slice_torus", 64)
    xi = cache.basis("rect_t2xr", "slice_torus", 64)[0]
    c, _ = _fit_constant(m, xi)
    c_rot, resid = _fit_constant(m, dec.star_rotate(m, xi))
    assert resid < 1e-3
    # unit square lattice: rotation by 90 degrees in the (u, v) plane, up to orientation
    assert np.allclose(np.abs(c_rot), np.abs(c[::-1]), atol=1e-3)
    assert abs(c_rot @ c) < 1e-3 * (c @ c)


def test_basis_stable_under_refinement(cache):
    coef = {}
    for res in (64, 128):
        m = cache.mesh("rect_t2xr", "slice_torus", res)
        C = np.array([_fit_constant(m, xi)[0] for xi in cache.basis("rect_t2xr", "slice_torus", res)])
        Q, _ = np.linalg.qr(C.T)
        coef[res] = Q @ Q.T
    assert np.linalg.norm(coef[64] - coef[128], 2) < 1e-2


@pytest.mark.parametrize("space,family,params", [("s3", "clifford", ()), ("ball", "annulus", ()), ("r3", "double_plate", ())])
def test_star_rotation_properties(cache, space, family, params):
    m = cache.mesh(space, family, 32, params)
    M = cache.assembly(space, family, 32, params).M if family != "double_plate" else None
    for xi in cache.basis(space, family, 32, params):
        r = dec.star_rotate(m, xi)
        rr = dec.star_rotate(m, r)
        assert np.abs(rr.values + xi.values).max() < 1e-12
        assert np.abs(rr.form + xi.form).max() < 1e-12 * np.abs(xi.form).max()
        assert np.abs(np.linalg.norm(r.values, axis=1) - np.linalg.norm(xi.values, axis=1)).max() < 1e-12
        if M is not None:
            assert abs(r.norm_L2(M) - xi.norm_L2(M)) < 1e-10 * xi.norm_L2(M)
        # the residuals swap roles
        assert r.residual_div == xi.residual_codiv


def test_coordinate_functions_parseval(cache):
    m = cache.mesh("s3", "clifford", 32)
    for xi in cache.basis("s3", "clifford", 32):
        for rotated in (False, True):
            U = dec.coordinate_functions(m, xi, rotated=rotated)
            assert U.shape == (4, m.n_vertices)
            assert np.abs((U**2).sum(0) - (xi.values**2).sum(1)).max() < 1e-12


def test_planar_annulus_field_has_no_vertical_component(cache):
    m = cache.mesh("ball", "annulus", 32)
    (xi,) = cache.basis("ball", "annulus", 32)
    assert np.abs(dec.coordinate_functions(m, xi)[2]).max() < 1e-12


def test_annulus_field_circulates(cache):
    m = cache.mesh("ball", "annulus", 32)
    (xi,) = cache.basis("ball", "annulus", 32)
    X = xi.vectors
    P = m.points
    radial = np.einsum("nd,nd->n", X[:, :2], P[:, :2]) / np.linalg.norm(P[:, :2], axis=1)
    assert np.abs(radial).max() < 1e-2 * np.abs(X).max()


def test_closed_pairings_vanish(cache):
    m = cache.mesh("s3", "clifford", 32)
    D = dec.build_dec(m)
    for xi in cache.basis("s3", "clifford", 32):
        plain, star = dec.coordinate_pairings(m, D, xi.form)
        assert np.abs(plain).max() < 1e-12
        assert np.abs(star).max() < 1e-12


def test_wedge_pairing_agrees_with_vertex_quadrature(cache):
    # nonplanar boundary case where int <E_j, *xi> is genuinely nonzero
    m = cache.mesh("t3", "punctured_torus", 64)
    D = dec.build_dec(m)
    for xi in cache.basis("t3", "punctured_torus", 64):
        _, star = dec.coordinate_pairings(m, D, xi.form)
        _, quad = dec.vertex_quadrature_pairings(m, xi, dec.star_rotate(m, xi, D).vectors)
        assert np.abs(star).max() > 1e-2
        assert np.abs(star - quad).max() < 0.05 * np.abs(star).max()


@pytest.mark.parametrize("space,family,params", [("ball", "annulus", ()), ("r3", "holed_plate", (("holes", 3),))])
def test_planar_rotated_pairings_vanish(cache, space, family, params):
    # in a plane *xi = J xi pointwise, so int <E, *xi> = J int xi = 0
    m = cache.mesh(space, family, 32, params)
    D = dec.build_dec(m)
    for xi in cache.basis(space, family, 32, params):
        assert np.abs(dec.coordinate_pairings(m, D, xi.form)[1]).max() < 1e-12


def test_wedge_of_coordinate_differentials_is_area():
    from cmc_index_lab.mesh import ImmersedMesh

    m = ImmersedMesh(ambient.catalog_space("r3"), np.array([[0, 0, 0], [1, 0, 0], [0.3, 0.7, 0]], float), np.array([[0, 1, 2]]))
    D = dec.build_dec(m)
    dX = D.d0 @ m.points
    assert dec.wedge_with_exact(m, dX, dX[:, 1]) == pytest.approx([m.area, 0, 0], abs=1e-15)
    assert dec.wedge_with_exact(m, dX, dX[:, 0]) == pytest.approx([0, -m.area, 0], abs=1e-15)


def test_generators_deterministic(cache):
    m = cache.mesh("r3", "double_plate", 24)
    a = dec.cohomology_generators(m)
    b = dec.cohomology_generators(m)
    assert np.array_equal(a, b)
    assert a.shape[0] == 4


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_generators_are_closed(seed):
    from conftest import _mesh

    m = _mesh("t3", "punctured_torus", 16)
    D = dec.build_dec(m)
    gens = dec.cohomology_generators(m)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(len(gens)) @ gens
    assert np.abs(D.d1 @ w).max() < 1e-12

import numpy as np
import pytest

from cmc_index_lab import ambient, geometry, surfaces
from cmc_index_lab.errors import DegenerateTriangle
from cmc_index_lab.mesh import ImmersedMesh


def rms(geom, err):
    w = geom.vertex_areas / geom.vertex_areas.sum()
    return float(np.sqrt(w @ err**2))


def test_unit_sphere_curvatures(cache):
    g = cache.geom("r3", "sphere", 64)
    assert rms(g, g.H - 2.0) / 2.0 < 1e-3
    assert rms(g, g.K - 1.0) < 1e-3
    assert rms(g, g.A_norm_sq - 2.0) / 2.0 < 1e-3
    assert g.H.min() > 0


def test_sphere_radius_scaling(cache):
    g = cache.geom("r3", "sphere", 64, (("radius", 2.0),))
    assert abs(g.H_stats()["mean"] - 1.0) < 1e-3


def test_clifford_is_minimal_and_flat(cache):
    g = cache.geom("s3", "clifford", 64)
    assert np.abs(g.H).max() < 1e-3
    assert np.abs(g.K).max() < 1e-3
    assert rms(g, g.A_norm_sq - 2.0) / 2.0 < 1e-3
    assert g.normal_convention.startswith("minimal")


def test_slice_torus_totally_geodesic(cache):
    g = cache.geom("rect_t2xr", "slice_torus", 32)
    assert np.abs(g.H).max() < 1e-10
    assert np.abs(g.shape).max() < 1e-10


def test_slice_sphere_minimal(cache):
    g = cache.geom("s2xr", "slice_sphere", 32)
    assert np.abs(g.H).max() < 1e-8


@pytest.mark.parametrize(
    "space,family",
    [("r3", "sphere"), ("s3", "clifford"), ("t3", "subtorus"), ("s2xr", "slice_sphere"), ("hexagonal", "slice_torus")],
)
def test_normal_is_unit_normal_to_surface_and_tangent_to_space(cache, space, family):
    m = cache.mesh(space, family, 32)
    g = cache.geom(space, family, 32)
    N = g.normals
    assert np.abs(np.linalg.norm(N, axis=1) - 1).max() < 1e-8
    assert np.abs(np.einsum("nd,nda->na", N, g.frames)).max() < 1e-8
    P = m.space.tangent_projector(m.points)
    assert np.abs(np.einsum("nij,nj->ni", P, N) - N).max() < 1e-8


def test_frames_orthonormal(cache):
    g = cache.geom("s3", "clifford", 32)
    G = np.einsum("nda,ndb->nab", g.frames, g.frames)
    assert np.abs(G - np.eye(2)).max() < 1e-12


@pytest.mark.parametrize("family,space,exact", [("sphere", "r3", (2.0, 1.0)), ("clifford", "s3", (0.0, 0.0))])
def test_curvature_converges_under_refinement(family, space, exact):
    errs = []
    for res in (32, 64, 128):
        m = surfaces.generate_surface(ambient.catalog_space(space), family, resolution=res)
        g = geometry.compute_geometry(m)
        errs.append((np.abs(g.H - exact[0]).max(), np.abs(g.K - exact[1]).max()))
    for (h0, k0), (h1, k1) in zip(errs, errs[1:]):
        assert h1 <= 1.1 * h0 + 1e-12
        assert k1 <= 1.1 * k0 + 1e-12


def test_decomposition_residual_small_at_128():
    for space, family in [("s3", "clifford"), ("t3", "subtorus")]:
        m = surfaces.generate_surface(ambient.catalog_space(space), family, resolution=128)
        assert geometry.decomposition_error(geometry.compute_geometry(m)) < 1e-2


def test_cap_generator_is_free_boundary(cache):
    # angle between the analytic cap normal and the ball normal at boundary vertices
    m = cache.mesh("ball", "cap", 64, (("H", 1.0),))
    ref = surfaces.cap_reference(m.space, 1.0)
    centre = np.array([0.0, 0.0, ref["centre_distance"]])
    x = m.points[m.boundary_vertices]
    N = (x - centre) / ref["sphere_radius"]
    nu = x / np.linalg.norm(x, axis=1, keepdims=True)
    assert np.arcsin(np.abs(np.einsum("nd,nd->n", N, nu))).max() < 1e-6


def test_cap_mean_curvature(cache):
    g = cache.geom("ball", "cap", 64, (("H", 1.0),))
    assert abs(g.H_stats()["mean"] - 1.0) < 1e-3


def test_cap_free_boundary_at_128():
    m = surfaces.generate_surface(ambient.catalog_space("ball"), "cap", {"H": 1.0}, resolution=128)
    assert geometry.free_boundary_angle(m, geometry.compute_geometry(m)).max() < 1e-4


def test_degenerate_triangle_rejected():
    S = ambient.catalog_space("r3")
    P = np.array([[0, 0, 0], [1, 0, 0], [0.5, 1e-9, 0], [0.5, 0.5, 1]], float)
    F = np.array([[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]])
    with pytest.raises(DegenerateTriangle):
        geometry.check_triangles(ImmersedMesh(S, P, F))


def test_jet_fit_of_plane_has_no_curvature():
    rng = np.random.default_rng(0)
    s, t = rng.uniform(-0.1, 0.1, (2, 40))
    e1, e2 = np.array([1.0, 2.0, 0.0, 1.0]), np.array([0.0, 1.0, -1.0, 2.0])
    Y = np.outer(s, e1) + np.outer(t, e2)
    J, Q = geometry.jet_fit(Y, 4)
    assert np.abs(Q).max() < 1e-8
    # J spans the plane
    basis = np.linalg.qr(np.column_stack([e1, e2]))[0]
    assert np.abs(J - basis @ (basis.T @ J)).max() < 1e-10

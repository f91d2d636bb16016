import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmc_index_lab import ambient, dec, verify
from cmc_index_lab.errors import InvalidParameter

CLIFFORD = ("s3", "clifford", 64)


def test_admissibility_on_closed_families(cache):
    for space, family in [("s3", "clifford"), ("t3", "subtorus")]:
        m = cache.mesh(space, family, 32)
        it = verify.check_admissibility(m, cache.basis(space, family, 32))
        assert it.verdict == verify.PASS
        assert it.residual < 1e-8
        assert it.witness["star_asserted"]


def test_admissibility_empty_basis_is_vacuous(cache):
    it = verify.check_admissibility(cache.mesh("r3", "sphere", 16), [])
    assert it.verdict == verify.PASS and it.witness["vacuous"]


def test_pairings_are_linear_in_the_form(cache):
    m = cache.mesh("t3", "punctured_torus", 32)
    D = dec.build_dec(m)
    a, b = cache.basis("t3", "punctured_torus", 32)
    pa, sa = dec.coordinate_pairings(m, D, a.form)
    pb, sb = dec.coordinate_pairings(m, D, b.form)
    pc, sc = dec.coordinate_pairings(m, D, 2.5 * a.form - 0.5 * b.form)
    assert np.allclose(pc, 2.5 * pa - 0.5 * pb, atol=1e-13)
    assert np.allclose(sc, 2.5 * sa - 0.5 * sb, atol=1e-13)


def test_admissibility_residual_is_scale_free(cache):
    m = cache.mesh("s3", "clifford", 32)
    basis = cache.basis("s3", "clifford", 32)
    r1 = verify.check_admissibility(m, basis).residual
    r2 = verify.check_admissibility(m, [verify.combine(basis, [7.0, 0.0]), basis[1]]).residual
    assert r2 <= max(r1, 1e-15) * 2 + 1e-15


def test_pointwise_identity(cache):
    m, g = cache.mesh(*CLIFFORD), cache.geom(*CLIFFORD)
    for xi in cache.basis(*CLIFFORD):
        it = verify.check_pointwise_A_identity(m, g, xi)
        assert it.verdict == verify.PASS
        assert it.residual < 1e-10


def test_pointwise_identity_skips_vanishing_field(cache):
    m, g = cache.mesh(*CLIFFORD), cache.geom(*CLIFFORD)
    xi = verify.combine(cache.basis(*CLIFFORD), [0.0, 0.0])
    it = verify.check_pointwise_A_identity(m, g, xi)
    assert it.witness["evaluated"] == 0 and it.verdict == verify.PASS


@pytest.mark.parametrize("rotated", [False, True])
def test_coordinate_identity_clifford(cache, rotated):
    m, g, a = cache.mesh(*CLIFFORD), cache.geom(*CLIFFORD), cache.assembly(*CLIFFORD)
    for xi in cache.basis(*CLIFFORD):
        it = verify.check_coordinate_identity(m, g, a, xi, rotated=rotated)
        assert it.verdict == verify.PASS, it.to_dict()


def test_coordinate_identity_not_applicable_off_boundary(cache):
    m = cache.mesh("ball", "annulus", 32)
    (xi,) = cache.basis("ball", "annulus", 32)
    it = verify.check_coordinate_identity(m, cache.geom("ball", "annulus", 32), cache.assembly("ball", "annulus", 32), xi)
    assert it.verdict == verify.NA
    assert it.witness["boundary_vertices_off_dM"] > 0


def test_coordinate_identity_detects_wrong_potential(cache):
    from cmc_index_lab import jacobi

    m, g = cache.mesh(*CLIFFORD), cache.geom(*CLIFFORD)
    a = jacobi.assemble(m, g, potential_shift=0.5)
    xi = cache.basis(*CLIFFORD)[0]
    assert verify.check_coordinate_identity(m, g, a, xi).verdict == verify.FAIL


def test_clifford_pencil(cache):
    p = verify.hypothesis_pencil(cache.mesh(*CLIFFORD), cache.geom(*CLIFFORD), cache.basis(*CLIFFORD))
    assert abs(p.eta_star + 2.0) <= 0.02 * 2.0
    assert p.holds(0.0) and p.holds(-1.0)
    assert verify.check_pencil(p).verdict == verify.PASS


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
@settings(max_examples=20, deadline=None)
def test_pencil_invariant_under_change_of_basis(entries):
    from conftest import _basis, _geom, _mesh

    G = np.array(entries).reshape(2, 2)
    if abs(np.linalg.det(G)) < 1e-2 * max(1.0, np.abs(G).max() ** 2):
        return
    args = ("s3", "clifford", 24)
    m, g, basis = _mesh(*args), _geom(*args), _basis(*args)
    p0 = verify.hypothesis_pencil(m, g, basis)
    p1 = verify.hypothesis_pencil(m, g, [verify.combine(basis, row) for row in G])
    assert p1.eta_star == pytest.approx(p0.eta_star, abs=1e-10 * max(1.0, abs(p0.eta_star)))


def test_boundary_term_lowers_eta_star(cache):
    args = ("ball", "annulus", 32)
    m, g, basis = cache.mesh(*args), cache.geom(*args), cache.basis(*args)
    with_b = verify.hypothesis_pencil(m, g, basis, with_boundary=True)
    without = verify.hypothesis_pencil(m, g, basis, with_boundary=False)
    assert with_b.eta_star <= without.eta_star + 1e-12


def test_slice_torus_pencil_fails_hypothesis(cache):
    args = ("rect_t2xr", "slice_torus", 32)
    p = verify.hypothesis_pencil(cache.mesh(*args), cache.geom(*args), cache.basis(*args))
    assert p.eta_star >= 0
    it = verify.check_pencil(p)
    assert it.verdict == verify.NA and it.witness["status"] == "fail-hypothesis"


def test_empty_pencil():
    with pytest.raises(InvalidParameter):
        verify.hypothesis_pencil(None, None, [])
    assert verify.check_pencil(None).verdict == verify.NA


@pytest.mark.parametrize(
    "g,r,d,convex,expected",
    [(1, 0, 4, False, 1), (2, 0, 4, False, 1), (5, 0, 4, False, 2), (0, 1, 3, True, 0), (3, 2, 3, False, 1), (3, 2, 3, True, 1), (10, 1, 3, True, 3)],
)
def test_index_lower_bound(g, r, d, convex, expected):
    assert verify.index_lower_bound(g, r, d, convex) == expected


def test_bound_clifford(cache):
    m = cache.mesh(*CLIFFORD)
    p = verify.hypothesis_pencil(m, cache.geom(*CLIFFORD), cache.basis(*CLIFFORD))
    it = verify.verify_index_bound(m, cache.spectrum(*CLIFFORD), p)
    assert it.verdict == verify.PASS
    assert it.witness["bound"] == 1 and it.witness["index"] == 4


def test_bound_not_applicable_when_hypothesis_fails(cache):
    args = ("rect_t2xr", "slice_torus", 32)
    m = cache.mesh(*args)
    p = verify.hypothesis_pencil(m, cache.geom(*args), cache.basis(*args))
    it = verify.verify_index_bound(m, cache.spectrum(*args), p)
    assert it.verdict == verify.NA and it.witness["index"] == 0


@pytest.mark.parametrize("eta,need", [(-1.0, 1), (0.0, 1)])
def test_concentration_clifford(cache, eta, need):
    m = cache.mesh(*CLIFFORD)
    p = verify.hypothesis_pencil(m, cache.geom(*CLIFFORD), cache.basis(*CLIFFORD))
    it = verify.concentration_count(m, cache.spectrum(*CLIFFORD), p, eta)
    assert it.verdict == verify.PASS
    assert it.threshold == need and it.residual >= 4


def test_concentration_not_applicable_below_eta_star(cache):
    m = cache.mesh(*CLIFFORD)
    p = verify.hypothesis_pencil(m, cache.geom(*CLIFFORD), cache.basis(*CLIFFORD))
    it = verify.concentration_count(m, cache.spectrum(*CLIFFORD), p, -3.0)
    assert it.verdict == verify.NA


def test_concentration_fails_on_a_tampered_spectrum(cache):
    m = cache.mesh(*CLIFFORD)
    p = verify.hypothesis_pencil(m, cache.geom(*CLIFFORD), cache.basis(*CLIFFORD))
    s = cache.spectrum(*CLIFFORD)
    fake = type(s)(**{**s.__dict__, "eigenvalues": np.abs(s.eigenvalues) + 1.0})
    assert verify.concentration_count(m, fake, p, 0.0).verdict == verify.FAIL


def test_zero_boundary_mean_subspace_planar(cache):
    for args in [("ball", "annulus", 32, ()), ("r3", "holed_plate", 32, (("holes", 3),))]:
        m, basis = cache.mesh(*args), cache.basis(*args)
        fields, resid, C = verify.zero_boundary_mean_subspace(m, basis)
        assert resid < 1e-8
        # planar: every rotated pairing vanishes, so the whole basis survives
        assert len(fields) == len(basis)
        assert C.shape == (m.space.d, len(basis))


def test_zero_boundary_mean_subspace_nonplanar(cache):
    args = ("t3", "punctured_torus", 32)
    m, basis = cache.mesh(*args), cache.basis(*args)
    fields, resid, C = verify.zero_boundary_mean_subspace(m, basis)
    assert resid < 1e-8
    assert len(fields) >= max(0, len(basis) - m.space.d)
    D = dec.build_dec(m)
    for f in fields:
        assert np.abs(dec.coordinate_pairings(m, D, f.form)[1]).max() < 1e-8 * math.sqrt(m.area)


def test_zero_boundary_mean_subspace_closed_is_identity(cache):
    basis = cache.basis("s3", "clifford", 32)
    fields, resid, _ = verify.zero_boundary_mean_subspace(cache.mesh("s3", "clifford", 32), basis)
    assert len(fields) == len(basis) and resid == 0.0


def test_threshold_reports():
    it = verify.threshold_report(ambient.catalog_space("t3"), H=2.0)
    assert it.residual == 3.0 and it.verdict == verify.PASS
    it = verify.threshold_report(ambient.catalog_space("rect_t2xr", beta=1.0), H=8.0)
    assert it.verdict == verify.NA
    it = verify.threshold_report(ambient.catalog_space("berger", kappa=8, tau=1))
    assert it.witness["none_required"]
    it = verify.threshold_report(ambient.catalog_space("hexagonal"))
    assert math.isfinite(it.witness["constants_consistency"]["residual_norm"])
    it = verify.threshold_report("scalar-pinched", C=0.6)
    assert it.witness["none_required"]


def test_suite_clifford_passes(cache):
    res = verify.run_suite(cache.mesh(*CLIFFORD), etas=(-1.0, 0.0), geom=cache.geom(*CLIFFORD))
    names = [it.name for it in res.report.items]
    assert {"admissible", "keystep", "prop32", "pencil", "bound", "concentration@-1", "concentration@0"} <= set(names)
    assert res.report.verdict == verify.PASS


def test_coarse_clifford_mesh_misses_the_coordinate_tolerance(cache):
    # res 32 is below the resolution where the 2% tolerance is met
    res = verify.run_suite(cache.mesh("s3", "clifford", 32), checks=("prop32",))
    assert res.report.verdict == verify.FAIL
    assert all(0.02 < it.residual < 0.05 for it in res.report.items)


def test_suite_slice_torus_not_applicable(cache):
    res = verify.run_suite(cache.mesh("rect_t2xr", "slice_torus", 32))
    by = {it.name: it.verdict for it in res.report.items}
    assert by["pencil"] == by["bound"] == verify.NA
    assert res.report.verdict == verify.PASS


def test_suite_cap_is_vacuous(cache):
    res = verify.run_suite(cache.mesh("ball", "cap", 32, (("H", 1.0),)))
    assert res.basis == [] and res.pencil is None
    assert res.report.verdict == verify.PASS
    assert res.spectrum.index == 0


def test_suite_rejects_unknown_check(cache):
    with pytest.raises(InvalidParameter):
        verify.run_suite(cache.mesh("r3", "sphere", 16), checks=("nope",))


def test_report_is_json_serialisable(cache):
    res = verify.run_suite(cache.mesh(*CLIFFORD), geom=cache.geom(*CLIFFORD))
    text = json.dumps(verify.to_jsonable(res.report.to_dict()))
    assert json.loads(text)["verdict"] == "pass"
    assert "prop32" in res.report.table()


def test_verdict_precedence():
    rep = verify.VerificationReport()
    assert rep.verdict == verify.NA
    rep.add(verify.CheckItem("a", "", 0.0, 0.0, verify.NA, {}))
    assert rep.verdict == verify.NA
    rep.add(verify.CheckItem("b", "", 0.0, 0.0, verify.PASS, {}))
    assert rep.verdict == verify.PASS
    rep.add(verify.CheckItem("c", "", 0.0, 0.0, verify.FAIL, {}))
    assert rep.verdict == verify.FAIL

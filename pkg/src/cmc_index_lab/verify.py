"""Machine checks of the harmonic-field index estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import ambient
from .dec import DecOperators, HarmonicField, build_dec, coordinate_pairings, star_rotate
from .errors import InvalidParameter
from .geometry import SurfaceGeometry
from .jacobi import JacobiAssembly, TwistedSpectrum, on_boundary_of_space
from .mesh import ImmersedMesh, genus_and_boundary

PASS, FAIL, NA = "pass", "fail", "not-applicable"

ADMISSIBILITY_TOL = 1e-8
POINTWISE_TOL = 1e-10
COORDINATE_TOL = 2e-2
SUBSPACE_TOL = 1e-8


@dataclass
class CheckItem:
    name: str
    anchor: str
    residual: float
    threshold: float
    verdict: str
    witness: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "anchor": self.anchor,
            "residual": _num(self.residual),
            "threshold": _num(self.threshold),
            "verdict": self.verdict,
            "witness": to_jsonable(self.witness),
        }


@dataclass
class VerificationReport:
    items: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def verdict(self):
        verdicts = [it.verdict for it in self.items]
        if FAIL in verdicts:
            return FAIL
        if PASS in verdicts:
            return PASS
        return NA

    def add(self, item: CheckItem):
        self.items.append(item)
        return item

    def to_dict(self):
        return {"provenance": self.provenance, "verdict": self.verdict, "checks": [it.to_dict() for it in self.items]}

    def table(self):
        rows = [f"{'check':<28} {'verdict':<15} {'residual':>12} {'threshold':>12}"]
        for it in self.items:
            rows.append(f"{it.name:<28} {it.verdict:<15} {_fmt(it.residual):>12} {_fmt(it.threshold):>12}")
        rows.append(f"overall: {self.verdict}")
        return "\n".join(rows)


@dataclass
class HypothesisPencil:
    L_mat: np.ndarray
    R_mat: np.ndarray
    eta_star: float
    with_boundary: bool

    def holds(self, eta=0.0):
        """Hypothesis L < eta R on every nonzero combination."""
        return bool(self.eta_star < eta)

    def to_dict(self):
        return {
            "L": self.L_mat.tolist(),
            "R": self.R_mat.tolist(),
            "eta_star": float(self.eta_star),
            "with_boundary": self.with_boundary,
        }


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _fmt(x):
    return "-" if x is None else f"{x:.3e}"


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# quadrature helpers


def _boundary_weights(mesh: ImmersedMesh):
    """Trapezoid weights of boundary arclength at each vertex."""
    w = np.zeros(mesh.n_vertices)
    be = mesh.edges[mesh.boundary_edge_mask]
    L = np.linalg.norm(mesh.points[be[:, 1]] - mesh.points[be[:, 0]], axis=1)
    np.add.at(w, be[:, 0], L / 2)
    np.add.at(w, be[:, 1], L / 2)
    return w


def _boundary_mean_curvature(mesh: ImmersedMesh):
    """Mean curvature of dM at mesh boundary vertices lying on dM, else 0."""
    out = np.zeros(mesh.n_vertices)
    on = on_boundary_of_space(mesh)
    if on.any():
        out[on] = mesh.space.boundary.mean_curvature(mesh.points[on])
    return out


def combine(basis, coeffs) -> HarmonicField:
    """Linear combination sum_a coeffs[a] * basis[a] as a new field."""
    coeffs = np.asarray(coeffs, dtype=float)
    return HarmonicField(
        sum(c * xi.values for c, xi in zip(coeffs, basis)),
        basis[0].frames,
        sum(c * xi.form for c, xi in zip(coeffs, basis)),
        residual_div=max(xi.residual_div for xi in basis),
        residual_codiv=max(xi.residual_codiv for xi in basis),
        tangential=basis[0].tangential,
        dual=basis[0].dual,
        tangency_residual=max(xi.tangency_residual for xi in basis),
        info={"combination": coeffs.tolist()},
        primal_form=None if basis[0].primal_form is None else sum(c * xi.primal_form for c, xi in zip(coeffs, basis)),
    )


# ---------------------------------------------------------------------------
# checks


def check_admissibility(mesh: ImmersedMesh, basis, dec: DecOperators | None = None) -> CheckItem:
    """Coordinate integrals of xi (and star xi on closed meshes) must vanish."""
    anchor = "int <E_j, xi> = 0 (and int <E_j, *xi> = 0 without boundary)"
    if not basis:
        return CheckItem("admissible", anchor, 0.0, ADMISSIBILITY_TOL, PASS, {"vacuous": True})
    dec = build_dec(mesh) if dec is None else dec
    closed = not mesh.boundary_edge_mask.any()
    worst = 0.0
    plain_all, star_all, quad = [], [], []
    for xi in basis:
        norm = math.sqrt(max(xi.form @ (dec.star1 * xi.form), 1e-300))
        scale = math.sqrt(mesh.area) * norm
        plain, star = coordinate_pairings(mesh, dec, xi.form)
        plain_all.append(plain / scale)
        star_all.append(star / scale)
        quad.append(mesh.vertex_areas @ xi.vectors)
        worst = max(worst, np.max(np.abs(plain)) / scale)
        if closed:
            worst = max(worst, np.max(np.abs(star)) / scale)
    witness = {
        "int_E_xi": plain_all,
        "int_E_star_xi": star_all,
        "star_asserted": closed,
        "vertex_quadrature_int_E_xi": quad,
    }
    return CheckItem("admissible", anchor, worst, ADMISSIBILITY_TOL, PASS if worst < ADMISSIBILITY_TOL else FAIL, witness)


def check_pointwise_A_identity(mesh: ImmersedMesh, geom: SurfaceGeometry, xi: HarmonicField) -> CheckItem:
    """sum_i |A(e_i, xi)|^2 + |A(e_i, *xi)|^2 = |A|^2 |xi|^2 at each vertex."""
    anchor = "sum_i |A(e_i,xi)|^2 + |A(e_i,*xi)|^2 = |A|^2 |xi|^2"
    v = xi.values
    rv = np.column_stack([-v[:, 1], v[:, 0]])
    mag = np.linalg.norm(v, axis=1)
    keep = mag > 1e-10 * mag.max() if mag.max() > 0 else np.zeros(len(v), bool)
    Av = np.einsum("nab,nb->na", geom.shape, v)
    Arv = np.einsum("nab,nb->na", geom.shape, rv)
    lhs = np.einsum("na,na->n", Av, Av) + np.einsum("na,na->n", Arv, Arv)
    rhs = geom.A_norm_sq * mag**2
    denom = np.maximum(np.maximum(lhs, rhs), 1e-300)
    rel = np.where((lhs == 0) & (rhs == 0), 0.0, np.abs(lhs - rhs) / denom)[keep]
    worst = float(rel.max(initial=0.0))
    witness = {"evaluated": int(keep.sum()), "skipped": int((~keep).sum())}
    return CheckItem("keystep", anchor, worst, POINTWISE_TOL, PASS if worst < POINTWISE_TOL else FAIL, witness)


def coordinate_identity_sides(mesh, geom, assembly, xi: HarmonicField, with_boundary: bool):
    """Left: sum_j Q(u_j, u_j).  Right: the curvature integral."""
    space = mesh.space
    U = xi.vectors  # (n, d); column j is u_j
    left = float(np.einsum("nj,nj->", U, assembly.Q @ U))
    w = mesh.vertex_areas
    P = mesh.points
    v = xi.values
    Av = np.einsum("nab,nb->na", geom.shape, v)
    Bterm = np.zeros(len(P))
    for i in range(2):
        b = space.sff(P, geom.frames[:, :, i], U)
        Bterm += np.einsum("nk,nk->n", b, b)
    xi2 = np.einsum("nk,nk->n", U, U)
    integrand = Bterm + np.einsum("na,na->n", Av, Av) - (geom.A_norm_sq / 2 + space.scalar / 2 + geom.H**2 / 2) * xi2
    right = float(w @ integrand)
    if with_boundary:
        right -= float(_boundary_weights(mesh) @ (_boundary_mean_curvature(mesh) * xi2))
    return left, right


def check_coordinate_identity(
    mesh: ImmersedMesh, geom: SurfaceGeometry, assembly: JacobiAssembly, xi: HarmonicField, with_boundary=None, rotated=False
) -> CheckItem:
    """Compare sum_j Q(u_j, u_j) with its curvature expression."""
    if with_boundary is None:
        with_boundary = bool(mesh.boundary_edge_mask.any())
    field_ = star_rotate(mesh, xi) if rotated else xi
    left, right = coordinate_identity_sides(mesh, geom, assembly, field_, with_boundary)
    scale = max(abs(left), abs(right), 1e-300)
    rel = abs(left - right) / scale
    name = "prop32-star" if rotated else "prop32"
    anchor = "sum_j Q(u_j,u_j) = int sum_i(|B(e_i,xi)|^2+|A(e_i,xi)|^2) - (|A|^2+R+H^2)/2 |xi|^2"
    witness = {"left": left, "right": right}
    off = int(mesh.boundary_vertices.sum() - on_boundary_of_space(mesh).sum())
    if with_boundary and off:
        # the identity needs a free boundary on dM
        witness["boundary_vertices_off_dM"] = off
        return CheckItem(name, anchor, rel, COORDINATE_TOL, NA, witness)
    return CheckItem(name, anchor, rel, COORDINATE_TOL, PASS if rel < COORDINATE_TOL else FAIL, witness)


def hypothesis_pencil(mesh: ImmersedMesh, geom: SurfaceGeometry, basis, with_boundary=None) -> HypothesisPencil:
    """Matrices of the curvature functional and 2 int <xi, zeta> on the basis."""
    if not basis:
        raise InvalidParameter("hypothesis pencil needs a nonempty basis")
    if with_boundary is None:
        with_boundary = bool(mesh.boundary_edge_mask.any())
    space = mesh.space
    P = mesh.points
    w = mesh.vertex_areas
    X = [xi.vectors for xi in basis]
    RX = [np.einsum("nda,na->nd", geom.frames, np.column_stack([-xi.values[:, 1], xi.values[:, 0]])) for xi in basis]
    BX = [[space.sff(P, geom.frames[:, :, i], x) for i in range(2)] for x in X]
    BRX = [[space.sff(P, geom.frames[:, :, i], x) for i in range(2)] for x in RX]
    pot = space.scalar + geom.H**2
    bw = _boundary_weights(mesh) if with_boundary else np.zeros(len(P))
    Hb = _boundary_mean_curvature(mesh)
    q = len(basis)
    L = np.zeros((q, q))
    R = np.zeros((q, q))
    for a in range(q):
        for b in range(a, q):
            dot = np.einsum("nk,nk->n", X[a], X[b])
            bb = sum(np.einsum("nk,nk->n", BX[a][i], BX[b][i]) + np.einsum("nk,nk->n", BRX[a][i], BRX[b][i]) for i in range(2))
            L[a, b] = L[b, a] = w @ (bb - pot * dot) - 2 * bw @ (Hb * dot)
            R[a, b] = R[b, a] = 2 * (w @ dot)
    eta = sla.eigh(L, R, eigvals_only=True)
    return HypothesisPencil(L, R, float(eta[-1]), bool(with_boundary))


def check_pencil(pencil: HypothesisPencil | None) -> CheckItem:
    """Report the hypothesis at eta = 0; a failing hypothesis is not a failure."""
    anchor = "int sum_i(|B(e_i,xi)|^2+|B(e_i,*xi)|^2) - (R+H^2)|xi|^2 < 2 eta int |xi|^2"
    if pencil is None:
        return CheckItem("pencil", anchor, None, 0.0, NA, {"q": 0, "status": "empty basis"})
    status = "holds" if pencil.holds(0.0) else "fail-hypothesis"
    witness = {"q": pencil.L_mat.shape[0], "status": status, **pencil.to_dict()}
    return CheckItem("pencil", anchor, pencil.eta_star, 0.0, PASS if pencil.holds(0.0) else NA, witness)


def zero_boundary_mean_subspace(mesh: ImmersedMesh, basis, dec: DecOperators | None = None):
    """Combinations of the basis with int <*xi, E_j> = 0 for every j.

    Returns (fields, constraint residual, constraint matrix).
    """
    if not basis:
        return [], 0.0, np.zeros((0, 0))
    if not mesh.boundary_edge_mask.any():
        return list(basis), 0.0, np.zeros((0, len(basis)))
    dec = build_dec(mesh) if dec is None else dec
    C = np.array([coordinate_pairings(mesh, dec, xi.form)[1] for xi in basis]).T  # (d, q)
    # scale-free columns: pairing / (sqrt(area) * |xi|), so round-off stays round-off
    norms = np.array([math.sqrt(max(xi.form @ (dec.star1 * xi.form), 1e-300)) for xi in basis])
    Cn = C / (math.sqrt(mesh.area) * norms)
    u, sv, vt = np.linalg.svd(Cn)
    rank = int(np.sum(sv > SUBSPACE_TOL))
    Z = vt[rank:].T / norms[:, None]
    fields = [combine(basis, z) for z in Z.T]
    resid = float(np.abs(C @ Z).max(initial=0.0)) / math.sqrt(mesh.area) if Z.size else 0.0
    return fields, resid, C


# ---------------------------------------------------------------------------
# bounds


def index_lower_bound(g, r, d, mean_convex_r3=False):
    if r == 0:
        return math.ceil(g / d)
    b = max(0, math.ceil((2 * g + r - 1 - d) / (2 * d)))
    if mean_convex_r3:
        b = max(b, math.ceil((2 * g + r - 4) / 6))
    return b


def verify_index_bound(mesh: ImmersedMesh, spectrum: TwistedSpectrum, pencil: HypothesisPencil | None) -> CheckItem:
    """Index >= the genus bound whenever the pencil hypothesis holds at eta = 0."""
    g, r = genus_and_boundary(mesh)
    d = mesh.space.d
    mean_convex = mesh.space.name == "ball"
    bound = index_lower_bound(g, r, d, mean_convex)
    anchor = "index >= ceil(g/d) closed; >= ceil((2g+r-1-d)/(2d)) with boundary"
    witness = {"genus": g, "boundary_components": r, "d": d, "bound": bound, "index": spectrum.index, "integer_bound": "ceil"}
    if pencil is None:
        witness["vacuous"] = True
        verdict = PASS if spectrum.index >= bound else FAIL
        return CheckItem("bound", anchor, float(spectrum.index - bound), 0.0, verdict, witness)
    witness["eta_star"] = pencil.eta_star
    if not pencil.holds(0.0):
        witness["hypothesis"] = "fail-hypothesis"
        return CheckItem("bound", anchor, float(pencil.eta_star), 0.0, NA, witness)
    witness["hypothesis"] = "holds"
    verdict = PASS if spectrum.index >= bound else FAIL
    return CheckItem("bound", anchor, float(spectrum.index - bound), 0.0, verdict, witness)


def concentration_count(
    mesh: ImmersedMesh, spectrum: TwistedSpectrum, pencil: HypothesisPencil | None, eta: float, q: int | None = None
) -> CheckItem:
    """#{lambda < eta} >= q/(2d) (closed) or (q-d)/(2d) (boundary), strict with the band."""
    d = mesh.space.d
    boundary = bool(mesh.boundary_edge_mask.any())
    anchor = "#{lambda < eta} >= q/(2d) closed; >= (q-d)/(2d) with boundary"
    if q is None:
        q = 0 if pencil is None else pencil.L_mat.shape[0]
    required = (q - d) / (2 * d) if boundary else q / (2 * d)
    need = max(0, math.ceil(required - 1e-12))
    lam = spectrum.eigenvalues
    count = int(np.sum(lam < eta - spectrum.band))
    witness = {"eta": eta, "q": q, "d": d, "required": required, "count": count, "truncated": bool(count == len(lam))}
    if q == 0 or pencil is None:
        witness["vacuous"] = True
        return CheckItem(f"concentration@{eta:g}", anchor, float(count), float(need), PASS, witness)
    witness["eta_star"] = pencil.eta_star
    if not eta > pencil.eta_star:
        witness["hypothesis"] = "eta <= eta_star"
        return CheckItem(f"concentration@{eta:g}", anchor, float(count), float(need), NA, witness)
    return CheckItem(f"concentration@{eta:g}", anchor, float(count), float(need), PASS if count >= need else FAIL, witness)


# ---------------------------------------------------------------------------
# thresholds


def threshold_report(space, H: float | None = None, **pinch) -> CheckItem:
    """Whether H^2 exceeds the threshold that makes the genus bound applicable."""
    anchor = "H^2 > sup|B_M|^2 - inf R_M"
    witness = {}
    if isinstance(space, str) and space in ("scalar-pinched", "pinched", "convex-hypersurface"):
        kind = "convex-hypersurface" if space == "convex-hypersurface" else "scalar-pinched"
        th = ambient.pinched_threshold(kind, **pinch)
        witness["kind"] = kind
        witness.update({k: v for k, v in pinch.items()})
    else:
        th = ambient.threshold_H2(space)
        witness["space"] = space.name
        witness["params"] = dict(space.params)
        if space.name == "hexagonal":
            witness["constants_consistency"] = ambient.hexagonal_consistency(space)
        if space.name == "s2xr":
            witness["slice_dichotomy"] = (
                "closed minimal surfaces in S^2 x R are the horizontal slices S^2 x {t} "
                "(maximum principle applied to the height function); they have genus 0"
            )
    witness["threshold"] = th.value
    witness["none_required"] = not th.required
    if H is None:
        witness["H"] = None
        verdict = PASS
        witness["applies"] = "for H^2 > threshold" if th.required else "for every H"
    else:
        applies = th.applies(H)
        witness["H"] = float(H)
        witness["H2"] = float(H) ** 2
        witness["applies"] = applies
        verdict = PASS if applies else NA
    return CheckItem("threshold", anchor, th.value, None if H is None else float(H) ** 2, verdict, witness)


# ---------------------------------------------------------------------------
# full suite

CHECKS = ("admissible", "keystep", "prop32", "pencil", "bound", "concentration")


@dataclass
class SuiteResult:
    report: VerificationReport
    geometry: SurfaceGeometry
    spectrum: TwistedSpectrum | None
    basis: list
    pencil: HypothesisPencil | None


def run_suite(mesh: ImmersedMesh, checks=CHECKS, etas=(0.0,), k=8, seed=0, geom=None) -> SuiteResult:
    """Run the requested checks in a fixed order and collect one report."""
    from .dec import harmonic_basis, tangential_harmonic_basis
    from .geometry import compute_geometry
    from .jacobi import assemble, twisted_spectrum

    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise InvalidParameter(f"unknown checks {sorted(unknown)}; known: {', '.join(CHECKS)}")
    geom = compute_geometry(mesh) if geom is None else geom
    dec = build_dec(mesh)
    boundary = bool(mesh.boundary_edge_mask.any())
    basis = tangential_harmonic_basis(mesh, geom) if boundary else harmonic_basis(mesh, geom)
    g, r = genus_and_boundary(mesh)
    report = VerificationReport(
        provenance={
            **mesh.header(),
            "genus": g,
            "boundary_components": r,
            "basis_dimension": len(basis),
            "tangential": boundary,
        }
    )
    need_spectrum = {"prop32", "bound", "concentration"} & set(checks)
    assembly = assemble(mesh, geom) if need_spectrum else None
    spectrum = twisted_spectrum(assembly, k=k, seed=seed) if {"bound", "concentration"} & set(checks) else None
    pencil = hypothesis_pencil(mesh, geom, basis, with_boundary=boundary) if basis else None

    if "admissible" in checks:
        report.add(check_admissibility(mesh, basis, dec))
        if boundary:
            sub, resid, C = zero_boundary_mean_subspace(mesh, basis, dec)
            report.add(
                CheckItem(
                    "zero-boundary-mean",
                    "int <*xi, E_j> = 0 on the returned subspace, dimension >= q - d",
                    resid,
                    SUBSPACE_TOL,
                    PASS if resid < SUBSPACE_TOL and len(sub) >= len(basis) - mesh.space.d else FAIL,
                    {"q": len(basis), "d": mesh.space.d, "dimension": len(sub), "int_star_xi_E": C},
                )
            )
    if "keystep" in checks:
        if not basis:
            report.add(CheckItem("keystep", "pointwise |A|^2 identity", 0.0, POINTWISE_TOL, PASS, {"vacuous": True}))
        for a, xi in enumerate(basis):
            it = report.add(check_pointwise_A_identity(mesh, geom, xi))
            it.witness["field"] = a
    if "prop32" in checks:
        if not basis:
            report.add(CheckItem("prop32", "coordinate-sum identity", 0.0, COORDINATE_TOL, PASS, {"vacuous": True}))
        for a, xi in enumerate(basis):
            for rotated in (False, True):
                it = report.add(check_coordinate_identity(mesh, geom, assembly, xi, boundary, rotated))
                it.witness["field"] = a
    if "pencil" in checks:
        report.add(check_pencil(pencil))
    if "bound" in checks:
        report.add(verify_index_bound(mesh, spectrum, pencil))
    if "concentration" in checks:
        for eta in etas:
            report.add(concentration_count(mesh, spectrum, pencil, float(eta), q=len(basis)))
    return SuiteResult(report, geom, spectrum, basis, pencil)

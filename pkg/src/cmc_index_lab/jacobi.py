"""Second variation of area and the volume-constrained (twisted) spectrum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from . import fem
from .errors import ClosedFormOnlySpace, MissingGeometry, SolverError
from .geometry import SurfaceGeometry, compute_geometry
from .mesh import ImmersedMesh

DENSE_LIMIT = 3000
EPS_FACTOR = 1e-6
# interpolation constant of the P1 eigenvalue error estimate
APRIORI_CONSTANT = 1.0 / 12.0
BOUNDARY_TOL = 1e-8


def ric_normal(mesh: ImmersedMesh, geom: SurfaceGeometry) -> dict:
    """Ric_M(N, N) from the closed forms and from the Gauss equation."""
    space = mesh.space
    if not space.has_embedding:
        raise ClosedFormOnlySpace(space.name)
    closed = space.ric(mesh.points, geom.normals)
    A2 = geom.A_norm_sq
    gauss = space.scalar / 2 - A2 / 2 + geom.H**2 / 2 - geom.K
    w = geom.vertex_areas
    diff = np.sqrt(np.sum(w * (closed - gauss) ** 2))
    scale = max(
        np.sqrt(np.sum(w * closed**2)),
        np.sqrt(np.sum(w * A2**2)),
        np.sqrt(np.sum(w)) * max(abs(space.scalar), space.sff_norm_sq_sup),
    )
    return {"closed": closed, "gauss": gauss, "discrepancy": float(diff / scale) if scale > 0 else float(diff)}


@dataclass(eq=False)
class JacobiAssembly:
    """Bilinear forms of Q(u, u) = K - V - B on P1 functions."""

    M: sp.csr_matrix
    K: sp.csr_matrix
    V: sp.csr_matrix
    B: sp.csr_matrix
    M_lumped: sp.csr_matrix
    V_lumped: sp.csr_matrix
    potential: np.ndarray
    robin_weight: np.ndarray
    area: float
    h_mean: float
    info: dict = field(default_factory=dict)

    @property
    def Q(self):
        return (self.K - self.V - self.B).tocsr()

    @property
    def constraint(self):
        """Vector c with c @ u = integral of u."""
        return np.asarray(self.M.sum(axis=1)).ravel()

    def quadratic(self, u, v=None):
        v = u if v is None else v
        return float(u @ (self.Q @ v))


def on_boundary_of_space(mesh: ImmersedMesh, tol=BOUNDARY_TOL) -> np.ndarray:
    """Boundary vertices of the mesh that lie on the boundary of the space.

    Boundary arcs inside M (e.g. the inner circle of a planar annulus) get the
    natural condition and no Robin term.
    """
    mask = np.zeros(mesh.n_vertices, bool)
    bd = mesh.space.boundary
    if bd is None:
        return mask
    bv = np.flatnonzero(mesh.boundary_vertices)
    mask[bv] = np.abs(bd.level(mesh.points[bv])) <= tol * bd.radius
    return mask


def assemble(mesh: ImmersedMesh, geom: SurfaceGeometry | None = None, potential_shift: float | None = None):
    """P1 assembly of the Jacobi form with Robin boundary term.

    ``potential_shift`` (or the header key of the same name) adds a constant
    to the potential; it exists only to produce deliberately wrong inputs
    for negative tests.
    """
    space = mesh.space
    if not space.has_embedding:
        raise ClosedFormOnlySpace(space.name)
    geom = compute_geometry(mesh) if geom is None else geom
    if len(geom.H) != mesh.n_vertices:
        raise MissingGeometry("geometry does not match the mesh")
    P, F = mesh.points, mesh.faces
    ric = space.ric(P, geom.normals)
    pot = ric + geom.A_norm_sq
    shift = potential_shift if potential_shift is not None else mesh.extra.get("potential_shift")
    if shift:
        pot = pot + float(shift)
    K = fem.stiffness(P, F)
    M = fem.mass(P, F)
    ML = fem.mass(P, F, lumped=True)
    V = fem.weighted_mass(P, F, pot)
    VL = sp.diags(ML.diagonal() * pot).tocsr()
    n = mesh.n_vertices
    hw = np.zeros(n)
    on_dM = on_boundary_of_space(mesh)
    bedges = mesh.edges[mesh.boundary_edge_mask]
    if len(bedges):
        if space.boundary is None:
            raise MissingGeometry(f"space {space.name!r} has no boundary second fundamental form")
        bv = np.flatnonzero(on_dM)
        N = geom.normals[bv]
        hw[bv] = space.boundary.h(P[bv], N, N)
    B = fem.boundary_weighted_mass(P, bedges, hw, n)
    info = {
        "boundary_vertices_off_dM": int(mesh.boundary_vertices.sum() - on_dM.sum()),
        "ric_closed_mean": float(np.sum(mesh.vertex_areas * ric) / mesh.area),
        "potential_shift": float(shift or 0.0),
    }
    return JacobiAssembly(M, K, V, B, ML, VL, pot, hw, mesh.area, float(mesh.edge_lengths.mean()), info)


@dataclass(eq=False)
class TwistedSpectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # (n, k), M-orthonormal columns
    index: int
    nullity: int
    band: np.ndarray
    epsilon: float
    residuals: np.ndarray
    means: np.ndarray
    lumped_eigenvalues: np.ndarray | None = None
    constrained: bool = True
    method: str = "dense"

    def to_dict(self):
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "index": int(self.index),
            "nullity": int(self.nullity),
            "epsilon": float(self.epsilon),
            "band": [float(x) for x in self.band],
            "lumped_eigenvalues": None if self.lumped_eigenvalues is None else [float(x) for x in self.lumped_eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "max_abs_mean": float(np.max(np.abs(self.means), initial=0.0)),
            "constrained": self.constrained,
            "method": self.method,
        }


def _householder_complement(c):
    """Orthonormal basis (n, n-1) of the Euclidean complement of c."""
    v = c / np.linalg.norm(c)
    v = v.copy()
    v[0] += np.sign(v[0]) if v[0] != 0 else 1.0
    v /= np.linalg.norm(v)
    H = np.eye(len(c)) - 2.0 * np.outer(v, v)
    return H[:, 1:]


def _dense_pencil(Q, M, c, k):
    Qd, Md = Q.toarray(), M.toarray()
    if c is not None:
        Z = _householder_complement(c)
        A = Z.T @ Qd @ Z
        Bm = Z.T @ Md @ Z
    else:
        Z, A, Bm = None, Qd, Md
    k = min(k, A.shape[0])
    w, Y = sla.eigh((A + A.T) / 2, (Bm + Bm.T) / 2, subset_by_index=[0, k - 1])
    X = Y if Z is None else Z @ Y
    return w, X


def _sparse_pencil(Q, M, c, k, seed, potential_max, B):
    n = Q.shape[0]
    lam_b = 0.0
    if B.nnz:
        try:
            lam_b = float(eigsh(B, k=1, M=M, which="LA", return_eigenvectors=False, tol=1e-6)[0])
        except ArpackNoConvergence as exc:  # pragma: no cover - safety net
            raise SolverError(f"Robin bound did not converge: {exc}") from exc
    sigma = -max(potential_max, 0.0) - max(lam_b, 0.0) - 1.0
    S = (Q - sigma * M).tocsc()
    if c is not None:
        Kb = sp.bmat([[S, sp.csc_matrix(c[:, None])], [sp.csc_matrix(c[None, :]), None]]).tocsc()
        lu = splu(Kb)

        def op(b):
            return lu.solve(np.r_[np.ravel(b), 0.0])[:n]

    else:
        lu = splu(S)

        def op(b):
            return lu.solve(np.ravel(b))

    OPinv = LinearOperator((n, n), matvec=op, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    if c is not None:
        v0 -= c * (c @ v0) / (c @ c)
    # oversample so that every copy of a multiple eigenvalue is captured
    kk = min(k + max(8, k // 2), n - 2)
    ncv = min(max(2 * kk + 1, 40), n - 1)
    try:
        w, X = eigsh(Q, k=kk, M=M, sigma=sigma, which="LM", OPinv=OPinv, v0=v0, ncv=ncv, tol=1e-12, maxiter=5000)
    except ArpackNoConvergence as exc:
        raise SolverError(f"shift-invert eigensolver did not converge ({len(exc.eigenvalues)} of {kk} pairs)") from exc
    order = np.argsort(w)[:k]
    return w[order], X[:, order]


def _solve(Q, M, c, k, seed, potential_max, B, dense_limit):
    n = Q.shape[0]
    if n <= dense_limit:
        return _dense_pencil(Q, M, c, k), "dense"
    return _sparse_pencil(Q, M, c, min(k, n - 2), seed, potential_max, B), "shift-invert"


def twisted_spectrum(assembly: JacobiAssembly, k=8, seed=0, constrained=True, dense_limit=DENSE_LIMIT, cross_check=True):
    """Lowest k eigenpairs of (Q, M) on mean-zero functions.

    Each mode gets a zero band max(eps, |lambda - lambda_lumped|, (h mu)^2 / 12):
    eps = 1e-6 * mean |lambda| over the first 8 modes, lambda_lumped the same
    mode with lumped mass, and (h mu)^2 / 12 the a-priori P1 eigenvalue error
    with h the mean edge length and mu = K(u, u) + max|V| the mode's energy.
    """
    Q, M = assembly.Q, assembly.M
    c = assembly.constraint if constrained else None
    pmax = float(np.max(assembly.potential))
    while True:
        (w, X), method = _solve(Q, M, c, k, seed, pmax, assembly.B, dense_limit)
        lumped = None
        if cross_check:
            QL = (assembly.K - assembly.V_lumped - assembly.B).tocsr()
            cl = np.asarray(assembly.M_lumped.sum(axis=1)).ravel() if constrained else None
            (wl, _), _ = _solve(QL, assembly.M_lumped, cl, k, seed, pmax, assembly.B, dense_limit)
            lumped = wl
        eps = EPS_FACTOR * float(np.mean(np.abs(w[:8])))
        energy = np.einsum("ij,ij->j", X, assembly.K @ X) / np.einsum("ij,ij->j", X, M @ X)
        apriori = APRIORI_CONSTANT * (assembly.h_mean * (energy + np.max(np.abs(assembly.potential)))) ** 2
        band = np.maximum(eps, apriori)
        if lumped is not None:
            band = np.maximum(band, np.abs(w - lumped[: len(w)]))
        if w[-1] >= -band[-1] or len(w) >= Q.shape[0] - 2:
            break
        k = min(2 * k, Q.shape[0] - 2)
    # normalize, enforce constraint exactly in the reported quantities
    for j in range(X.shape[1]):
        X[:, j] /= np.sqrt(X[:, j] @ (M @ X[:, j]))
    means = (c @ X) if c is not None else np.zeros(X.shape[1])
    R = Q @ X - (M @ X) * w
    if c is not None:
        mu = (np.ones(Q.shape[0]) @ R) / assembly.area
        R = R - np.outer(c, mu)
    scale = np.linalg.norm(Q @ X, axis=0) + np.abs(w) * np.linalg.norm(M @ X, axis=0)
    res = np.linalg.norm(R, axis=0) / np.maximum(scale, 1e-300)
    index = int(np.sum(w < -band))
    nullity = int(np.sum(np.abs(w) <= band))
    return TwistedSpectrum(w, X, index, nullity, band, eps, res, means, lumped, constrained, method)


def cmc_index(assembly: JacobiAssembly, k=8, seed=0):
    twisted = twisted_spectrum(assembly, k=k, seed=seed)
    return twisted.index, twisted.nullity

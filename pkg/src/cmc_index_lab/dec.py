"""Discrete exterior calculus and harmonic vector fields."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import fem
from .errors import ClosedFormOnlySpace, MeshError
from .geometry import SurfaceGeometry, check_triangles, compute_geometry
from .mesh import ImmersedMesh, genus_and_boundary


@dataclass(eq=False)
class DecOperators:
    d0: sp.csr_matrix
    d1: sp.csr_matrix
    star0: np.ndarray
    star1: np.ndarray
    star2: np.ndarray
    boundary_edges: np.ndarray
    negative_cotan: int

    @property
    def laplacian(self):
        """Delta^[0] = star0^{-1} d0^T star1 d0 (positive semidefinite)."""
        return sp.diags(1.0 / self.star0) @ self.stiffness

    @property
    def stiffness(self):
        return (self.d0.T @ sp.diags(self.star1) @ self.d0).tocsr()

    def divergence(self, form):
        """Integrated divergence d0^T star1 form, one value per vertex."""
        return self.d0.T @ (self.star1 * form)


def build_dec(mesh: ImmersedMesh) -> DecOperators:
    check_triangles(mesh)
    E, V, F = mesh.n_edges, mesh.n_vertices, mesh.n_faces
    e = mesh.edges
    d0 = sp.csr_matrix(
        (np.r_[-np.ones(E), np.ones(E)], (np.r_[np.arange(E), np.arange(E)], np.r_[e[:, 0], e[:, 1]])), shape=(E, V)
    )
    d1 = sp.csr_matrix(
        (mesh.face_edge_sign.ravel().astype(float), (np.repeat(np.arange(F), 3), mesh.face_edges.ravel())),
        shape=(F, E),
    )
    cot = fem.cotangents(mesh.points, mesh.faces)
    # the angle at corner k is opposite the face edge (k+1, k+2)
    opp = mesh.face_edges[:, [1, 2, 0]]
    star1 = 0.5 * np.bincount(opp.ravel(), cot.ravel(), minlength=E)
    return DecOperators(
        d0=d0,
        d1=d1,
        star0=mesh.vertex_areas.copy(),
        star1=star1,
        star2=1.0 / mesh.face_areas,
        boundary_edges=mesh.boundary_edge_mask.copy(),
        negative_cotan=int(np.sum(star1 < 0)),
    )


@dataclass(eq=False)
class HarmonicField:
    """A discrete harmonic vector field.

    ``form`` is the edge cochain that defines the field.  For a rotated field
    (``dual=True``) it holds star1 applied to the original primal form, which
    is kept in ``primal_form`` because star1 can have zero entries.
    ``values`` are the two components in the vertex ``frames``.
    """

    values: np.ndarray
    frames: np.ndarray
    form: np.ndarray
    residual_div: float
    residual_codiv: float
    tangential: bool = False
    dual: bool = False
    tangency_residual: float = 0.0
    info: dict = field(default_factory=dict)
    primal_form: np.ndarray | None = None

    @property
    def vectors(self):
        """The field in ambient coordinates, shape (n, d)."""
        return np.einsum("nda,na->nd", self.frames, self.values)

    def norm_L2(self, M):
        X = self.vectors
        return float(np.sqrt(np.einsum("ik,ik->", X, M @ X)))


# ---------------------------------------------------------------------------
# cohomology generators


def _primal_tree(mesh):
    """BFS spanning tree over vertices; edges visited in lexicographic order."""
    A = mesh.adjacency
    e = mesh.edges
    edge_id = sp.csr_matrix((np.arange(len(e)) + 1, (e[:, 0], e[:, 1])), shape=A.shape)
    edge_id = (edge_id + edge_id.T).tocsr()
    in_tree = np.zeros(len(e), bool)
    seen = np.zeros(mesh.n_vertices, bool)
    for root in range(mesh.n_vertices):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            v = queue.popleft()
            lo, hi = edge_id.indptr[v], edge_id.indptr[v + 1]
            for w, eid in sorted(zip(edge_id.indices[lo:hi], edge_id.data[lo:hi])):
                if not seen[w]:
                    seen[w] = True
                    in_tree[eid - 1] = True
                    queue.append(w)
    return in_tree


def _dual_tree(mesh, skip):
    """Spanning tree of the dual graph avoiding ``skip`` edges.

    Faces are nodes; with boundary an exterior node (index F) joins every
    boundary edge.  Returns parent edge per face and a BFS order.
    """
    F = mesh.n_faces
    ef = mesh.edge_faces
    ext = F
    nbrs = [[] for _ in range(F + 1)]
    for eid in np.flatnonzero(~skip):
        f0, f1 = ef[eid]
        a = f0 if f0 >= 0 else ext
        b = f1 if f1 >= 0 else ext
        nbrs[a].append((eid, b))
        nbrs[b].append((eid, a))
    root = ext if mesh.boundary_edge_mask.any() else 0
    parent_edge = -np.ones(F + 1, np.int64)
    seen = np.zeros(F + 1, bool)
    seen[root] = True
    order = [root]
    queue = deque([root])
    while queue:
        f = queue.popleft()
        for eid, g in sorted(nbrs[f]):
            if not seen[g]:
                seen[g] = True
                parent_edge[g] = eid
                order.append(g)
                queue.append(g)
    if not seen[:F].all():
        raise MeshError("dual graph is disconnected")
    return parent_edge, order, root


def cohomology_generators(mesh: ImmersedMesh) -> np.ndarray:
    """Closed edge cochains (k, E) spanning H^1 via tree-cotree.

    k = 2g on closed meshes and 2g + r - 1 with boundary.
    """
    in_tree = _primal_tree(mesh)
    parent_edge, order, root = _dual_tree(mesh, in_tree)
    in_cotree = np.zeros(mesh.n_edges, bool)
    in_cotree[parent_edge[parent_edge >= 0]] = True
    gens = np.flatnonzero(~in_tree & ~in_cotree)
    fe, fs = mesh.face_edges, mesh.face_edge_sign
    out = np.zeros((len(gens), mesh.n_edges))
    for k, g in enumerate(gens):
        w = out[k]
        w[g] = 1.0
        # peel the dual tree from the leaves: each face fixes its parent edge
        for f in reversed(order):
            if f == root or f >= mesh.n_faces:
                continue
            pe = parent_edge[f]
            tot = 0.0
            for c in range(3):
                if fe[f, c] == pe:
                    sp_ = fs[f, c]
                else:
                    tot += fs[f, c] * w[fe[f, c]]
            w[pe] = -tot / sp_
    return out


# ---------------------------------------------------------------------------
# harmonic projection and vertex representation


def _pinned_solver(K):
    n = K.shape[0]
    Kp = K.tolil()
    Kp[0, :] = 0
    Kp[:, 0] = 0
    Kp[0, 0] = 1.0
    lu = splu(Kp.tocsc())

    def solve(b):
        b = b.copy()
        b[0] = 0.0
        return lu.solve(b)

    return solve


def face_vectors(mesh: ImmersedMesh, form):
    """Whitney 1-form evaluated at face centroids, ambient vectors (m, d)."""
    G, _ = fem.face_gradients(mesh.points, mesh.faces)
    w = mesh.face_edge_sign * form[mesh.face_edges]  # value on (k -> k+1)
    out = np.zeros((mesh.n_faces, mesh.points.shape[1]))
    for k in range(3):
        out += w[:, k, None] * (G[:, (k + 1) % 3] - G[:, k])
    return out / 3.0


def vertex_vectors(mesh: ImmersedMesh, geom: SurfaceGeometry, form, tangential=False):
    """Area-averaged Whitney field projected on the vertex frames."""
    fv = face_vectors(mesh, form)
    A = mesh.face_areas
    acc = np.zeros((mesh.n_vertices, fv.shape[1]))
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], A[:, None] * fv)
    acc /= np.bincount(mesh.faces.ravel(), np.repeat(A, 3), minlength=mesh.n_vertices)[:, None]
    vals = np.einsum("nda,nd->na", geom.frames, acc)
    normal_part = np.zeros(mesh.n_vertices)
    if tangential:
        bv = mesh.boundary_vertices
        eta = np.einsum("nda,nd->na", geom.frames[bv], geom.conormal[bv])
        c = np.einsum("na,na->n", vals[bv], eta)
        normal_part[bv] = np.abs(c)
        vals[bv] -= c[:, None] * eta
    return vals, normal_part


def _field_from(mesh, dec, frames, form, vals, tangential):
    scale = np.sqrt(max(form @ (dec.star1 * form), 1e-300))
    div = dec.divergence(form)
    curl = dec.d1 @ form
    res_div = float(np.linalg.norm(div / np.sqrt(dec.star0)) / scale)
    res_codiv = float(np.linalg.norm(curl * np.sqrt(dec.star2)) / scale)
    tang = 0.0
    if tangential:
        tang = float(np.max(np.abs(div[mesh.boundary_vertices]), initial=0.0) / scale)
    return HarmonicField(vals, frames, form, res_div, res_codiv, tangential, False, tang)


def _basis(mesh, geom, tangential):
    if not mesh.space.has_embedding:
        raise ClosedFormOnlySpace(mesh.space.name)
    geom = compute_geometry(mesh) if geom is None else geom
    dec = build_dec(mesh)
    gens = cohomology_generators(mesh)
    if len(gens) == 0:
        return [], dec
    solve = _pinned_solver(dec.stiffness)
    forms = np.array([w - dec.d0 @ solve(dec.divergence(w)) for w in gens])
    vals, normal_part = zip(*(vertex_vectors(mesh, geom, f, tangential) for f in forms))
    vals = np.array(vals)
    X = np.einsum("nda,kna->knd", geom.frames, vals)
    # orthonormalize in the consistent-mass L^2 of the vertex fields
    M = fem.mass(mesh.points, mesh.faces)
    Gm = np.einsum("aik,bik->ab", X, np.stack([M @ x for x in X]))
    w, U = np.linalg.eigh(Gm)
    T = (U / np.sqrt(w))[:, ::-1]
    out = []
    for col in T.T:
        f = _field_from(mesh, dec, geom.frames, col @ forms, np.einsum("a,ank->nk", col, vals), tangential)
        if tangential:
            f.info["vertex_normal_component_max"] = float(np.max(normal_part))
        out.append(f)
    return out, dec


def harmonic_basis(mesh: ImmersedMesh, geom: SurfaceGeometry | None = None):
    """Basis of harmonic fields on a closed mesh (2g of them)."""
    g, r = genus_and_boundary(mesh)
    if r:
        raise MeshError("harmonic_basis needs a closed mesh; use tangential_harmonic_basis")
    fields, _ = _basis(mesh, geom, tangential=False)
    if len(fields) != 2 * g:
        raise MeshError(f"found {len(fields)} harmonic fields, expected {2 * g}")
    return fields


def tangential_harmonic_basis(mesh: ImmersedMesh, geom: SurfaceGeometry | None = None):
    """Harmonic fields tangent along the boundary (2g + r - 1 of them)."""
    g, r = genus_and_boundary(mesh)
    if not r:
        raise MeshError("tangential_harmonic_basis needs a mesh with boundary")
    fields, _ = _basis(mesh, geom, tangential=True)
    if len(fields) != 2 * g + r - 1:
        raise MeshError(f"found {len(fields)} tangential fields, expected {2 * g + r - 1}")
    return fields


def star_rotate(mesh: ImmersedMesh, xi: HarmonicField, dec: DecOperators | None = None):
    """Rotate by +90 degrees in each oriented tangent plane."""
    if xi.dual:
        form, primal = -xi.primal_form, None
    else:
        dec = build_dec(mesh) if dec is None else dec
        form, primal = dec.star1 * xi.form, xi.form
    return HarmonicField(
        np.column_stack([-xi.values[:, 1], xi.values[:, 0]]),
        xi.frames,
        form,
        residual_div=xi.residual_codiv,
        residual_codiv=xi.residual_div,
        tangential=False,
        dual=not xi.dual,
        info={"rotated_from_tangential": xi.tangential},
        primal_form=primal,
    )


def coordinate_functions(mesh: ImmersedMesh, xi: HarmonicField, rotated=False):
    """u_j = <xi, E_j> (or <star xi, E_j>) at the vertices, shape (d, n)."""
    if not mesh.space.has_embedding:
        raise ClosedFormOnlySpace(mesh.space.name)
    if rotated:
        xi = star_rotate(mesh, xi)
    return xi.vectors.T.copy()


# ---------------------------------------------------------------------------
# pairings with the ambient coordinate fields


def coordinate_pairings(mesh: ImmersedMesh, dec: DecOperators, form):
    """Exact discrete integrals of <E_j, xi> and <E_j, star xi>, shape (2, d).

    <E_j, xi> is the star1 inner product of d x_j with the form.  <E_j, star xi>
    is minus the wedge of d x_j with the form summed over faces, which
    vanishes identically on closed meshes when the form is closed.
    """
    X = mesh.points
    dX = dec.d0 @ X  # (E, d)
    plain = dX.T @ (dec.star1 * form)
    return plain, -wedge_with_exact(mesh, dX, form)


def wedge_with_exact(mesh, dX, form):
    """sum_f (dx wedge w)(f) with the antisymmetrized (Whitney) wedge, shape (d,).

    Exact for constant forms on every triangle; with d w = 0 the sum telescopes
    to the boundary, so it vanishes on closed meshes.
    """
    E, S = mesh.face_edges, mesh.face_edge_sign
    # oriented values on the face edges (k, k+1), k = 0, 1, 2
    a = S[:, :, None] * dX[E]
    b = S * form[E]
    a01, a12, a20 = a[:, 0], a[:, 1], a[:, 2]
    b01, b12, b20 = b[:, 0], b[:, 1], b[:, 2]
    per_face = (
        a01 * (b12 - b20)[:, None] + a12 * (b20 - b01)[:, None] + a20 * (b01 - b12)[:, None]
    ) / 6.0
    return per_face.sum(axis=0)


def vertex_quadrature_pairings(mesh: ImmersedMesh, xi: HarmonicField, rotated_vectors=None):
    """Lumped vertex-quadrature integrals of <E_j, xi> (diagnostic only)."""
    w = mesh.vertex_areas
    out = w @ xi.vectors
    if rotated_vectors is not None:
        return out, w @ rotated_vectors
    return out

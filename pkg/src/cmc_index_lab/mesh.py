"""Immersed triangle meshes and their combinatorics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .ambient import AmbientSpace
from .errors import MeshError

ON_MANIFOLD_TOL = 1e-10


@dataclass(eq=False)
class ImmersedMesh:
    """Triangulated surface immersed in an embedded catalog space.

    ``points`` are ambient positions in R^d, ``uv`` the surface parameters the
    generator used (kept for reproducibility), ``faces`` consistently oriented
    0-based vertex triples.
    """

    space: AmbientSpace
    points: np.ndarray
    faces: np.ndarray
    uv: np.ndarray | None = None
    boundary_loops: list = field(default_factory=list)
    family: str = "custom"
    family_params: dict = field(default_factory=dict)
    resolution: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.uv is None:
            self.uv = np.zeros((len(self.points), 2))
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array")
        if self.faces.min() < 0 or self.faces.max() >= len(self.points):
            raise MeshError("face index out of range")
        if not self.boundary_loops:
            self.boundary_loops = find_boundary_loops(self.faces, self.edges, self.edge_face_count)

    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def n_faces(self):
        return len(self.faces)

    # -- combinatorics ----------------------------------------------------
    @cached_property
    def _edge_data(self):
        return build_edges(self.faces)

    @property
    def edges(self):
        """Unique edges (E, 2) with i < j, lexicographically sorted."""
        return self._edge_data[0]

    @property
    def face_edges(self):
        return self._edge_data[1]

    @property
    def face_edge_sign(self):
        return self._edge_data[2]

    @property
    def edge_face_count(self):
        return self._edge_data[3]

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def boundary_edge_mask(self):
        return self.edge_face_count == 1

    @cached_property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, bool)
        mask[self.edges[self.boundary_edge_mask].ravel()] = True
        return mask

    @cached_property
    def edge_faces(self):
        """(E, 2) incident faces, -1 where missing. Column 0 sees the edge i->j."""
        ef = -np.ones((self.n_edges, 2), np.int64)
        fe, sg = self.face_edges.ravel(), self.face_edge_sign.ravel()
        fid = np.repeat(np.arange(self.n_faces), 3)
        ef[fe[sg > 0], 0] = fid[sg > 0]
        ef[fe[sg < 0], 1] = fid[sg < 0]
        return ef

    @cached_property
    def adjacency(self):
        e = self.edges
        n = self.n_vertices
        A = sp.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
        return A.tocsr()

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    @cached_property
    def face_areas(self):
        P = self.points
        u = P[self.faces[:, 1]] - P[self.faces[:, 0]]
        v = P[self.faces[:, 2]] - P[self.faces[:, 0]]
        uu, vv, uv = (np.einsum("ij,ij->i", a, b) for a, b in ((u, u), (v, v), (u, v)))
        return 0.5 * np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))

    @cached_property
    def vertex_areas(self):
        """Barycentric dual areas (one third of incident triangle areas)."""
        return np.bincount(self.faces.ravel(), np.repeat(self.face_areas / 3.0, 3), minlength=self.n_vertices)

    @property
    def area(self):
        return float(self.face_areas.sum())

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.points[e[:, 1]] - self.points[e[:, 0]], axis=1)

    def header(self) -> dict:
        h = self.space.header()
        h.update(
            {
                "family": self.family,
                "family_params": dict(self.family_params),
                "resolution": int(self.resolution),
                "seed": int(self.seed),
            }
        )
        h.update(self.extra)
        return h


def build_edges(faces):
    """Unique edges and signed face->edge incidence.

    Raises on non-manifold edges and inconsistent orientation.
    """
    m = len(faces)
    he = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1).reshape(-1, 2)
    lo, hi = he.min(axis=1), he.max(axis=1)
    if np.any(lo == hi):
        raise MeshError("face with repeated vertex")
    edges, inv, counts = np.unique(np.column_stack([lo, hi]), axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if counts.max() > 2:
        raise MeshError("non-manifold edge (shared by more than two faces)")
    sign = np.where(he[:, 0] < he[:, 1], 1, -1)
    # interior edges must be traversed once in each direction
    ssum = np.bincount(inv, sign, minlength=len(edges))
    if np.any((counts == 2) & (ssum != 0)):
        raise MeshError("inconsistently oriented faces (non-orientable or flipped triangle)")
    return edges.astype(np.int64), inv.reshape(m, 3), sign.reshape(m, 3), counts


def find_boundary_loops(faces, edges, counts):
    he = np.stack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1).reshape(-1, 2)
    lo, hi = he.min(axis=1), he.max(axis=1)
    bset = {tuple(e) for e in edges[counts == 1]}
    nxt = {}
    for a, b in he:
        if (min(a, b), max(a, b)) in bset:
            if a in nxt:
                raise MeshError("non-manifold boundary vertex")
            nxt[int(a)] = int(b)
    loops, seen = [], set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop, v = [], start
        while v not in seen:
            seen.add(v)
            loop.append(v)
            v = nxt[v]
        if v != start:
            raise MeshError("open boundary chain")
        loops.append(loop)
    return loops


def genus_and_boundary(mesh: ImmersedMesh) -> tuple[int, int]:
    chi = mesh.euler_characteristic
    r = len(mesh.boundary_loops)
    twice_g = 2 - chi - r
    if twice_g < 0 or twice_g % 2:
        raise MeshError(f"Euler characteristic {chi} with {r} boundary loops is not an orientable surface")
    return twice_g // 2, r


def validate(mesh: ImmersedMesh, tol=ON_MANIFOLD_TOL) -> dict:
    """Check all mesh invariants; returns a summary dict, raises MeshError."""
    g, r = genus_and_boundary(mesh)
    bedges = {tuple(sorted(e)) for e in mesh.edges[mesh.boundary_edge_mask]}
    loop_edges = set()
    for loop in mesh.boundary_loops:
        for a, b in zip(loop, loop[1:] + loop[:1]):
            loop_edges.add((min(a, b), max(a, b)))
    if bedges != loop_edges:
        raise MeshError("boundary loops do not match boundary edges")
    res = 0.0
    if mesh.space.has_embedding:
        res = float(np.max(mesh.space.manifold_residual(mesh.points)))
        if res > tol:
            raise MeshError(f"ambient positions leave the embedded space (residual {res:.3e})")
    return {"genus": g, "boundary_components": r, "euler": mesh.euler_characteristic, "manifold_residual": res}


def k_ring(mesh: ImmersedMesh, min_count=15, max_rings=4):
    """Per-vertex neighbourhoods (excluding the vertex) grown ring by ring."""
    A = mesh.adjacency
    n = mesh.n_vertices
    indptr, indices = A.indptr, A.indices
    out = []
    for i in range(n):
        seen = {i}
        front = [i]
        nb = []
        for _ in range(max_rings):
            new = []
            for v in front:
                for w in indices[indptr[v] : indptr[v + 1]]:
                    if w not in seen:
                        seen.add(w)
                        new.append(w)
            nb.extend(new)
            front = new
            if len(nb) >= min_count or not new:
                break
        out.append(np.array(sorted(nb), dtype=np.int64))
    return out

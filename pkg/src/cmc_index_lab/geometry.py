"""Normals, frames and second fundamental forms of immersed meshes."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ClosedFormOnlySpace, DegenerateTriangle, MeshError
from .mesh import ImmersedMesh, k_ring

MAX_ASPECT = 1e6


@dataclass(eq=False)
class SurfaceGeometry:
    """Per-vertex extrinsic data.

    ``frames[i]`` is an oriented orthonormal basis (d, 2) of T_iSigma, and
    ``shape[i]`` the matrix of A_Sigma in that basis.  ``II`` is the full
    second fundamental form of Sigma in R^d, ``B`` the closed-form B_M on the
    frame vectors.
    """

    normals: np.ndarray
    frames: np.ndarray
    shape: np.ndarray
    H: np.ndarray
    K: np.ndarray
    II: np.ndarray
    B: np.ndarray
    decomposition_residual: np.ndarray
    face_areas: np.ndarray
    vertex_areas: np.ndarray
    conormal: np.ndarray
    normal_convention: str
    fit_degree: np.ndarray

    @property
    def A_norm_sq(self):
        return np.einsum("nab,nab->n", self.shape, self.shape)

    def H_stats(self):
        w = self.vertex_areas
        mean = float(np.sum(w * self.H) / np.sum(w))
        return {"mean": mean, "min": float(self.H.min()), "max": float(self.H.max()), "std": float(np.sqrt(np.sum(w * (self.H - mean) ** 2) / np.sum(w)))}


def _monomials(s, t, degree):
    cols, names = [], []
    for deg in range(1, degree + 1):
        for j in range(deg + 1):
            cols.append(s ** (deg - j) * t**j)
            names.append((deg - j, j))
    return np.column_stack(cols), names


def _n_mono(degree):
    return (degree + 1) * (degree + 2) // 2 - 1


def jet_fit(Y, degree):
    """Fit Y (k, d) as a polynomial graph over its best-fit plane.

    Returns J (d, 2) first derivatives and Q (2, 2, d) second derivatives at
    the origin with respect to the fitted plane coordinates.
    """
    _, _, Vt = np.linalg.svd(Y, full_matrices=False)
    E = Vt[:2].T
    st = Y @ E
    scale = np.sqrt(np.mean(np.sum(st**2, axis=1)))
    s, t = st[:, 0] / scale, st[:, 1] / scale
    D, names = _monomials(s, t, degree)
    coef, *_ = np.linalg.lstsq(D, Y, rcond=None)
    J = np.column_stack([coef[names.index((1, 0))], coef[names.index((0, 1))]]) / scale
    Q = np.empty((2, 2, Y.shape[1]))
    Q[0, 0] = 2 * coef[names.index((2, 0))] / scale**2
    Q[1, 1] = 2 * coef[names.index((0, 2))] / scale**2
    Q[0, 1] = Q[1, 0] = coef[names.index((1, 1))] / scale**2
    return J, Q


def _inv_sqrt_2x2(G):
    w, V = np.linalg.eigh(G)
    return (V / np.sqrt(w)) @ V.T


def check_triangles(mesh: ImmersedMesh, max_aspect=MAX_ASPECT):
    P, F = mesh.points, mesh.faces
    L = np.stack([np.linalg.norm(P[F[:, (k + 1) % 3]] - P[F[:, k]], axis=1) for k in range(3)], axis=1)
    area = mesh.face_areas
    longest = L.max(axis=1)
    with np.errstate(divide="ignore"):
        aspect = np.where(area > 0, longest**2 / (2 * area), np.inf)
    bad = np.flatnonzero(aspect > max_aspect)
    if len(bad):
        raise DegenerateTriangle(f"{len(bad)} triangles exceed aspect ratio {max_aspect:g} (first: face {bad[0]})")
    return aspect


def compute_geometry(mesh: ImmersedMesh, min_neighbors=24, degree=4) -> SurfaceGeometry:
    """Jet-fit normals, frames and the decomposition D_X Y = nabla + A N + B_M."""
    space = mesh.space
    if not space.has_embedding:
        raise ClosedFormOnlySpace(space.name)
    check_triangles(mesh)
    P = mesh.points
    n, d = P.shape
    rings = k_ring(mesh, min_count=min_neighbors, max_rings=5)
    PM = space.tangent_projector(P)

    frames = np.empty((n, d, 2))
    IIs = np.empty((n, 2, 2, d))
    degs = np.empty(n, np.int64)
    for i in range(n):
        Y = P[rings[i]] - P[i]
        deg = degree
        while deg > 2 and len(Y) < _n_mono(deg) + 4:
            deg -= 1
        if len(Y) < _n_mono(deg):
            raise MeshError(f"vertex {i} has too few neighbours for a jet fit")
        J, Q = jet_fit(Y, deg)
        S = _inv_sqrt_2x2(J.T @ J)
        F0 = J @ S
        Qo = np.einsum("ac,bd,cdk->abk", S, S, Q)
        II = Qo - np.einsum("abk,kc,jc->abj", Qo, F0, F0)
        Ft = PM[i] @ F0
        frames[i] = Ft @ _inv_sqrt_2x2(Ft.T @ Ft)
        IIs[i] = II
        degs[i] = deg

    flip = _orient_frames(mesh, frames)
    IIs[flip, 0, 1] *= -1
    IIs[flip, 1, 0] *= -1

    # unit normal: the direction of T_xM orthogonal to the frame
    R = PM - np.einsum("nia,nja->nij", frames, frames)
    _, vecs = np.linalg.eigh(R)
    N = vecs[..., -1]
    N = _propagate_signs(mesh, N)

    A = np.einsum("nabk,nk->nab", IIs, N)
    H = A[:, 0, 0] + A[:, 1, 1]
    convention = "H>=0"
    w = mesh.vertex_areas
    if abs(np.sum(w * H)) > 1e-6 * np.sum(w * np.abs(A).sum(axis=(1, 2))) + 1e-300:
        if np.sum(w * H) < 0:
            N, A, H = -N, -A, -H
    else:
        # minimal: fix the sign by the first vertex's dominant normal component
        j = int(np.argmax(np.abs(N[0])))
        convention = f"minimal: N[0][{j}] > 0"
        if N[0, j] < 0:
            N, A, H = -N, -A, -H

    Bc = np.empty_like(IIs)
    for a in range(2):
        for b in range(2):
            Bc[:, a, b] = space.sff(P, frames[:, :, a], frames[:, :, b])
    resid = IIs - A[..., None] * N[:, None, None, :] - Bc
    decomp = np.sqrt(np.einsum("nabk,nabk->n", resid, resid))
    K = np.einsum("nk,nk->n", IIs[:, 0, 0], IIs[:, 1, 1]) - np.einsum("nk,nk->n", IIs[:, 0, 1], IIs[:, 0, 1])

    return SurfaceGeometry(
        normals=N,
        frames=frames,
        shape=A,
        H=H,
        K=K,
        II=IIs,
        B=Bc,
        decomposition_residual=decomp,
        face_areas=mesh.face_areas.copy(),
        vertex_areas=mesh.vertex_areas.copy(),
        conormal=_conormals(mesh, frames),
        normal_convention=convention,
        fit_degree=degs,
    )


def _orient_frames(mesh, frames):
    """Flip the second frame vector where it disagrees with the face order."""
    P, F = mesh.points, mesh.faces
    score = np.zeros(mesh.n_vertices)
    for k in range(3):
        v = F[:, k]
        e1 = P[F[:, (k + 1) % 3]] - P[v]
        e2 = P[F[:, (k + 2) % 3]] - P[v]
        a = np.einsum("nda,nd->na", frames[v], e1)
        b = np.einsum("nda,nd->na", frames[v], e2)
        score += np.bincount(v, a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], minlength=mesh.n_vertices)
    flip = score < 0
    frames[flip, :, 1] *= -1
    return flip


def _propagate_signs(mesh, N):
    N = N.copy()
    A = mesh.adjacency
    done = np.zeros(mesh.n_vertices, bool)
    for root in range(mesh.n_vertices):
        if done[root]:
            continue
        done[root] = True
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w in A.indices[A.indptr[v] : A.indptr[v + 1]]:
                if not done[w]:
                    if N[w] @ N[v] < 0:
                        N[w] = -N[w]
                    done[w] = True
                    queue.append(w)
    return N


def _conormals(mesh, frames):
    """Outward unit conormal at boundary vertices (zero elsewhere)."""
    eta = np.zeros((mesh.n_vertices, mesh.points.shape[1]))
    P = mesh.points
    for loop in mesh.boundary_loops:
        idx = np.array(loop)
        nxt, prv = np.roll(idx, -1), np.roll(idx, 1)
        t = np.einsum("nda,nd->na", frames[idx], P[nxt] - P[prv])
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        out = np.column_stack([t[:, 1], -t[:, 0]])
        eta[idx] = np.einsum("nda,na->nd", frames[idx], out)
    return eta


def free_boundary_angle(mesh: ImmersedMesh, geom: SurfaceGeometry) -> np.ndarray:
    """|angle(Sigma, dM) - pi/2| at each boundary vertex."""
    bd = mesh.space.boundary
    if bd is None:
        raise MeshError("space has no boundary")
    idx = np.flatnonzero(mesh.boundary_vertices)
    nu = bd.inward_normal(mesh.points[idx])
    c = np.abs(np.einsum("nd,nd->n", geom.normals[idx], nu))
    return np.arcsin(np.clip(c, 0, 1))


def decomposition_error(geom: SurfaceGeometry) -> float:
    """Area-weighted relative residual of the orthogonal decomposition."""
    w = geom.vertex_areas
    scale = np.sqrt(np.einsum("nabk,nabk->n", geom.II, geom.II))
    return float(np.sum(w * geom.decomposition_residual) / max(np.sum(w * scale), 1e-300))

"""Piecewise-linear finite element matrices on triangle meshes in R^d."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def face_gradients(points, faces):
    """Barycentric gradients per face, shape (m, 3, d), and face areas."""
    p0, p1, p2 = (points[faces[:, k]] for k in range(3))
    e1, e2 = p1 - p0, p2 - p0
    g11 = np.einsum("ij,ij->i", e1, e1)
    g12 = np.einsum("ij,ij->i", e1, e2)
    g22 = np.einsum("ij,ij->i", e2, e2)
    det = g11 * g22 - g12 * g12
    area = 0.5 * np.sqrt(det)
    # columns of [e1 e2] G^{-1}
    gl1 = (g22[:, None] * e1 - g12[:, None] * e2) / det[:, None]
    gl2 = (g11[:, None] * e2 - g12[:, None] * e1) / det[:, None]
    G = np.stack([-gl1 - gl2, gl1, gl2], axis=1)
    return G, area


def cotangents(points, faces):
    """cot of the angle at corner k of each face, shape (m, 3)."""
    out = np.empty(faces.shape)
    for k in range(3):
        a = points[faces[:, k]]
        u = points[faces[:, (k + 1) % 3]] - a
        v = points[faces[:, (k + 2) % 3]] - a
        dot = np.einsum("ij,ij->i", u, v)
        cross2 = np.einsum("ij,ij->i", u, u) * np.einsum("ij,ij->i", v, v) - dot * dot
        out[:, k] = dot / np.sqrt(np.maximum(cross2, 0.0))
    return out


def _scatter(faces, local, n):
    rows = np.repeat(faces, 3, axis=1).ravel()
    cols = np.tile(faces, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def stiffness(points, faces):
    """P1 stiffness matrix (the cotan Laplacian), symmetric positive semidefinite."""
    G, area = face_gradients(points, faces)
    local = area[:, None, None] * np.einsum("mid,mjd->mij", G, G)
    K = _scatter(faces, local, len(points))
    return ((K + K.T) * 0.5).tocsr()


def mass(points, faces, lumped=False):
    G, area = face_gradients(points, faces)
    n = len(points)
    if lumped:
        return sp.diags(np.bincount(faces.ravel(), np.repeat(area / 3.0, 3), minlength=n)).tocsr()
    local = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(faces, local, n)


def weighted_mass(points, faces, w):
    """Exact integral of w*u*v for P1 w, u, v (triple products)."""
    _, area = face_gradients(points, faces)
    wf = w[faces]  # (m, 3)
    # int l_i l_j l_k = A * (2 if all equal: 6, two equal: 2, distinct: 1) / 60
    local = np.empty((len(faces), 3, 3))
    s = wf.sum(axis=1)
    for i in range(3):
        for j in range(3):
            if i == j:
                local[:, i, i] = area * (6 * wf[:, i] + 2 * (s - wf[:, i])) / 60.0
            else:
                k = 3 - i - j
                local[:, i, j] = area * (2 * wf[:, i] + 2 * wf[:, j] + wf[:, k]) / 60.0
    M = _scatter(faces, local, len(points))
    return ((M + M.T) * 0.5).tocsr()


def boundary_weighted_mass(points, edges, w, n=None):
    """Exact integral over boundary edges of w*u*v for P1 data along each edge."""
    n = len(points) if n is None else n
    if len(edges) == 0:
        return sp.csr_matrix((n, n))
    a, b = edges[:, 0], edges[:, 1]
    L = np.linalg.norm(points[b] - points[a], axis=1)
    wa, wb = w[a], w[b]
    # int l_a^3 = L/4, int l_a^2 l_b = L/12
    aa = L * (3 * wa + wb) / 12.0
    bb = L * (wa + 3 * wb) / 12.0
    ab = L * (wa + wb) / 12.0
    rows = np.r_[a, b, a, b]
    cols = np.r_[a, b, b, a]
    return sp.csr_matrix((np.r_[aa, bb, ab, ab], (rows, cols)), shape=(n, n))

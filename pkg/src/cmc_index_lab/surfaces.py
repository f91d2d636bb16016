"""Generators for model CMC surfaces in the catalog spaces."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay

from .ambient import AmbientSpace, ProductSpace, TorusProductSpace
from .errors import ClosedFormOnlySpace, FamilyMismatch, InvalidParameter, MeshError
from .mesh import ImmersedMesh

TORUS_SPACES = ("t2xr", "rect_t2xr", "hexagonal")

FAMILY_SPACES = {
    "sphere": ("r3", "ball", "t3") + TORUS_SPACES,
    "slice_sphere": ("s2xr",),
    "clifford": ("s3",),
    "slice_torus": TORUS_SPACES,
    "subtorus": ("t3",),
    "punctured_torus": ("t3",),
    "cap": ("ball",),
    "disk": ("r3", "ball"),
    "annulus": ("r3", "ball"),
    "holed_plate": ("r3",),
    "double_plate": ("r3",),
}
ALIASES = {
    "round-sphere": "sphere",
    "slice-sphere": "slice_sphere",
    "clifford-torus": "clifford",
    "slice-torus": "slice_torus",
    "subtorus-cylinder": "subtorus",
    "spherical-cap": "cap",
    "flat-disk": "disk",
    "genus2": "double_plate",
}


# ---------------------------------------------------------------------------
# combinatorial building blocks


def periodic_grid(n1, n2, flip_diagonal=False):
    """Faces of an n1 x n2 doubly periodic grid; vertex (i, j) has index i*n2 + j."""
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * n2 + j
    b = ((i + 1) % n1) * n2 + j
    c = ((i + 1) % n1) * n2 + (j + 1) % n2
    d = i * n2 + (j + 1) % n2
    if flip_diagonal:
        tris = [np.column_stack([a, b, d]), np.column_stack([b, c, d])]
    else:
        tris = [np.column_stack([a, b, c]), np.column_stack([a, c, d])]
    return np.stack(tris, axis=1).reshape(-1, 3)


def _zip_rings(A, angA, B, angB):
    """Triangulate the band between inner ring A and outer ring B (CCW)."""
    na, nb = len(A), len(B)
    angA = np.r_[angA, angA[0] + 2 * np.pi]
    angB = np.r_[angB, angB[0] + 2 * np.pi]
    faces = []
    i = j = 0
    while i < na or j < nb:
        if j >= nb or (i < na and angA[i + 1] <= angB[j + 1]):
            faces.append((A[i % na], B[j % nb], A[(i + 1) % na]))
            i += 1
        else:
            faces.append((A[i % na], B[j % nb], B[(j + 1) % nb]))
            j += 1
    return faces


def ring_disk(K):
    """Unit disk: centre plus rings k = 1..K carrying 6k points. Returns (r, phi, faces)."""
    r, phi = [0.0], [0.0]
    rings = [np.array([0])]
    angs = [np.array([0.0])]
    for k in range(1, K + 1):
        ang = 2 * np.pi * np.arange(6 * k) / (6 * k)
        idx = np.arange(len(r), len(r) + 6 * k)
        r += [k / K] * (6 * k)
        phi += list(ang)
        rings.append(idx)
        angs.append(ang)
    faces = [(0, rings[1][m], rings[1][(m + 1) % 6]) for m in range(6)]
    for k in range(2, K + 1):
        faces += _zip_rings(rings[k - 1], angs[k - 1], rings[k], angs[k])
    return np.array(r), np.array(phi), np.array(faces, dtype=np.int64)


def ring_annulus(n_around, inner, outer):
    """Log-polar annulus with staggered rings, so triangles stay near-equilateral."""
    n_radial = max(2, int(round(n_around * math.log(outer / inner) / (2 * np.pi) * 2 / math.sqrt(3))))
    rr = inner * (outer / inner) ** (np.arange(n_radial + 1) / n_radial)
    base = 2 * np.pi * np.arange(n_around) / n_around
    r, phi, faces = [], [], []
    for k in range(n_radial + 1):
        r.append(np.full(n_around, rr[k]))
        phi.append(base + (np.pi / n_around if k % 2 else 0.0))
    for k in range(n_radial):
        A = np.arange(k * n_around, (k + 1) * n_around)
        faces += _zip_rings(A, phi[k], A + n_around, phi[k + 1])
    return np.concatenate(r), np.concatenate(phi), np.array(faces, dtype=np.int64)


def cubed_sphere(n):
    """Unit sphere from the equiangular cubed sphere with n cells per cube edge."""
    keys = {}
    pts, faces = [], []
    grid = np.arange(n + 1)
    for axis in range(3):
        for sgn in (1, -1):
            o1, o2 = [ax for ax in range(3) if ax != axis]
            idx = np.empty((n + 1, n + 1), np.int64)
            for i in grid:
                for j in grid:
                    key = [0, 0, 0]
                    key[axis] = sgn * n
                    key[o1] = 2 * i - n
                    key[o2] = 2 * j - n
                    key = tuple(key)
                    if key not in keys:
                        keys[key] = len(pts)
                        pts.append(key)
                    idx[i, j] = keys[key]
            for i in range(n):
                for j in range(n):
                    a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
                    if (i < n // 2) == (j < n // 2):
                        faces += [(a, b, c), (a, c, d)]
                    else:
                        faces += [(a, b, d), (b, c, d)]
    K = np.array(pts, dtype=float) / n
    X = np.tan(np.pi / 4 * K)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    F = np.array(faces, dtype=np.int64)
    nrm = np.cross(X[F[:, 1]] - X[F[:, 0]], X[F[:, 2]] - X[F[:, 0]])
    flip = np.einsum("ij,ij->i", nrm, X[F].sum(axis=1)) < 0
    F[flip] = F[flip][:, [0, 2, 1]]
    return X, F


def _compact(points, uv, faces):
    used = np.unique(faces)
    remap = -np.ones(len(points), np.int64)
    remap[used] = np.arange(len(used))
    return points[used], uv[used], remap[faces]


def _sphere_angles(X):
    return np.column_stack([np.arccos(np.clip(X[:, 2], -1, 1)), np.arctan2(X[:, 1], X[:, 0])])


# ---------------------------------------------------------------------------
# families


def _lattice(space):
    """Two period vectors of the flat chart of a periodic space (u, v part)."""
    if isinstance(space, TorusProductSpace):
        return np.array(space.data.periods, dtype=float)
    # T^3 = S^1(1) x S^1(r1) x S^1(r2) in arclength coordinates
    radii = [f.radius for f in space.factors]
    return np.diag([2 * np.pi * r for r in radii])


def _injectivity_radius(periods):
    best = np.inf
    for m in range(-3, 4):
        for k in range(-3, 4):
            if m or k:
                best = min(best, np.linalg.norm(m * periods[0] + k * periods[1]))
    return best / 2


def _gen_sphere(space, p, res):
    rho = float(p.get("radius", 1.0))
    if rho <= 0:
        raise InvalidParameter("radius must be positive")
    n = max(2, int(round(res / 4)))
    X, F = cubed_sphere(n)
    jitter = float(p.get("jitter", 0.0))
    if jitter:
        rng = np.random.default_rng(p.get("_seed", 0))
        X = X + jitter * (np.pi / (2 * n)) * rng.standard_normal(X.shape)
        X /= np.linalg.norm(X, axis=1, keepdims=True)
    uv = _sphere_angles(X)
    centre = np.asarray(p.get("center", (0.0, 0.0, 0.0)), dtype=float)
    chart = centre + rho * X
    if space.name in ("r3", "ball"):
        if space.name == "ball" and np.linalg.norm(centre) + rho >= space.boundary.radius:
            raise InvalidParameter("sphere does not fit inside the ball")
        return chart, uv, F
    if space.name == "t3":
        inj = np.pi * min(f.radius for f in space.factors)
    else:
        inj = _injectivity_radius(_lattice(space))
    if rho >= inj:
        raise InvalidParameter(f"radius {rho} too large to embed in the fundamental domain (limit {inj:.4g})")
    return space.embed(chart), uv, F


def _gen_slice_sphere(space, p, res):
    r = space.factors[0].radius
    t = float(p.get("height", 0.0))
    X, F = cubed_sphere(max(2, int(round(res / 4))))
    pts = np.column_stack([r * X, np.full(len(X), t)])
    return pts, _sphere_angles(X), F


def _gen_clifford(space, p, res):
    r = space.factors[0].radius
    n = int(res)
    u = 2 * np.pi * np.arange(n) / n
    U, V = np.meshgrid(u, u, indexing="ij")
    U, V = U.ravel(), V.ravel()
    pts = r / math.sqrt(2) * np.column_stack([np.cos(U), np.sin(U), np.cos(V), np.sin(V)])
    return pts, np.column_stack([U, V]), periodic_grid(n, n)


def _gen_flat_torus(space, periods, res, height):
    L1, L2 = np.linalg.norm(periods, axis=1)
    n1 = int(res)
    n2 = max(3, int(round(res * L2 / L1)))
    s, t = np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")
    s, t = s.ravel(), t.ravel()
    uv = np.outer(s, periods[0]) + np.outer(t, periods[1])
    # pick the shorter diagonal of the parallelogram cell
    d1 = np.linalg.norm(periods[0] / n1 + periods[1] / n2)
    d2 = np.linalg.norm(periods[0] / n1 - periods[1] / n2)
    F = periodic_grid(n1, n2, flip_diagonal=d2 < d1 - 1e-12)
    return uv, F


def _gen_slice_torus(space, p, res):
    periods = _lattice(space)
    uv, F = _gen_flat_torus(space, periods, res, 0.0)
    t = float(p.get("height", 0.0))
    return space.embed(np.column_stack([uv, np.full(len(uv), t)])), uv, F


def _t3_axes(space, p):
    axes = tuple(int(a) for a in p.get("axes", (0, 1)))
    if len(axes) != 2 or len(set(axes)) != 2 or not set(axes) <= {0, 1, 2}:
        raise InvalidParameter("axes must be two distinct factor indices in {0, 1, 2}")
    return axes


def _gen_subtorus(space, p, res, hole=0):
    axes = _t3_axes(space, p)
    other = ({0, 1, 2} - set(axes)).pop()
    radii = [f.radius for f in space.factors]
    periods = np.array([[2 * np.pi * radii[axes[0]], 0.0], [0.0, 2 * np.pi * radii[axes[1]]]])
    uv, F = _gen_flat_torus(space, periods, res, 0.0)
    chart = np.zeros((len(uv), 3))
    chart[:, axes[0]] = uv[:, 0]
    chart[:, axes[1]] = uv[:, 1]
    chart[:, other] = float(p.get("height", 0.0))
    pts = space.embed(chart)
    if hole:
        n1 = int(res)
        n2 = len(uv) // n1
        # the first 2*n2*hole faces are cells with i < hole; keep j >= hole there
        cell = np.repeat(np.arange(n1 * n2), 2)
        ci, cj = cell // n2, cell % n2
        keep = ~((ci < hole) & (cj < hole))
        pts, uv, F = _compact(pts, uv, F[keep])
    return pts, uv, F


def _gen_punctured_torus(space, p, res):
    hole = int(p.get("hole", max(1, int(res) // 8)))
    if hole < 1 or hole >= int(res) // 2:
        raise InvalidParameter("hole must be between 1 and res/2")
    return _gen_subtorus(space, p, res, hole=hole)


def _cap_geometry(R, H):
    rho = 2.0 / H
    c = math.sqrt(R * R + rho * rho)
    return rho, c, math.acos(rho / c)


def _gen_cap(space, p, res):
    H = float(p.get("H", 1.0))
    if H <= 0:
        raise InvalidParameter("cap needs H > 0 (use the disk family for H = 0)")
    R = space.boundary.radius
    rho, c, th0 = _cap_geometry(R, H)
    K = max(2, int(round(res / 6)))
    r, phi, F = ring_disk(K)
    th = th0 * r
    pts = np.column_stack(
        [rho * np.sin(th) * np.cos(phi), rho * np.sin(th) * np.sin(phi), c - rho * np.cos(th)]
    )
    return pts, np.column_stack([th, phi]), F


def _gen_disk(space, p, res):
    R = float(p.get("radius", space.boundary.radius if space.boundary is not None else 1.0))
    K = max(1, int(round(res / 6)))
    r, phi, F = ring_disk(K)
    pts = np.column_stack([R * r * np.cos(phi), R * r * np.sin(phi), np.zeros_like(r)])
    return pts, np.column_stack([R * r, phi]), F


def _gen_annulus(space, p, res):
    outer = float(p.get("outer", space.boundary.radius if space.boundary is not None else 1.0))
    inner = float(p.get("inner", 0.5 * outer))
    if not 0 < inner < outer:
        raise InvalidParameter("annulus needs 0 < inner < outer")
    r, phi, F = ring_annulus(max(6, int(res)), inner, outer)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), np.zeros_like(r)])
    return pts, np.column_stack([r, phi]), F


def holed_disk(holes, res):
    """Planar unit disk with ``holes`` circular holes, Delaunay triangulated."""
    h = 2 * np.pi / max(int(res), 12)
    R0 = 0.6
    centres = [(-R0 + (2 * k + 1) * R0 / holes, 0.0) for k in range(holes)]
    rh = 0.55 * R0 / holes
    pts = [np.column_stack([np.cos(a), np.sin(a)]) for a in [2 * np.pi * np.arange(int(res)) / int(res)]]
    for cx, cy in centres:
        m = max(8, int(math.ceil(2 * np.pi * rh / h)))
        a = 2 * np.pi * np.arange(m) / m
        pts.append(np.column_stack([cx + rh * np.cos(a), cy + rh * np.sin(a)]))
    # interior hexagonal lattice
    ys = np.arange(-1, 1 + h, h * math.sqrt(3) / 2)
    grid = []
    for row, y in enumerate(ys):
        xs = np.arange(-1, 1 + h, h) + (0.5 * h if row % 2 else 0.0)
        grid.append(np.column_stack([xs, np.full(len(xs), y)]))
    grid = np.vstack(grid)
    ok = np.linalg.norm(grid, axis=1) < 1 - 0.6 * h
    for cx, cy in centres:
        ok &= np.hypot(grid[:, 0] - cx, grid[:, 1] - cy) > rh + 0.6 * h
    pts.append(grid[ok])
    P = np.vstack(pts)
    tri = Delaunay(P).simplices.astype(np.int64)
    cen = P[tri].mean(axis=1)
    keep = np.linalg.norm(cen, axis=1) < 1
    for cx, cy in centres:
        keep &= np.hypot(cen[:, 0] - cx, cen[:, 1] - cy) > rh
    tri = tri[keep]
    e1, e2 = P[tri[:, 1]] - P[tri[:, 0]], P[tri[:, 2]] - P[tri[:, 0]]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    used = np.unique(tri)
    remap = -np.ones(len(P), np.int64)
    remap[used] = np.arange(len(used))
    return P[used], remap[tri]


def _gen_holed_plate(space, p, res):
    holes = int(p.get("holes", 2))
    if holes < 1:
        raise InvalidParameter("holes must be >= 1")
    P, F = holed_disk(holes, res)
    return np.column_stack([P, np.zeros(len(P))]), P.copy(), F


def _gen_double_plate(space, p, res):
    """Closed genus-g surface: two holed plates joined by vertical walls."""
    holes = int(p.get("holes", 2))
    if holes < 1:
        raise InvalidParameter("holes must be >= 1")
    thick = float(p.get("thickness", 0.1))
    P, F = holed_disk(holes, res)
    n = len(P)
    tmp = ImmersedMesh(space, np.column_stack([P, np.zeros(n)]), F)
    top = np.column_stack([P, np.full(n, thick / 2)])
    bot = np.column_stack([P, np.full(n, -thick / 2)])
    faces = [F, F[:, [0, 2, 1]] + n]
    wall = []
    for loop in tmp.boundary_loops:
        for a, b in zip(loop, loop[1:] + loop[:1]):
            wall += [(b, a, a + n), (b, a + n, b + n)]
    faces.append(np.array(wall, dtype=np.int64))
    uv = np.vstack([P, P])
    return np.vstack([top, bot]), uv, np.vstack(faces)


GENERATORS = {
    "sphere": _gen_sphere,
    "slice_sphere": _gen_slice_sphere,
    "clifford": _gen_clifford,
    "slice_torus": _gen_slice_torus,
    "subtorus": _gen_subtorus,
    "punctured_torus": _gen_punctured_torus,
    "cap": _gen_cap,
    "disk": _gen_disk,
    "annulus": _gen_annulus,
    "holed_plate": _gen_holed_plate,
    "double_plate": _gen_double_plate,
}


def generate_surface(space: AmbientSpace, family: str, params: dict | None = None, resolution: int = 64, seed: int = 0):
    """Triangulate a model surface of ``family`` inside ``space``."""
    if not space.has_embedding:
        raise ClosedFormOnlySpace(space.name)
    family = ALIASES.get(family, family)
    if family not in GENERATORS:
        raise InvalidParameter(f"unknown family {family!r}; known: {', '.join(GENERATORS)}")
    if space.name not in FAMILY_SPACES[family]:
        raise FamilyMismatch(f"family {family!r} is not available in space {space.name!r}")
    resolution = int(resolution)
    if resolution < 4:
        raise InvalidParameter("resolution must be >= 4")
    params = dict(params or {})
    gen_params = dict(params, _seed=seed)
    pts, uv, F = GENERATORS[family](space, gen_params, resolution)
    mesh = ImmersedMesh(
        space,
        pts,
        F,
        uv=uv,
        family=family,
        family_params=_jsonable(params),
        resolution=resolution,
        seed=int(seed),
    )
    if len(mesh.faces) == 0:
        raise MeshError("generator produced no faces")
    return mesh


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.ndarray, tuple, list)):
            out[k] = [float(x) if isinstance(x, (float, np.floating)) else x for x in np.asarray(v).tolist()]
        elif isinstance(v, np.generic):
            out[k] = v.item()
        else:
            out[k] = v
    return out


def cap_reference(space, H):
    """Analytic cap data: (sphere radius, centre distance, opening angle, boundary radius)."""
    rho, c, th0 = _cap_geometry(space.boundary.radius, H)
    return {"sphere_radius": rho, "centre_distance": c, "opening_angle": th0, "boundary_radius": rho * math.sin(th0)}

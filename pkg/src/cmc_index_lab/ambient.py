"""Catalog of ambient 3-manifolds with explicit Euclidean embeddings.

Every embedded space works on ambient points ``x`` of shape ``(n, d)`` and
ambient tangent vectors of the same shape.  Chart coordinates ``p`` have
shape ``(n, 3)``.  Curvature quantities use the convention that the mean
curvature vector is the full trace of the second fundamental form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ClosedFormOnlySpace, InvalidParameter, NoPositiveSolution, WindowViolation

EPS = np.finfo(float).eps
FD_STEP1 = EPS ** (1.0 / 3.0)
FD_STEP2 = EPS ** (1.0 / 4.0)


@dataclass(frozen=True)
class CurvatureData:
    scalar: float
    sff_norm_sq: float
    mean_vec_norm_sq: float


@dataclass(frozen=True)
class Threshold:
    """Least H^2 beyond which the genus-linear index bound applies.

    ``required`` is False when the value is <= 0 ("none required"); the
    bound then applies for every mean curvature with H^2 > value.
    """

    value: float
    required: bool

    def applies(self, H: float) -> bool:
        return H * H > self.value

    def to_dict(self):
        return {"value": self.value, "required": self.required}


def _threshold(value: float) -> Threshold:
    return Threshold(float(value), bool(value > 0))


# ---------------------------------------------------------------------------
# boundary of the unit ball (the only implemented domain with boundary)


@dataclass(frozen=True)
class BallBoundary:
    radius: float = 1.0

    def inward_normal(self, x):
        x = np.asarray(x, dtype=float)
        return -x / np.linalg.norm(x, axis=-1, keepdims=True)

    def h(self, x, X, Y):
        # round sphere of radius R with inward normal: h = g / R
        return np.einsum("...i,...i->...", X, Y) / self.radius

    def mean_curvature(self, x):
        return np.full(np.shape(x)[:-1], 2.0 / self.radius)

    def level(self, x):
        return np.linalg.norm(x, axis=-1) - self.radius


# ---------------------------------------------------------------------------


class AmbientSpace:
    """Base class. Subclasses fill in the embedding and closed forms."""

    name: str
    d: int
    params: dict
    boundary: BallBoundary | None = None
    has_embedding = True

    # -- closed forms every subclass provides ------------------------------
    def embed(self, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def metric(self, p):  # pragma: no cover - abstract
        raise NotImplementedError

    def tangent_projector(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def sff(self, x, X, Y):  # pragma: no cover - abstract
        raise NotImplementedError

    def ric(self, x, N):  # pragma: no cover - abstract
        raise NotImplementedError

    def manifold_residual(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def random_chart_points(self, n, rng):  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def scalar(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def sff_norm_sq_sup(self) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    chart_scale = 1.0

    # -- generic machinery -------------------------------------------------
    def tangent_frame(self, x):
        """Orthonormal basis of T_xM, shape (n, d, 3). Orientation arbitrary."""
        P = self.tangent_projector(np.atleast_2d(x))
        _, vecs = np.linalg.eigh(P)
        return vecs[..., -3:]

    def curvature_data(self, x) -> list[CurvatureData]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        E = self.tangent_frame(x)
        n = len(x)
        Hvec = np.zeros((n, self.d))
        B2 = np.zeros(n)
        for k in range(3):
            Hvec += self.sff(x, E[..., k], E[..., k])
            for l in range(3):
                b = self.sff(x, E[..., k], E[..., l])
                B2 += np.einsum("ij,ij->i", b, b)
        H2 = np.einsum("ij,ij->i", Hvec, Hvec)
        return [CurvatureData(self.scalar, float(b), float(h)) for b, h in zip(B2, H2)]

    def header(self) -> dict:
        return {"space": self.name, "params": dict(self.params)}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, d={self.d}, params={self.params})"


# ---------------------------------------------------------------------------
# products of round spheres and lines


@dataclass(frozen=True)
class Factor:
    kind: str  # "line" or "sphere"
    dim: int = 1
    radius: float = 1.0

    @property
    def size(self):
        return 1 if self.kind == "line" else self.dim + 1


def _sphere_chart(k, r, q):
    if k == 1:
        s = q[..., 0] / r
        return r * np.stack([np.cos(s), np.sin(s)], axis=-1)
    if k == 2:
        th, ph = q[..., 0], q[..., 1]
        return r * np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
        )
    th, p1, p2 = q[..., 0], q[..., 1], q[..., 2]
    return r * np.stack(
        [np.cos(th) * np.cos(p1), np.cos(th) * np.sin(p1), np.sin(th) * np.cos(p2), np.sin(th) * np.sin(p2)],
        axis=-1,
    )


def _sphere_metric(k, r, q):
    if k == 1:
        return np.ones(q.shape[:-1] + (1,))
    if k == 2:
        th = q[..., 0]
        return r * r * np.stack([np.ones_like(th), np.sin(th) ** 2], axis=-1)
    th = q[..., 0]
    return r * r * np.stack([np.ones_like(th), np.cos(th) ** 2, np.sin(th) ** 2], axis=-1)


class ProductSpace(AmbientSpace):
    """M = product of round spheres S^k(r) and lines, canonically in R^d."""

    def __init__(self, name, factors, params=None, boundary=None):
        self.name = name
        self.factors = tuple(factors)
        self.params = dict(params or {})
        self.boundary = boundary
        if sum(f.dim if f.kind == "sphere" else 1 for f in self.factors) != 3:
            raise InvalidParameter("factors must have total dimension 3")
        self.d = sum(f.size for f in self.factors)
        slots, chart_slots = [], []
        a = c = 0
        for f in self.factors:
            k = 1 if f.kind == "line" else f.dim
            slots.append(slice(a, a + f.size))
            chart_slots.append(slice(c, c + k))
            a += f.size
            c += k
        self._slots = tuple(slots)
        self._chart_slots = tuple(chart_slots)
        radii = [f.radius for f in self.factors if f.kind == "sphere"]
        self.chart_scale = min(radii) if radii else 1.0

    def embed(self, p):
        p = np.asarray(p, dtype=float)
        parts = []
        for f, cs in zip(self.factors, self._chart_slots):
            q = p[..., cs]
            parts.append(q if f.kind == "line" else _sphere_chart(f.dim, f.radius, q))
        return np.concatenate(parts, axis=-1)

    def metric(self, p):
        p = np.asarray(p, dtype=float)
        diag = []
        for f, cs in zip(self.factors, self._chart_slots):
            q = p[..., cs]
            diag.append(np.ones(q.shape) if f.kind == "line" else _sphere_metric(f.dim, f.radius, q))
        diag = np.concatenate(diag, axis=-1)
        return diag[..., :, None] * np.eye(3)

    def tangent_projector(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        P = np.zeros(x.shape[:-1] + (self.d, self.d))
        for f, s in zip(self.factors, self._slots):
            idx = np.arange(s.start, s.stop)
            if f.kind == "line":
                P[..., idx, idx] = 1.0
            else:
                xf = x[..., s]
                blk = np.eye(f.size) - xf[..., :, None] * xf[..., None, :] / np.einsum("...i,...i->...", xf, xf)[..., None, None]
                P[..., s, s] = blk
        return P

    def sff(self, x, X, Y):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(X), np.shape(Y)))
        for f, s in zip(self.factors, self._slots):
            if f.kind == "line":
                continue
            xy = np.einsum("...i,...i->...", X[..., s], Y[..., s])
            out[..., s] = -xy[..., None] * x[..., s] / f.radius**2
        return out

    def ric(self, x, N):
        val = np.zeros(np.shape(N)[:-1])
        for f, s in zip(self.factors, self._slots):
            if f.kind == "sphere" and f.dim > 1:
                val = val + (f.dim - 1) / f.radius**2 * np.einsum("...i,...i->...", N[..., s], N[..., s])
        return val

    @property
    def scalar(self):
        return float(sum(f.dim * (f.dim - 1) / f.radius**2 for f in self.factors if f.kind == "sphere"))

    @property
    def sff_norm_sq_sup(self):
        return float(sum(f.dim / f.radius**2 for f in self.factors if f.kind == "sphere"))

    @property
    def mean_vec_norm_sq_sup(self):
        return float(sum(f.dim**2 / f.radius**2 for f in self.factors if f.kind == "sphere"))

    def manifold_residual(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        res = np.zeros(len(x))
        for f, s in zip(self.factors, self._slots):
            if f.kind == "sphere":
                res = np.maximum(res, np.abs(np.linalg.norm(x[:, s], axis=1) / f.radius - 1.0))
        return res

    def random_chart_points(self, n, rng):
        cols = []
        for f in self.factors:
            if f.kind == "line":
                cols.append(rng.uniform(-1.0, 1.0, (n, 1)))
            elif f.dim == 1:
                cols.append(rng.uniform(0, 2 * np.pi * f.radius, (n, 1)))
            elif f.dim == 2:
                cols.append(np.column_stack([rng.uniform(0.2, np.pi - 0.2, n), rng.uniform(0, 2 * np.pi, n)]))
            else:
                cols.append(
                    np.column_stack(
                        [rng.uniform(0.2, np.pi / 2 - 0.2, n), rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 2 * np.pi, n)]
                    )
                )
        return np.concatenate(cols, axis=1)


# ---------------------------------------------------------------------------
# flat tori T^2(alpha, beta) embedded in R^6 by three circles


@dataclass(frozen=True)
class TorusEmbeddingData:
    """Frequencies and radii of the three-circle embedding of T^2(alpha, beta).

    ``a`` and ``b`` hold the u- and v-frequencies of the three circles
    (``a[2] == 0``), ``C`` their radii.  ``degenerate`` marks the
    rectangular case where one circle is dropped.
    """

    alpha: float
    beta: float
    a: tuple
    b: tuple
    C: tuple
    k: tuple
    l: tuple
    residual: float
    degenerate: bool = False
    solution_dim: int = 0
    window_as_printed: bool = False

    def system_matrix(self):
        a, b = np.array(self.a), np.array(self.b)
        return np.array([a**2, a * b, b**2])

    def isometry_residual(self, C2=None):
        """Residual of sum C_i^2 (a_i^2, a_i b_i, b_i^2) = (1, 0, 1)."""
        C2 = np.array(self.C) ** 2 if C2 is None else np.asarray(C2, dtype=float)
        return self.system_matrix() @ C2 - np.array([1.0, 0.0, 1.0])

    @property
    def periods(self):
        s = math.hypot(self.alpha, self.beta)
        if self.degenerate:
            return (1.0, 0.0), (0.0, self.beta)
        return (1.0, 0.0), (self.alpha / self.beta * s, s)

    @property
    def sff_norm_sq(self):
        a, b, C = (np.array(t) for t in (self.a, self.b, self.C))
        return float(np.sum(C**2 * (a**2 + b**2) ** 2))

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "a": list(self.a),
            "b": list(self.b),
            "C": list(self.C),
            "k": list(self.k),
            "l": list(self.l),
            "residual": self.residual,
            "degenerate": self.degenerate,
            "solution_dim": self.solution_dim,
            "window_as_printed": self.window_as_printed,
        }


def _check_lattice(alpha, beta):
    if not (0.0 <= alpha <= 0.5) or beta <= 0 or alpha * alpha + beta * beta < 1.0 - 1e-12:
        raise InvalidParameter(
            f"lattice parameters need 0 <= alpha <= 1/2, beta > 0, alpha^2+beta^2 >= 1; got ({alpha}, {beta})"
        )


def frequency_windows(alpha, beta, k1, l1, k2, l2):
    """Return (literal, corrected) verdicts of the frequency-window test.

    The literal form bounds l1/k1 twice with disjoint intervals and can never
    hold; the corrected form applies the second interval to l2/k2.
    """
    s = math.hypot(alpha, beta)
    c = alpha / beta * s
    first = c < l1 / k1 < (alpha / beta + 1) * s
    literal = first and ((alpha / beta - 1) * s < l1 / k1 < c)
    corrected = first and ((alpha / beta - 1) * s < l2 / k2 < c)
    return literal, corrected


def torus_embedding_data(alpha, beta, k1=1, l1=1, k2=2, l2=1) -> TorusEmbeddingData:
    _check_lattice(alpha, beta)
    if alpha == 0.0:
        return TorusEmbeddingData(
            alpha=0.0,
            beta=float(beta),
            a=(2 * np.pi, 0.0, 0.0),
            b=(0.0, 0.0, 2 * np.pi / beta),
            C=(1 / (2 * np.pi), 0.0, beta / (2 * np.pi)),
            k=(1, 0),
            l=(0, 0),
            residual=0.0,
            degenerate=True,
        )
    for v in (k1, l1, k2, l2):
        if int(v) != v or v <= 0:
            raise InvalidParameter("k1, l1, k2, l2 must be positive integers")
    literal, corrected = frequency_windows(alpha, beta, k1, l1, k2, l2)
    if not corrected:
        raise WindowViolation(f"frequency window violated for k=({k1},{k2}), l=({l1},{l2})")
    s = math.hypot(alpha, beta)
    a = np.array([2 * np.pi * k1, 2 * np.pi * k2, 0.0])
    b = np.array(
        [2 * np.pi / s * (l1 - k1 * alpha / beta * s), 2 * np.pi / s * (l2 - k2 * alpha / beta * s), 2 * np.pi / s]
    )
    A = np.array([a**2, a * b, b**2])
    g = np.array([1.0, 0.0, 1.0])
    rank = np.linalg.matrix_rank(A)
    x, *_ = np.linalg.lstsq(A, g, rcond=None)
    if np.any(x < 0):
        from scipy.optimize import nnls

        x, _ = nnls(A, g)
    if np.any(x <= 0) or np.linalg.norm(A @ x - g) > 1e-8:
        raise NoPositiveSolution("isometry system admits no positive radii")
    return TorusEmbeddingData(
        alpha=float(alpha),
        beta=float(beta),
        a=tuple(map(float, a)),
        b=tuple(map(float, b)),
        C=tuple(map(float, np.sqrt(x))),
        k=(int(k1), int(k2)),
        l=(int(l1), int(l2)),
        residual=float(np.linalg.norm(A @ x - g)),
        solution_dim=int(3 - rank),
        window_as_printed=literal,
    )


class TorusProductSpace(AmbientSpace):
    """T^2(alpha, beta) x R embedded by the circle map times the identity."""

    def __init__(self, name, data: TorusEmbeddingData, params=None):
        self.name = name
        self.data = data
        self.params = dict(params or {})
        keep = [i for i in range(3) if data.C[i] > 0]
        self._a = np.array([data.a[i] for i in keep])
        self._b = np.array([data.b[i] for i in keep])
        self._C = np.array([data.C[i] for i in keep])
        self.ncirc = len(keep)
        self.d = 2 * self.ncirc + 1
        self.chart_scale = 1.0 / max(np.max(np.abs(self._a)), np.max(np.abs(self._b)))

    def embed(self, p):
        p = np.asarray(p, dtype=float)
        u, v, t = p[..., 0], p[..., 1], p[..., 2]
        cols = []
        for a, b, C in zip(self._a, self._b, self._C):
            th = a * u + b * v
            cols += [C * np.cos(th), C * np.sin(th)]
        cols.append(t)
        return np.stack(cols, axis=-1)

    def metric(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy()

    def _circle_tangents(self, x):
        T = np.zeros(x.shape[:-1] + (self.ncirc, self.d))
        for i, C in enumerate(self._C):
            T[..., i, 2 * i] = -x[..., 2 * i + 1] / C
            T[..., i, 2 * i + 1] = x[..., 2 * i] / C
        return T

    def tangent_projector(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        T = self._circle_tangents(x)
        U = np.einsum("i,...id->...d", self._a * self._C, T)
        V = np.einsum("i,...id->...d", self._b * self._C, T)
        e1 = U / np.linalg.norm(U, axis=-1, keepdims=True)
        V = V - np.einsum("...i,...i->...", V, e1)[..., None] * e1
        e2 = V / np.linalg.norm(V, axis=-1, keepdims=True)
        e3 = np.zeros_like(e1)
        e3[..., -1] = 1.0
        return sum(e[..., :, None] * e[..., None, :] for e in (e1, e2, e3))

    def sff(self, x, X, Y):
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(X), np.shape(Y)))
        for i, C in enumerate(self._C):
            s = slice(2 * i, 2 * i + 2)
            xy = np.einsum("...i,...i->...", X[..., s], Y[..., s])
            out[..., s] = -xy[..., None] * x[..., s] / C**2
        return out

    def ric(self, x, N):
        return np.zeros(np.shape(N)[:-1])

    scalar = 0.0

    @property
    def sff_norm_sq_sup(self):
        return self.data.sff_norm_sq

    @property
    def mean_vec_norm_sq_sup(self):
        return self.data.sff_norm_sq

    def manifold_residual(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        res = np.zeros(len(x))
        th = []
        for i, C in enumerate(self._C):
            xi = x[:, 2 * i : 2 * i + 2]
            res = np.maximum(res, np.abs(np.linalg.norm(xi, axis=1) / C - 1.0))
            th.append(np.arctan2(xi[:, 1], xi[:, 0]))
        if self.ncirc == 3:
            # recover (u, v) from circles 3 and 1, predict circle 2 angle
            v = th[2] / self._b[2]
            k1 = self.data.k[0]
            best = np.full(len(x), np.inf)
            for n in range(k1):
                u = (th[0] - self._b[0] * v) / self._a[0] + n / k1
                pred = self._a[1] * u + self._b[1] * v
                dev = np.abs(np.angle(np.exp(1j * (pred - th[1]))))
                best = np.minimum(best, dev)
            res = np.maximum(res, best)
        return res

    def random_chart_points(self, n, rng):
        (p1, _), (q1, q2) = ((1.0, 0.0), self.data.periods[1])
        s, t = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        return np.column_stack([s * p1 + t * q1, t * q2, rng.uniform(-1, 1, n)])


# ---------------------------------------------------------------------------
# Berger spheres: curvature closed forms only


class BergerSphere(AmbientSpace):
    has_embedding = False
    d = 8

    def __init__(self, kappa, tau):
        if not kappa - 4 * tau * tau > 0:
            raise InvalidParameter("Berger sphere needs kappa - 4 tau^2 > 0")
        self.name = "berger"
        self.kappa, self.tau = float(kappa), float(tau)
        self.params = {"kappa": self.kappa, "tau": self.tau}

    @property
    def scalar(self):
        return 2 * (self.kappa - self.tau**2)

    def tangent_plane_sff_sum(self, C2):
        """Sum over an orthonormal tangent 2-frame of |B(e_i,e_j)|^2, with C^2 in [0,1]."""
        k, t = self.kappa, self.tau
        return -6 * t * t + 2 * k + t * t * (k / (4 * t * t) - 1) ** 2 * (1 - np.asarray(C2)) ** 2

    @property
    def sff_norm_sq_sup(self):
        return float(self.tangent_plane_sff_sum(0.0))

    def _refuse(self, *args, **kwargs):
        raise ClosedFormOnlySpace(self.name)

    embed = metric = tangent_projector = sff = ric = manifold_residual = random_chart_points = _refuse
    tangent_frame = curvature_data = _refuse


# ---------------------------------------------------------------------------
# catalog

HEXAGONAL = {"alpha": 0.5, "beta": math.sqrt(3) / 2, "k1": 1, "l1": 1, "k2": 2, "l2": 1}
HEXAGONAL_CANDIDATE_C2 = (1.0, (math.sqrt(3) - 1) / 2, (11 + 2 * math.sqrt(3)) / 6)

SPACE_NAMES = ("r3", "ball", "s2xr", "s3", "t3", "t2xr", "rect_t2xr", "hexagonal", "berger")


def _positive(name, v):
    v = float(v)
    if not v > 0:
        raise InvalidParameter(f"{name} must be positive, got {v}")
    return v


def catalog_space(name: str, **params) -> AmbientSpace:
    """Construct a catalog space by name."""
    if name == "r3":
        return ProductSpace("r3", [Factor("line")] * 3)
    if name == "ball":
        R = _positive("radius", params.get("radius", 1.0))
        return ProductSpace("ball", [Factor("line")] * 3, {"radius": R}, boundary=BallBoundary(R))
    if name == "s2xr":
        r = _positive("r", params.get("r", 1.0))
        return ProductSpace("s2xr", [Factor("sphere", 2, r), Factor("line")], {"r": r})
    if name == "s3":
        r = _positive("r", params.get("r", 1.0))
        return ProductSpace("s3", [Factor("sphere", 3, r)], {"r": r})
    if name == "t3":
        r1 = _positive("r1", params.get("r1", 1.0))
        r2 = _positive("r2", params.get("r2", 1.0))
        return ProductSpace(
            "t3", [Factor("sphere", 1, 1.0), Factor("sphere", 1, r1), Factor("sphere", 1, r2)], {"r1": r1, "r2": r2}
        )
    if name == "rect_t2xr":
        beta = _positive("beta", params.get("beta", 1.0))
        if beta < 1:
            raise InvalidParameter("rectangular torus needs beta >= 1")
        return TorusProductSpace("rect_t2xr", torus_embedding_data(0.0, beta), {"beta": beta})
    if name in ("t2xr", "hexagonal"):
        p = dict(HEXAGONAL) if name == "hexagonal" else {}
        p.update({k: params[k] for k in ("alpha", "beta", "k1", "l1", "k2", "l2") if k in params})
        for k in ("k1", "l1", "k2", "l2"):
            p.setdefault(k, HEXAGONAL[k])
        if "alpha" not in p or "beta" not in p:
            raise InvalidParameter("t2xr needs alpha and beta")
        data = torus_embedding_data(float(p["alpha"]), float(p["beta"]), p["k1"], p["l1"], p["k2"], p["l2"])
        p = {k: (float(v) if k in ("alpha", "beta") else int(v)) for k, v in p.items()}
        return TorusProductSpace(name, data, p)
    if name == "berger":
        return BergerSphere(params.get("kappa", 8.0), params.get("tau", 1.0))
    raise InvalidParameter(f"unknown space {name!r}; known: {', '.join(SPACE_NAMES)}")


def space_from_header(header: dict) -> AmbientSpace:
    return catalog_space(header["space"], **header.get("params", {}))


# ---------------------------------------------------------------------------
# operations


def scalar_curvature(space: AmbientSpace, p=None) -> float:
    return float(space.scalar)


def sup_sff_norm(space: AmbientSpace) -> float:
    return float(space.sff_norm_sq_sup)


def threshold_H2(space: AmbientSpace) -> Threshold:
    if isinstance(space, BergerSphere):
        x = space.kappa / (4 * space.tau**2)
        return _threshold(space.tau**2 * (x - 3) * (x + 1))
    return _threshold(sup_sff_norm(space) - scalar_curvature(space))


def pinched_threshold(kind: str, **params) -> Threshold:
    """Thresholds of the two pinching theorems.

    scalar-pinched: needs ``C`` and ``mean_vec_norm_sq`` (sup |H_M|^2);
    convex-hypersurface: needs ``C`` and ``k1``.
    """
    C = params.get("C")
    if C is None or C <= 0:
        raise InvalidParameter("pinching constant C must be positive")
    if kind == "scalar-pinched":
        H2 = params.get("mean_vec_norm_sq", 1.0)
        if H2 < 0:
            raise InvalidParameter("|H_M|^2 must be nonnegative")
        return _threshold(H2 * (1 - 2 * C))
    if kind == "convex-hypersurface":
        k1 = params.get("k1", 1.0)
        return _threshold(3 * k1 * k1 * (C * C - 2))
    raise InvalidParameter(f"unknown pinching kind {kind!r}")


def second_fundamental_form_M(space: AmbientSpace, p, X, Y, method="closed"):
    """B_M(X, Y) at embed(p) for ambient tangent vectors X, Y.

    ``method="fd"`` differentiates the embedding twice and projects onto the
    normal space of M; it never touches the closed form.
    """
    if not space.has_embedding:
        raise ClosedFormOnlySpace(space.name)
    p = np.atleast_2d(np.asarray(p, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    x = space.embed(p)
    if method == "closed":
        return space.sff(x, X, Y)
    if method != "fd":
        raise InvalidParameter(f"unknown method {method!r}")
    J = embedding_jacobian(space, p)
    a = np.stack([np.linalg.lstsq(J[i], X[i], rcond=None)[0] for i in range(len(p))])
    b = np.stack([np.linalg.lstsq(J[i], Y[i], rcond=None)[0] for i in range(len(p))])
    h = FD_STEP2 * space.chart_scale
    f = space.embed
    d2 = (f(p + h * (a + b)) - f(p + h * (a - b)) - f(p - h * (a - b)) + f(p - h * (a + b))) / (4 * h * h)
    # project out TM using the finite-difference Jacobian
    out = np.empty_like(d2)
    for i in range(len(p)):
        Q, _ = np.linalg.qr(J[i])
        out[i] = d2[i] - Q @ (Q.T @ d2[i])
    return out


def embedding_jacobian(space: AmbientSpace, p):
    """Central finite-difference Jacobian, shape (n, d, 3)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    h = FD_STEP1 * space.chart_scale
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        cols.append((space.embed(p + e) - space.embed(p - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def isometry_residual(space: AmbientSpace, p) -> np.ndarray:
    """Relative Frobenius error between pulled-back and declared metric."""
    J = embedding_jacobian(space, p)
    G = np.einsum("nki,nkj->nij", J, J)
    g = space.metric(np.atleast_2d(p))
    return np.linalg.norm(G - g, axis=(1, 2)) / np.linalg.norm(g, axis=(1, 2))


def gauss_trace_residual(space: AmbientSpace, x) -> np.ndarray:
    """|R - (|H_M|^2 - |B_M|^2)| relative to max(|R|, |B|^2, |H|^2, 1e-300)."""
    out = []
    for c in space.curvature_data(x):
        scale = max(abs(c.scalar), c.sff_norm_sq, c.mean_vec_norm_sq, 1e-300)
        out.append(abs(c.scalar - (c.mean_vec_norm_sq - c.sff_norm_sq)) / scale)
    return np.array(out)


def hexagonal_consistency(space: TorusProductSpace | None = None, C2=HEXAGONAL_CANDIDATE_C2) -> dict:
    """Plug candidate radii into the isometry system of the hexagonal data.

    Reports the raw residual, the residual after the best global dilation,
    and the H^2 thresholds computed from the candidate and from the solved
    radii.
    """
    space = space or catalog_space("hexagonal")
    data = space.data
    A = data.system_matrix()
    g = np.array([1.0, 0.0, 1.0])
    r = A @ np.asarray(C2) - g
    Ac = A @ np.asarray(C2)
    lam = float(Ac @ g / (g @ g))
    dil = float(np.linalg.norm(Ac - lam * g) / np.linalg.norm(Ac))
    a, b = np.array(data.a), np.array(data.b)
    cand = float(np.sum(np.asarray(C2) * (a**2 + b**2) ** 2))
    return {
        "candidate_C2": list(map(float, C2)),
        "solved_C2": [float(c * c) for c in data.C],
        "residual": r.tolist(),
        "residual_norm": float(np.linalg.norm(r)),
        "dilation_factor": lam,
        "dilation_relative_residual": dil,
        "threshold_candidate": cand,
        "threshold_solved": data.sff_norm_sq,
        "window_as_printed": data.window_as_printed,
    }

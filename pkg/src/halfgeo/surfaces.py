"""Implicit surfaces in 3-space and their triangulated distance substrate.

A surface is the zero set of a polynomial Phi.  The built-in ellipsoids use
exactly the textbook equations, e.g. the triaxial ellipsoid is
``(x/a)^2 + (y/b)^2 + (z/c)^2 - 1``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from . import _kernels as K
from .errors import DegenerateGradient, NonConvergence, ResolutionTooCoarse

logger = logging.getLogger(__name__)

GRAD_FLOOR = K.GRAD_FLOOR
PROJECTION_TOL = 1e-12
NEWTON_BUDGET = 50
H_RANGE = (0.01, 0.5)
MAX_DEPTH = 7

KINDS = ("sphere", "triaxial", "oblate", "custom")


@dataclass(frozen=True)
class SurfaceSpec:
    """Polynomial level set ``{Phi = 0}`` with evaluable derivatives.

    Use the constructors :meth:`sphere`, :meth:`triaxial`, :meth:`oblate`
    and :meth:`custom` rather than filling the fields directly.

    Parameters
    ----------
    kind : str
        One of ``sphere``, ``triaxial``, ``oblate``, ``custom``.
    params : tuple of float
        Kind parameters: ``(r,)``, ``(a, b, c)``, ``(c,)`` or ``()``.
    terms : tuple of (i, j, k, coef)
        Monomials of Phi, ``coef * x**i * y**j * z**k``.
    name : str
        Display label.
    """

    kind: str
    params: tuple
    terms: tuple
    name: str = field(default="", compare=False)

    @classmethod
    def sphere(cls, radius: float = 1.0) -> "SurfaceSpec":
        if not radius > 0:
            raise ValueError(f"sphere radius must be positive, got {radius}")
        s = 1.0 / radius**2
        terms = ((2, 0, 0, s), (0, 2, 0, s), (0, 0, 2, s), (0, 0, 0, -1.0))
        return cls("sphere", (float(radius),), terms, f"sphere:{radius:g}")

    @classmethod
    def triaxial(cls, a: float, b: float, c: float) -> "SurfaceSpec":
        if min(a, b, c) <= 0:
            raise ValueError(f"semi-axes must be positive, got {(a, b, c)}")
        terms = ((2, 0, 0, 1 / a**2), (0, 2, 0, 1 / b**2), (0, 0, 2, 1 / c**2), (0, 0, 0, -1.0))
        return cls("triaxial", (float(a), float(b), float(c)), terms,
                   f"triaxial:{a:g},{b:g},{c:g}")

    @classmethod
    def oblate(cls, c: float) -> "SurfaceSpec":
        if not 0 < c < 1:
            raise ValueError(f"oblate parameter c must lie in (0, 1), got {c}")
        terms = ((2, 0, 0, 1.0), (0, 2, 0, 1.0), (0, 0, 2, 1 / c**2), (0, 0, 0, -1.0))
        return cls("oblate", (float(c),), terms, f"oblate:{c:g}")

    @classmethod
    def custom(cls, terms, name: str = "custom") -> "SurfaceSpec":
        """Arbitrary polynomial; the zero set must be a star-shaped sphere about 0."""
        clean = []
        for t in terms:
            i, j, k, c = t
            if min(i, j, k) < 0:
                raise ValueError(f"negative exponent in term {t}")
            clean.append((int(i), int(j), int(k), float(c)))
        if not clean:
            raise ValueError("custom surface needs at least one term")
        return cls("custom", (), tuple(clean), name)

    # -- kernel tables -----------------------------------------------------

    @cached_property
    def exps(self) -> np.ndarray:
        return np.array([t[:3] for t in self.terms], dtype=np.int64)

    @cached_property
    def coefs(self) -> np.ndarray:
        return np.array([t[3] for t in self.terms], dtype=np.float64)

    # -- geometry ----------------------------------------------------------

    @cached_property
    def semi_axes(self) -> tuple:
        """Extent along the coordinate axes (radial root of Phi)."""
        if self.kind == "sphere":
            r = self.params[0]
            return (r, r, r)
        if self.kind == "triaxial":
            return tuple(self.params)
        if self.kind == "oblate":
            return (1.0, 1.0, self.params[0])
        return tuple(float(self.radial_root(np.eye(3)[i])[0]) for i in range(3))

    @cached_property
    def scale(self) -> float:
        """Characteristic length; numerical tolerances are relative to it."""
        if self.kind == "custom":
            dirs = fibonacci_sphere(64)
            return float(self.radial_root(dirs).max())
        return float(max(self.semi_axes))

    @property
    def is_ellipsoid(self) -> bool:
        return self.kind in ("sphere", "triaxial", "oblate")

    def mirror_symmetric(self, axis: int) -> bool:
        """True when Phi is even in the given coordinate."""
        return all(t[axis] % 2 == 0 or t[3] == 0.0 for t in self.terms)

    @property
    def rotational_about_z(self) -> bool:
        return self.kind == "sphere" or self.kind == "oblate"

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        out = np.zeros(len(pts))
        for i, j, k, c in self.terms:
            out += c * pts[:, 0] ** i * pts[:, 1] ** j * pts[:, 2] ** k
        return out[0] if x.ndim == 1 else out

    def grad_phi(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        out = np.zeros_like(pts)
        for i, j, k, c in self.terms:
            X, Y, Z = pts[:, 0], pts[:, 1], pts[:, 2]
            if i:
                out[:, 0] += c * i * X ** (i - 1) * Y**j * Z**k
            if j:
                out[:, 1] += c * j * X**i * Y ** (j - 1) * Z**k
            if k:
                out[:, 2] += c * k * X**i * Y**j * Z ** (k - 1)
        return out[0] if x.ndim == 1 else out

    def hess_phi(self, x):
        x = np.asarray(x, dtype=float)
        g = np.empty(3)
        if x.ndim == 1:
            H = np.empty((3, 3))
            K.phi_grad_hess(self.exps, self.coefs, x, g, H)
            return H
        out = np.empty((len(x), 3, 3))
        for n, p in enumerate(x):
            K.phi_grad_hess(self.exps, self.coefs, np.ascontiguousarray(p), g, out[n])
        return out

    def normal(self, x) -> np.ndarray:
        g = self.grad_phi(x)
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        if np.any(n < GRAD_FLOOR):
            raise DegenerateGradient(f"|grad Phi| below {GRAD_FLOOR:g} at {x}")
        return g / n

    def gauss_curvature(self, x) -> float:
        x = np.asarray(x, dtype=float)
        g = np.empty(3)
        H = np.empty((3, 3))
        K.phi_grad_hess(self.exps, self.coefs, x, g, H)
        if np.linalg.norm(g) < GRAD_FLOOR:
            raise DegenerateGradient(f"|grad Phi| below {GRAD_FLOOR:g} at {x}")
        return float(K.gauss_curvature_from(g, H))

    def radial_root(self, dirs) -> np.ndarray:
        """Radius r > 0 with Phi(r u) = 0 for each unit direction u."""
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        r = np.ones(len(dirs))
        if self.is_ellipsoid:
            a = np.asarray(self.semi_axes)
            return 1.0 / np.sqrt(((dirs / a) ** 2).sum(axis=1))
        for _ in range(NEWTON_BUDGET):
            pts = dirs * r[:, None]
            f = self.phi(pts)
            df = (self.grad_phi(pts) * dirs).sum(axis=1)
            step = f / df
            r = r - step
            if np.all(np.abs(step) < 1e-15 * np.maximum(r, 1.0)):
                break
        else:
            raise NonConvergence("radial root search did not converge")
        return r

    def __str__(self) -> str:
        return self.name or self.kind


def project_to_surface(spec: SurfaceSpec, x) -> np.ndarray:
    """Closest-point projection of x onto the surface.

    Solves ``x* = x - mu * grad Phi(x*)``, ``Phi(x*) = 0`` by Newton's method
    started from a gradient-Newton landing point.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty(3)
    y = x.copy()
    status = K.project_gradient(spec.exps, spec.coefs, y, g)
    if status == K.DEGENERATE:
        raise DegenerateGradient(f"|grad Phi| below floor near {x}")
    if status != K.OK:
        raise NonConvergence(f"projection of {x} did not converge")
    gy = spec.grad_phi(y)
    mu = float(np.dot(x - y, gy) / np.dot(gy, gy))
    y = x - mu * gy
    tol = PROJECTION_TOL * spec.scale
    H = np.empty((3, 3))
    for _ in range(NEWTON_BUDGET):
        f = K.phi_grad_hess(spec.exps, spec.coefs, y, g, H)
        r = np.concatenate([y - x + mu * g, [f]])
        J = np.zeros((4, 4))
        J[:3, :3] = np.eye(3) + mu * H
        J[:3, 3] = g
        J[3, :3] = g
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"singular projection system at {x}") from exc
        y = y + step[:3]
        mu += step[3]
        if np.linalg.norm(step[:3]) < 1e-15 * spec.scale and abs(spec.phi(y)) <= tol:
            break
    else:
        raise NonConvergence(f"projection of {x} exceeded {NEWTON_BUDGET} iterations")
    if np.linalg.norm(spec.grad_phi(y)) < GRAD_FLOOR:
        raise DegenerateGradient(f"|grad Phi| below floor at {y}")
    # final polish along the gradient keeps |Phi| at round-off
    K.project_gradient(spec.exps, spec.coefs, y, g)
    return y


def tangent_project(spec: SurfaceSpec, x, v) -> np.ndarray:
    """Remove the normal component of v at the surface point x."""
    n = spec.normal(np.asarray(x, dtype=float))
    v = np.asarray(v, dtype=float)
    return v - np.dot(v, n) * n


def tangent_frame(spec: SurfaceSpec, x):
    """Orthonormal (e1, e2, n) at x with e2 = n x e1."""
    n = spec.normal(np.asarray(x, dtype=float))
    trial = np.eye(3)[np.argmin(np.abs(n))]
    e1 = trial - np.dot(trial, n) * n
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1), n


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    ang = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(ang), r * np.sin(ang), z])


def sample_points(spec: SurfaceSpec, n: int) -> np.ndarray:
    """Fibonacci-sphere directions pushed radially onto the surface."""
    u = fibonacci_sphere(n)
    return u * spec.radial_root(u)[:, None]


# -- mesh -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Icosphere-derived triangulation plus its weighted edge graph.

    ``edges`` holds the triangle edges followed by the diagonals across each
    pair of adjacent triangles; ``lengths`` are intrinsic (geodesic) lengths.
    """

    spec: SurfaceSpec
    h: float
    depth: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    max_edge: float
    distortion: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def graph(self):
        n = self.n_vertices
        i, j = self.edges.T
        w = self.lengths
        return coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()

    @cached_property
    def tree(self):
        from scipy.spatial import cKDTree

        return cKDTree(self.vertices)

    def nearest(self, x) -> int:
        return int(self.tree.query(np.asarray(x, dtype=float))[1])


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return v, f


@lru_cache(maxsize=None)
def icosphere(depth: int):
    """Unit icosphere after ``depth`` midpoint subdivisions (read-only arrays)."""
    v, f = _icosahedron()
    verts = list(v)
    for _ in range(depth):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(nf)
    V = np.array(verts)
    V.setflags(write=False)
    f.setflags(write=False)
    return V, f


def _edge_sets(faces: np.ndarray):
    """Unique triangle edges and the opposite-vertex diagonals across them."""
    n_f = len(faces)
    half = np.concatenate([faces[:, [0, 1, 2]], faces[:, [1, 2, 0]], faces[:, [2, 0, 1]]])
    a, b, opp = half[:, 0], half[:, 1], half[:, 2]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((hi, lo))
    lo, hi, opp = lo[order], hi[order], opp[order]
    # closed manifold: every edge appears exactly twice
    tri_edges = np.column_stack([lo[::2], hi[::2]])
    diag = np.column_stack([opp[::2], opp[1::2]])
    diag = np.sort(diag, axis=1)
    assert len(tri_edges) == 3 * n_f // 2
    return tri_edges, diag


def _intrinsic_lengths(spec: SurfaceSpec, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    L, _, _, _, S = K.short_geodesics(spec.exps, spec.coefs, P, Q,
                                      0.02 * spec.scale, 1e-13 * spec.scale, 30)
    chord = np.linalg.norm(Q - P, axis=1)
    return np.where(S == K.OK, L, chord)


@lru_cache(maxsize=None)
def _sphere_distortion(depth: int, n_sources: int = 8) -> float:
    """Worst graph/geodesic ratio on the unit icosphere with the same edge stencil."""
    V, F = icosphere(depth)
    tri, diag = _edge_sets(F)
    e = np.concatenate([tri, diag])
    w = np.arccos(np.clip((V[e[:, 0]] * V[e[:, 1]]).sum(1), -1, 1))
    n = len(V)
    G = coo_matrix((np.r_[w, w], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                   shape=(n, n)).tocsr()
    rng = np.random.default_rng(depth)
    src = rng.choice(n, size=min(n_sources, n), replace=False)
    D = dijkstra(G, indices=src)
    exact = np.arccos(np.clip(V[src] @ V.T, -1, 1))
    edge = w[: len(tri)].max()
    mask = exact > 2.0 * edge
    return float((D[mask] / exact[mask]).max())


def depth_for(h: float, spec: SurfaceSpec) -> int:
    for depth in range(MAX_DEPTH + 1):
        V, F = icosphere(depth)
        tri, _ = _edge_sets(F)
        P = V[tri[:, 0]] * spec.radial_root(V[tri[:, 0]])[:, None]
        Q = V[tri[:, 1]] * spec.radial_root(V[tri[:, 1]])[:, None]
        if np.linalg.norm(P - Q, axis=1).max() <= h:
            return depth
    raise ValueError(f"h={h} needs more than {MAX_DEPTH} subdivisions")


def build_mesh(spec: SurfaceSpec, h: float = 0.05) -> SurfaceMesh:
    """Triangulate the surface with maximum triangle edge (chord) at most h.

    Parameters
    ----------
    spec : SurfaceSpec
    h : float
        Target maximum edge length, in ``[0.01, 0.5]`` times the surface scale.

    Raises
    ------
    ResolutionTooCoarse
        If the edge graph is disconnected.
    """
    return _build_mesh(spec, float(h))


@lru_cache(maxsize=16)
def _build_mesh(spec: SurfaceSpec, h: float) -> SurfaceMesh:
    lo, hi = H_RANGE
    if not lo * spec.scale <= h <= hi * spec.scale:
        raise ValueError(f"h={h} outside [{lo}, {hi}] x scale ({spec.scale:g})")
    depth = depth_for(h, spec)
    U, F = icosphere(depth)
    V = U * spec.radial_root(U)[:, None]
    g = np.empty(3)
    for row in V:
        K.project_gradient(spec.exps, spec.coefs, row, g)
    tri, diag = _edge_sets(F)
    edges = np.concatenate([tri, diag])
    lengths = _intrinsic_lengths(spec, V[edges[:, 0]], V[edges[:, 1]])
    max_edge = float(np.linalg.norm(V[tri[:, 0]] - V[tri[:, 1]], axis=1).max())
    mesh = SurfaceMesh(spec, h, depth, V, np.asarray(F), edges, lengths, max_edge,
                       _sphere_distortion(depth))
    ncomp, _ = connected_components(mesh.graph, directed=False)
    if ncomp != 1:
        raise ResolutionTooCoarse(f"mesh graph has {ncomp} components at h={h}")
    logger.debug("mesh %s h=%g depth=%d vertices=%d", spec, h, depth, len(V))
    return mesh


# -- selectors and catalog --------------------------------------------------


def _floats(text: str):
    return [float(s) for s in text.split(",") if s.strip()]


def from_entry(entry: dict) -> SurfaceSpec:
    """Build a surface from a catalog entry ``{name, kind, params}``."""
    kind = entry["kind"].lower()
    params = entry.get("params", [])
    name = entry.get("name", "")
    if kind == "sphere":
        r = params["radius"] if isinstance(params, dict) else params[0]
        spec = SurfaceSpec.sphere(r)
    elif kind == "triaxial":
        a, b, c = (params["a"], params["b"], params["c"]) if isinstance(params, dict) else params
        spec = SurfaceSpec.triaxial(a, b, c)
    elif kind == "oblate":
        c = params["c"] if isinstance(params, dict) else params[0]
        spec = SurfaceSpec.oblate(c)
    elif kind == "custom":
        terms = params["terms"] if isinstance(params, dict) else params
        spec = SurfaceSpec.custom(terms, name or "custom")
    else:
        raise ValueError(f"unknown surface kind {kind!r}; expected one of {KINDS}")
    if name:
        spec = SurfaceSpec(spec.kind, spec.params, spec.terms, name)
    return spec


def load_catalog(path) -> dict:
    entries = json.loads(Path(path).read_text())
    if not isinstance(entries, list):
        raise ValueError("surface catalog must be a JSON array")
    return {e["name"]: from_entry(e) for e in entries}


def parse_surface(selector: str, catalog: dict | None = None) -> SurfaceSpec:
    """Resolve ``sphere:r``, ``oblate:c``, ``triaxial:a,b,c`` or a catalog name."""
    if catalog and selector in catalog:
        return catalog[selector]
    kind, _, rest = selector.partition(":")
    kind = kind.strip().lower()
    vals = _floats(rest)
    if kind == "sphere" and len(vals) == 1:
        return SurfaceSpec.sphere(vals[0])
    if kind == "oblate" and len(vals) == 1:
        return SurfaceSpec.oblate(vals[0])
    if kind == "triaxial" and len(vals) == 3:
        return SurfaceSpec.triaxial(*vals)
    raise ValueError(
        f"cannot parse surface {selector!r}; use sphere:r, oblate:c, triaxial:a,b,c "
        "or a name from --catalog"
    )

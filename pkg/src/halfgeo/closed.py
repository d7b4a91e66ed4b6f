"""Closed geodesics: symmetric plane sections and Birkhoff curve shortening."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import _kernels as K
from .errors import NoConvergence, NonConvergence, NotSymmetric
from .geodesic import (CLOSURE_POS_TOL, CLOSURE_VEL_TOL, ClosedGeodesic, closure_gaps,
                       default_step, shoot)
from .surfaces import SurfaceSpec, tangent_frame

logger = logging.getLogger(__name__)

# plane -> (normal axis, first in-plane axis, second in-plane axis)
PLANES = {"X0": (0, 1, 2), "Y0": (1, 0, 2), "Z0": (2, 0, 1)}

MIN_LOOP_POINTS = 8
SEGMENT_BUDGET = 0.1


def ellipse_perimeter(A: float, B: float) -> float:
    """Perimeter of the ellipse with semi-axes A, B by adaptive quadrature."""
    f = lambda t: math.sqrt((A * math.sin(t)) ** 2 + (B * math.cos(t)) ** 2)
    val, _ = quad(f, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-13, limit=200)
    return 4.0 * val


def _section_perimeter(spec: SurfaceSpec, i: int, j: int) -> float:
    if spec.is_ellipsoid:
        ax = spec.semi_axes
        return ellipse_perimeter(ax[i], ax[j])
    ei, ej = np.eye(3)[i], np.eye(3)[j]

    def speed(phi):
        u = math.cos(phi) * ei + math.sin(phi) * ej
        du = -math.sin(phi) * ei + math.cos(phi) * ej
        r = float(spec.radial_root(u)[0])
        g = spec.grad_phi(r * u)
        dr = -r * float(np.dot(g, du)) / float(np.dot(g, u))
        return math.hypot(r, dr)

    val, _ = quad(speed, 0.0, 2 * math.pi, epsabs=0.0, epsrel=1e-12, limit=400)
    return val


def _check_closed(path, L, label):
    pos, vel = closure_gaps(path)
    if pos > CLOSURE_POS_TOL or vel > CLOSURE_VEL_TOL:
        raise NonConvergence(f"{label} does not close: position gap {pos:.2e}, "
                             f"velocity gap {vel:.2e}")
    return pos + vel


def section_geodesic(spec: SurfaceSpec, plane: str, step: float | None = None) -> ClosedGeodesic:
    """Coordinate-plane section as a closed geodesic.

    The section through the reflection plane is a geodesic by symmetry.  The
    prime length comes from quadrature of the section perimeter; the
    geodesic started on the first in-plane axis is shot for that length and
    must return within the closure tolerances.
    """
    plane = plane.upper()
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {sorted(PLANES)}, got {plane!r}")
    k, i, j = PLANES[plane]
    if not spec.mirror_symmetric(k):
        raise NotSymmetric(f"{spec} is not symmetric under reflection of axis {k}")
    ei, ej = np.eye(3)[i], np.eye(3)[j]
    start = ei * float(spec.radial_root(ei)[0])
    L = _section_perimeter(spec, i, j)
    path = shoot(spec, start, ej, L, step)
    resid = _check_closed(path, L, f"section {plane}")
    return ClosedGeodesic(path, L, resid, plane)


def meridian(spec: SurfaceSpec, azimuth: float, step: float | None = None) -> ClosedGeodesic:
    """Meridian of a surface of revolution about the z-axis."""
    if not spec.rotational_about_z:
        raise NotSymmetric(f"{spec} is not rotationally symmetric about z")
    u = np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    start = u * spec.semi_axes[0]
    L = ellipse_perimeter(spec.semi_axes[0], spec.semi_axes[2])
    path = shoot(spec, start, np.array([0.0, 0.0, 1.0]), L, step)
    resid = _check_closed(path, L, f"meridian at azimuth {azimuth:.4f}")
    return ClosedGeodesic(path, L, resid, f"meridian@{azimuth:.4f}")


def great_circle(spec: SurfaceSpec, p, v, step: float | None = None) -> ClosedGeodesic:
    if spec.kind != "sphere":
        raise NotSymmetric("great circles exist only on round spheres")
    L = 2 * math.pi * spec.params[0]
    path = shoot(spec, p, v, L, step)
    return ClosedGeodesic(path, L, _check_closed(path, L, "great circle"), "great-circle")


def random_great_circles(spec: SurfaceSpec, n: int, rng, step: float | None = None):
    out = []
    r = spec.params[0]
    for _ in range(n):
        p = rng.normal(size=3)
        p *= r / np.linalg.norm(p)
        e1, e2, _ = tangent_frame(spec, p)
        a = rng.uniform(0, 2 * math.pi)
        out.append(great_circle(spec, p, math.cos(a) * e1 + math.sin(a) * e2, step))
    return out


def sample_closed_geodesics(spec: SurfaceSpec, count: int = 4, rng=None,
                            step: float | None = None):
    """Closed geodesics that symmetry hands us for free.

    Coordinate sections (for each reflection-symmetric plane), random
    meridians on surfaces of revolution, random great circles on spheres.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    for plane in PLANES:
        try:
            out.append(section_geodesic(spec, plane, step))
        except NotSymmetric:
            pass
    if spec.kind == "sphere":
        out += random_great_circles(spec, count, rng, step)
    elif spec.rotational_about_z:
        out += [meridian(spec, a, step) for a in rng.uniform(0, 2 * math.pi, size=count)]
    return out


def prime_length(spec: SurfaceSpec, cg: ClosedGeodesic, tol: float = 1e-6,
                 max_cover: int = 8) -> float:
    """Smallest period L/k (k <= max_cover) at which position and velocity return."""
    L = cg.prime_length
    for k in range(max_cover, 0, -1):
        pos, vel = closure_gaps(cg.path, L / k)
        if pos <= tol * spec.scale and vel <= tol:
            return L / k
    return L


def covered(cg: ClosedGeodesic, k: int, step: float | None = None) -> ClosedGeodesic:
    """The same closed geodesic traversed k times."""
    path = shoot(cg.spec, cg.path.start, cg.path.direction, k * cg.prime_length,
                 cg.path.step if step is None else step)
    return ClosedGeodesic(path, k * cg.prime_length, cg.closure_residual, f"{cg.label}x{k}")


# -- return-map refinement ------------------------------------------------------


def _onto_plane_section(spec, y, x0, v0):
    # Newton onto {Phi = 0} staying inside the plane through x0 normal to v0
    g = np.empty(3)
    for _ in range(50):
        f = K.phi_grad(spec.exps, spec.coefs, y, g)
        gp = g - np.dot(g, v0) * v0
        y = y - f * gp / np.dot(gp, gp)
        if abs(f) < 1e-15:
            break
    return y


def _first_return(spec, x, v, x0, v0, L0, step):
    """First crossing of the plane (y - x0).v0 = 0 near arclength L0."""
    n = max(4, int(math.ceil(1.3 * L0 / step)))
    X, V, JJ, _, st = K.shoot_samples(spec.exps, spec.coefs, x, v, 1.3 * L0, n)
    if st != K.OK:
        raise NonConvergence("integration failed during closed-geodesic refinement")
    h = 1.3 * L0 / n
    s = (X - x0) @ v0
    ks = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    ks = ks[ks * h > 0.5 * L0]
    if len(ks) == 0:
        raise NonConvergence("geodesic does not return to the transversal")
    k = int(ks[np.argmin(np.abs(ks * h - L0))])
    buf = np.empty((8, 3))
    g = np.empty(3)
    H = np.empty((3, 3))
    xn = np.empty(3)
    vn = np.empty(3)
    lo, hi = 0.0, h
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        K.rk4_step(spec.exps, spec.coefs, X[k], V[k], 0.0, 1.0, mid, xn, vn, buf, g, H)
        if np.dot(xn - x0, v0) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(L0, 1.0):
            break
    K.rk4_step(spec.exps, spec.coefs, X[k], V[k], 0.0, 1.0, 0.5 * (lo + hi), xn, vn, buf, g, H)
    return k * h + 0.5 * (lo + hi), xn.copy(), vn.copy()


def refine_closed(spec: SurfaceSpec, x0, v0, L0: float, step: float | None = None,
                  tol: float = 1e-13, max_iter: int = 30) -> ClosedGeodesic:
    """Newton on the return map to a transversal, from an approximate closed geodesic."""
    step = default_step(spec) if step is None else step
    x0 = np.asarray(x0, float)
    v0 = np.asarray(v0, float)
    n0 = spec.normal(x0)
    v0 = v0 - np.dot(v0, n0) * n0
    v0 /= np.linalg.norm(v0)
    w0 = np.cross(n0, v0)

    def start(z):
        x = _onto_plane_section(spec, x0 + z[0] * w0, x0, v0)
        n = spec.normal(x)
        v = math.cos(z[1]) * v0 + math.sin(z[1]) * w0
        v = v - np.dot(v, n) * n
        return x, v / np.linalg.norm(v)

    def coords(x, v):
        return np.array([np.dot(x - x0, w0), math.atan2(np.dot(v, w0), np.dot(v, v0))])

    def F(z):
        x, v = start(z)
        T, y, u = _first_return(spec, x, v, x0, v0, L0, step)
        return coords(y, u) - coords(x, v), T

    z = np.zeros(2)
    r, T = F(z)
    for _ in range(max_iter):
        if np.abs(r).max() < tol * max(spec.scale, 1.0):
            break
        J = np.empty((2, 2))
        for c in range(2):
            dz = np.zeros(2)
            dz[c] = 1e-7
            J[:, c] = (F(z + dz)[0] - r) / 1e-7
        try:
            dz = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            # degenerate (e.g. round sphere): every nearby start is closed already
            break
        lam = 1.0
        for _ls in range(10):
            rn, Tn = F(z + lam * dz)
            if np.abs(rn).max() < np.abs(r).max():
                break
            lam *= 0.5
        else:
            break
        z, r, T = z + lam * dz, rn, Tn
    x, v = start(z)
    path = shoot(spec, x, v, T, step)
    pos, vel = closure_gaps(path)
    if pos > CLOSURE_POS_TOL or vel > CLOSURE_VEL_TOL:
        raise NonConvergence(f"refined loop fails closure: position gap {pos:.2e}, "
                             f"velocity gap {vel:.2e}")
    return ClosedGeodesic(path, T, pos + vel, "birkhoff")


# -- discrete loops and Birkhoff shortening ---------------------------------------


def short_segments(spec: SurfaceSpec, P, Q, max_step: float | None = None):
    """(lengths, midpoints) of the short geodesics P[i] -> Q[i].

    ``max_step`` (default ``0.02 * scale``) bounds the integrator step; the
    lengths carry an O(max_step**4) relative bias.
    """
    P = np.ascontiguousarray(P, dtype=float)
    Q = np.ascontiguousarray(Q, dtype=float)
    step = 0.02 * spec.scale if max_step is None else max_step
    L, M, _, R, S = K.short_geodesics(spec.exps, spec.coefs, P, Q, step,
                                      1e-13 * spec.scale, 40)
    if np.any(S != K.OK):
        bad = int(np.argmax(S != K.OK))
        raise NonConvergence(f"short geodesic solver failed on segment {bad} "
                             f"(chord {np.linalg.norm(Q[bad] - P[bad]):.3g}, residual {R[bad]:.2e})")
    return L, M


@dataclass
class DiscreteLoop:
    """Cyclic list of surface points; segment lengths are intrinsic."""

    spec: SurfaceSpec
    points: np.ndarray

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if len(self.points) < MIN_LOOP_POINTS:
            raise ValueError(f"a loop needs at least {MIN_LOOP_POINTS} points")
        g = np.empty(3)
        for row in self.points:
            K.project_gradient(self.spec.exps, self.spec.coefs, row, g)

    @property
    def n(self) -> int:
        return len(self.points)

    def segment_lengths(self) -> np.ndarray:
        return short_segments(self.spec, self.points, np.roll(self.points, -1, axis=0))[0]

    @property
    def length(self) -> float:
        return float(self.segment_lengths().sum())

    @property
    def energy(self) -> float:
        ell = self.segment_lengths()
        return float(self.n * np.sum(ell**2))

    @classmethod
    def from_function(cls, spec: SurfaceSpec, curve, n: int) -> "DiscreteLoop":
        """Sample ``curve(theta)`` (ambient points, projected) at n angles."""
        th = 2 * math.pi * np.arange(n) / n
        return cls(spec, np.array([curve(t) for t in th], dtype=float))


@dataclass
class Collapsed:
    loop: DiscreteLoop
    iterations: int
    length: float
    history: list = field(default_factory=list, repr=False)


def _densify(spec, pts):
    while True:
        ell = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        if ell.max() <= SEGMENT_BUDGET * spec.scale:
            return pts
        _, M = short_segments(spec, pts, np.roll(pts, -1, axis=0))
        out = np.empty((2 * len(pts), 3))
        out[0::2] = pts
        out[1::2] = M
        pts = out


def birkhoff_shorten(spec: SurfaceSpec, seed: DiscreteLoop, iters: int = 20000,
                     tol: float | None = None, collapse_floor: float | None = None,
                     refine: bool = True):
    """Birkhoff midpoint shortening of a discrete loop.

    Even and odd points are alternately replaced by the geodesic midpoint of
    their neighbours.  Stops when no point moves more than ``tol``; the
    result is then polished into an exact closed geodesic by Newton on the
    return map and checked for closure.  Returns :class:`Collapsed` when the
    loop length drops below ``collapse_floor``.
    """
    tol = 1e-7 * spec.scale if tol is None else tol
    floor = 1e-2 * spec.scale if collapse_floor is None else collapse_floor
    pts = _densify(spec, seed.points.copy())
    n = len(pts)
    if n % 2:
        raise ValueError("Birkhoff passes need an even number of loop points")
    history = []
    for it in range(1, iters + 1):
        move = 0.0
        for parity in (0, 1):
            idx = np.arange(parity, n, 2)
            _, M = short_segments(spec, pts[(idx - 1) % n], pts[(idx + 1) % n])
            move = max(move, float(np.linalg.norm(M - pts[idx], axis=1).max()))
            pts[idx] = M
        ell = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        chord_len = float(ell.sum())
        if chord_len < floor:
            loop = DiscreteLoop(spec, pts)
            return Collapsed(loop, it, chord_len, history)
        if it % 25 == 0 or move < tol:
            history.append(DiscreteLoop(spec, pts).length)
        if move < tol:
            break
    else:
        raise NoConvergence(f"Birkhoff shortening did not settle in {iters} passes "
                            f"(last move {move:.2e})")
    loop = DiscreteLoop(spec, pts)
    if not refine:
        return loop
    x0 = pts[0]
    t = pts[1] - pts[-1]
    n0 = spec.normal(x0)
    t = t - np.dot(t, n0) * n0
    cg = refine_closed(spec, x0, t / np.linalg.norm(t), loop.length)
    logger.debug("Birkhoff converged in %d passes; loop %.8g, geodesic %.8g",
                 it, loop.length, cg.prime_length)
    cg.label = "birkhoff"
    return cg


def birkhoff_pass_lengths(spec: SurfaceSpec, seed: DiscreteLoop, passes: int):
    """Intrinsic loop length after each full pass (for monotonicity checks)."""
    pts = seed.points.copy()
    n = len(pts)
    out = [DiscreteLoop(spec, pts).length]
    for _ in range(passes):
        for parity in (0, 1):
            idx = np.arange(parity, n, 2)
            _, M = short_segments(spec, pts[(idx - 1) % n], pts[(idx + 1) % n])
            pts[idx] = M
        out.append(DiscreteLoop(spec, pts).length)
    return out

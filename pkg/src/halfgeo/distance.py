"""Intrinsic distance, cut times, injectivity radius and diameter.

Distances are computed in two tiers.  A Dijkstra search on the surface mesh
gives a certified upper bound (its edges carry true geodesic lengths) and a
starting direction.  Shooting then solves the two-point problem exactly:
Newton on (initial angle, length), where the angle derivative of the endpoint
is the Jacobi field.  Seeds come from the mesh path, from a coarse fan of
geodesics around the source, and from caller hints.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.csgraph import dijkstra

from . import _kernels as K
from ._parallel import pmap
from .errors import BVPNonConvergence, Disconnected, NumericalError
from .geodesic import conjugate_radius_estimate, direction_plan, endpoint
from .surfaces import (SurfaceSpec, build_mesh, sample_points, tangent_frame)

logger = logging.getLogger(__name__)

MESH_ORACLE = "MeshOracle"
SHOOTING_REFINED = "ShootingRefined"

BLASCHKE = "Blaschke"
NOT_BLASCHKE = "NotBlaschke"
INCONCLUSIVE = "Inconclusive"

SSSP_CACHE = 256


@dataclass
class DistanceResult:
    value: float
    method: str
    upper_bound: float
    lower_bound: float
    direction: np.ndarray | None = field(default=None, repr=False)
    mesh_value: float = math.nan

    def as_dict(self) -> dict:
        return {"value": self.value, "method": self.method,
                "upper_bound": self.upper_bound, "lower_bound": self.lower_bound}


@dataclass
class CutTimeSample:
    base: np.ndarray
    direction: np.ndarray
    cut_time: float
    bracket: tuple


@dataclass
class ScanReport:
    surface: str
    diameter_est: float
    inj_est: float
    cut_time_min: float
    cut_time_max: float
    cut_time_mean: float
    cut_time_count: int
    blaschke_verdict: str
    tol: float
    mesh_h: float
    mesh_vertices: int
    mesh_distortion: float
    conjugate_radius: float = math.inf
    half_shortest_closed: float = math.inf
    diameter_pair: tuple = ()

    def as_dict(self) -> dict:
        return {
            "surface": self.surface,
            "diameter_est": self.diameter_est,
            "inj_est": self.inj_est,
            "cut_times": {"min": self.cut_time_min, "max": self.cut_time_max,
                          "mean": self.cut_time_mean, "count": self.cut_time_count},
            "blaschke_verdict": self.blaschke_verdict,
            "tol": self.tol,
            "mesh": {"h": self.mesh_h, "vertices": self.mesh_vertices,
                     "distortion": self.mesh_distortion},
            "conjugate_radius": _finite(self.conjugate_radius),
            "half_shortest_closed": _finite(self.half_shortest_closed),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _finite(x):
    return x if math.isfinite(x) else None


class DistanceEngine:
    """Distance queries on one surface, sharing a mesh and Dijkstra cache.

    Parameters
    ----------
    spec : SurfaceSpec
    h : float
        Mesh resolution (relative to nothing; absolute length).
    bvp_step : float, optional
        Integrator step for the shooting solver, default ``1e-2 * scale``.
    fan_dirs : int
        Number of directions in the seeding fan.
    max_seeds : int
        Fan local minima refined by Newton per query.
    """

    def __init__(self, spec: SurfaceSpec, h: float = 0.05, bvp_step: float | None = None,
                 fan_dirs: int = 72, max_seeds: int = 4):
        self.spec = spec
        self.mesh = build_mesh(spec, h)
        self.scale = spec.scale
        self.bvp_step = 1e-2 * self.scale if bvp_step is None else bvp_step
        self.fan_step = 4e-2 * self.scale
        self.fan_dirs = fan_dirs
        self.max_seeds = max_seeds
        self.bvp_tol = 1e-11 * self.scale
        self.short_range = 0.2 * self.scale
        self._sssp = OrderedDict()
        self._lock = threading.Lock()
        self.fallbacks = 0

    # -- mesh oracle ----------------------------------------------------------

    def _sssp_from(self, i: int):
        with self._lock:
            hit = self._sssp.get(i)
            if hit is not None:
                self._sssp.move_to_end(i)
                return hit
        d, pred = dijkstra(self.mesh.graph, indices=i, return_predecessors=True)
        with self._lock:
            self._sssp[i] = (d, pred)
            if len(self._sssp) > SSSP_CACHE:
                self._sssp.popitem(last=False)
        return d, pred

    def mesh_distance(self, i: int, j: int) -> DistanceResult:
        """Graph distance between mesh vertices i and j."""
        d, _ = self._sssp_from(int(i))
        val = float(d[int(j)])
        if not math.isfinite(val):
            raise Disconnected(f"vertex {j} unreachable from {i}")
        return DistanceResult(val, MESH_ORACLE, val, val / self.mesh.distortion, mesh_value=val)

    def _snap(self, x):
        i = self.mesh.nearest(x)
        vx = self.mesh.vertices[i]
        L, _, _, _, S = K.short_geodesics(self.spec.exps, self.spec.coefs, x[None, :],
                                          vx[None, :], 0.02 * self.scale, self.bvp_tol, 30)
        s = float(L[0]) if S[0] == K.OK else 1.01 * float(np.linalg.norm(vx - x))
        return i, s

    def mesh_bracket(self, p, q):
        """(graph value, upper, lower, vertex path) for arbitrary surface points."""
        ip, sp = self._snap(p)
        iq, sq = self._snap(q)
        d, pred = self._sssp_from(ip)
        g = float(d[iq])
        if not math.isfinite(g):
            raise Disconnected(f"vertex {iq} unreachable from {ip}")
        upper = g + sp + sq
        lower = max(float(np.linalg.norm(q - p)), g / self.mesh.distortion - sp - sq)
        path = [iq]
        while path[-1] != ip and pred[path[-1]] >= 0:
            path.append(int(pred[path[-1]]))
        return g, upper, lower, path[::-1]

    # -- shooting -------------------------------------------------------------

    def _shoot_to(self, p, e1, e2, theta, T):
        v = math.cos(theta) * e1 + math.sin(theta) * e2
        x, w, j, _ = endpoint(self.spec, p, v, T, self.bvp_step)
        return x, w, j

    def solve_bvp(self, p, q, theta, T, frame=None, max_iter=40):
        """Newton on (angle, length) for the geodesic from p hitting q.

        Returns ``(length, direction)`` or ``None`` when Newton stalls.
        """
        e1, e2, _ = tangent_frame(self.spec, p) if frame is None else frame
        T = max(float(T), 1e-6 * self.scale)
        try:
            x, w, j = self._shoot_to(p, e1, e2, theta, T)
        except NumericalError:
            return None
        res = float(np.linalg.norm(x - q))
        for _ in range(max_iter):
            if res <= self.bvp_tol:
                return T, math.cos(theta) * e1 + math.sin(theta) * e2
            r = x - q
            nperp = np.cross(self.spec.normal(x), w)
            dT = -float(np.dot(r, w))
            dth = -float(np.dot(r, nperp)) / j if abs(j) > 1e-12 else 0.0
            s = min(1.0, 0.3 * self.scale / max(abs(dT), 1e-300), 0.3 / max(abs(dth), 1e-300))
            for _ls in range(12):
                Tn = T + s * dT
                if Tn > 0:
                    try:
                        xn, wn, jn = self._shoot_to(p, e1, e2, theta + s * dth, Tn)
                    except NumericalError:
                        xn = None
                    if xn is not None:
                        rn = float(np.linalg.norm(xn - q))
                        if rn < res:
                            theta, T, x, w, j, res = theta + s * dth, Tn, xn, wn, jn, rn
                            break
                s *= 0.5
            else:
                break
        if res <= 1e3 * self.bvp_tol:
            return T, math.cos(theta) * e1 + math.sin(theta) * e2
        return None

    def _fan_seeds(self, p, q, e1, e2, length):
        ang = 2.0 * math.pi * np.arange(self.fan_dirs) / self.fan_dirs
        dirs = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
        n = max(2, int(math.ceil(length / self.fan_step)))
        miss, tb = K.fan_miss(self.spec.exps, self.spec.coefs, p, dirs, q, float(length), n)
        left = np.roll(miss, 1)
        right = np.roll(miss, -1)
        idx = np.nonzero((miss <= left) & (miss <= right) & np.isfinite(miss))[0]
        idx = idx[np.argsort(miss[idx])][: self.max_seeds]
        return [(float(ang[i]), max(float(tb[i]), 1e-3 * self.scale)) for i in idx]

    def _mesh_seed(self, p, path, g, e1, e2):
        V = self.mesh.vertices
        target = min(0.3 * g, 0.3 * self.scale)
        for i in path[1:]:
            if np.linalg.norm(V[i] - p) >= target:
                break
        else:
            i = path[-1]
        d = V[i] - p
        return math.atan2(float(np.dot(d, e2)), float(np.dot(d, e1))), g

    def distance(self, p, q, hints=()) -> DistanceResult:
        """Intrinsic distance between surface points p and q.

        ``hints`` is an iterable of ``(direction, length)`` guesses, e.g. a
        known geodesic from p to q; each is polished by Newton.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        g, upper, lower, path = self.mesh_bracket(p, q)
        chord = float(np.linalg.norm(q - p))
        if chord <= 1e-13 * self.scale:
            return DistanceResult(0.0, SHOOTING_REFINED, upper, 0.0, None, g)
        frame = tangent_frame(self.spec, p)
        e1, e2, _ = frame
        found = []
        if chord < self.short_range:
            L, _, D, _, S = K.short_geodesics(self.spec.exps, self.spec.coefs, p[None, :],
                                              q[None, :], self.bvp_step, self.bvp_tol, 40)
            if S[0] == K.OK:
                found.append((float(L[0]), D[0].copy()))
        if not found:
            seeds = [(math.atan2(float(np.dot(v, e2)), float(np.dot(v, e1))), T)
                     for v, T in hints]
            seeds.append(self._mesh_seed(p, path, g, e1, e2))
            seeds += self._fan_seeds(p, q, e1, e2, 1.05 * upper + 2 * self.fan_step)
            for theta, T in seeds:
                sol = self.solve_bvp(p, q, theta, T, frame)
                if sol is not None:
                    found.append(sol)
        if found:
            value, direction = min(found, key=lambda s: s[0])
            if value <= upper + 1e-9 * self.scale:
                return DistanceResult(value, SHOOTING_REFINED, max(upper, value),
                                      lower, direction, g)
            logger.debug("shooting found %.6g above mesh bound %.6g", value, upper)
        self.fallbacks += 1
        logger.debug("BVP fell back to the mesh oracle for %s -> %s", p, q)
        return DistanceResult(upper, MESH_ORACLE, upper, lower, None, g)

    def distance_strict(self, p, q, hints=()) -> DistanceResult:
        res = self.distance(p, q, hints)
        if res.method != SHOOTING_REFINED:
            raise BVPNonConvergence(f"shooting failed between {p} and {q}")
        return res

    # -- cut time ---------------------------------------------------------------

    def minimizing_to(self, p, v, t: float, dist_tol: float) -> bool:
        """Whether the geodesic from (p, v) still minimizes at arclength t."""
        if t <= 0:
            return True
        q, _, _, _ = endpoint(self.spec, p, v, t, self.bvp_step)
        d = self.distance(p, q, hints=[(v, t)]).value
        return d >= t - dist_tol

    def cut_time(self, p, v, tol: float = 1e-3, dist_tol: float | None = None) -> CutTimeSample:
        """Bisect the largest t with d(p, gamma_v(t)) >= t - dist_tol.

        ``tol`` is the final bracket width; ``dist_tol`` (default
        ``1e-6 * scale``) is the slack on the minimality predicate.
        """
        from .geodesic import first_conjugate_time

        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        dist_tol = 1e-6 * self.scale if dist_tol is None else dist_tol
        ip, sp = self._snap(p)
        d, _ = self._sssp_from(ip)
        hi = float(np.max(d[np.isfinite(d)])) + sp + 2 * self.mesh.max_edge
        tc = first_conjugate_time(self.spec, p, v, tmax=hi)
        if math.isfinite(tc):
            # no geodesic minimizes past its first conjugate point
            if self.minimizing_to(p, v, tc, dist_tol):
                lo = max(0.0, tc - tol)
                if not self.minimizing_to(p, v, lo, dist_tol):
                    lo = self._bisect(p, v, 0.0, lo, tol, dist_tol)[0]
                return CutTimeSample(p, v, tc, (lo, tc))
            hi = tc
        for _ in range(6):
            if not self.minimizing_to(p, v, hi, dist_tol):
                break
            hi *= 1.25
        else:
            raise BVPNonConvergence("could not bracket the cut time")
        lo, hi = self._bisect(p, v, 0.0, hi, tol, dist_tol)
        return CutTimeSample(p, v, 0.5 * (lo + hi), (lo, hi))

    def _bisect(self, p, v, lo, hi, tol, dist_tol):
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.minimizing_to(p, v, mid, dist_tol):
                lo = mid
            else:
                hi = mid
        return lo, hi

    # -- diameter and scan ------------------------------------------------------

    def _perturbed(self, base, frame, a):
        e1, e2, _ = frame
        x = base + a[0] * e1 + a[1] * e2
        g = np.empty(3)
        K.project_gradient(self.spec.exps, self.spec.coefs, x, g)
        return x

    def diameter_estimate(self, n_points: int = 200, refine_pairs: int = 2,
                          maxfev: int = 160):
        """Max distance: mesh all-pairs on Fibonacci points, then local search.

        Returns ``(diameter, (p, q))``.
        """
        pts = sample_points(self.spec, n_points)
        verts = np.unique([self.mesh.nearest(x) for x in pts])
        D = dijkstra(self.mesh.graph, indices=verts)[:, verts]
        iu = np.triu_indices(len(verts), 1)
        order = np.argsort(-D[iu])
        pairs = []
        for k in order:
            a, b = verts[iu[0][k]], verts[iu[1][k]]
            if all(min(self._vd(a, c) + self._vd(b, e), self._vd(a, e) + self._vd(b, c))
                   > 4 * self.mesh.h for c, e in pairs):
                pairs.append((a, b))
            if len(pairs) >= refine_pairs:
                break
        best = (-1.0, None)
        V = self.mesh.vertices
        for a, b in pairs:
            pa, pb = V[a].copy(), V[b].copy()
            fa, fb = tangent_frame(self.spec, pa), tangent_frame(self.spec, pb)
            cache = {}

            def neg(z):
                key = tuple(np.round(z, 14))
                if key not in cache:
                    x = self._perturbed(pa, fa, z[:2])
                    y = self._perturbed(pb, fb, z[2:])
                    cache[key] = (-self.distance(x, y).value, x, y)
                return cache[key][0]

            step = 2.0 * self.mesh.h
            simplex = np.vstack([np.zeros(4), step * np.eye(4)])
            res = minimize(neg, np.zeros(4), method="Nelder-Mead",
                           options={"initial_simplex": simplex, "xatol": 1e-6 * self.scale,
                                    "fatol": 1e-9 * self.scale, "maxfev": maxfev})
            val, x, y = min(cache.values(), key=lambda c: c[0])
            if -val > best[0]:
                best = (-val, (x, y))
            logger.debug("diameter pair refine: %d evals -> %.8g", res.nfev, -val)
        return best

    def _vd(self, a, b):
        return float(np.linalg.norm(self.mesh.vertices[a] - self.mesh.vertices[b]))

    def scan(self, point_samples=8, direction_samples=4, diameter_points: int = 200,
             tol: float | None = None, cut_tol: float = 1e-3, closed=None,
             jobs: int | None = None) -> ScanReport:
        """Estimate diameter and injectivity radius and compare them.

        Parameters
        ----------
        point_samples : int or array_like
            Base points for cut times (count of Fibonacci points, or points).
        direction_samples : int
            Directions per base point, evenly spread over a half turn.
        tol : float, optional
            Blaschke tolerance on ``|inj - diam|``; defaults to
            ``5e-3 * diameter``.
        closed : list of ClosedGeodesic, optional
            Closed geodesics whose half prime length also bounds inj;
            sampled automatically when omitted.
        """
        from .closed import sample_closed_geodesics

        pts = (sample_points(self.spec, point_samples) if np.isscalar(point_samples)
               else np.atleast_2d(point_samples))
        plan = direction_plan(self.spec, pts, int(direction_samples))
        if not plan:
            raise ValueError("sampling plan is empty")
        cuts = pmap(lambda pv: self.cut_time(pv[0], pv[1], tol=cut_tol).cut_time, plan, jobs)
        conj = conjugate_radius_estimate(self.spec, plan)
        if closed is None:
            closed = sample_closed_geodesics(self.spec, count=4, rng=np.random.default_rng(0))
        half_closed = min((cg.prime_length / 2 for cg in closed), default=math.inf)
        diam, pair = self.diameter_estimate(diameter_points)
        inj = min(min(cuts), conj, half_closed)
        tol = 5e-3 * diam if tol is None else tol
        gap = abs(inj - diam)
        if gap <= tol:
            verdict = BLASCHKE
        elif gap > 3 * tol:
            verdict = NOT_BLASCHKE
        else:
            verdict = INCONCLUSIVE
        return ScanReport(
            surface=str(self.spec), diameter_est=diam, inj_est=inj,
            cut_time_min=min(cuts), cut_time_max=max(cuts),
            cut_time_mean=float(np.mean(cuts)), cut_time_count=len(cuts),
            blaschke_verdict=verdict, tol=tol, mesh_h=self.mesh.h,
            mesh_vertices=self.mesh.n_vertices, mesh_distortion=self.mesh.distortion,
            conjugate_radius=conj, half_shortest_closed=half_closed,
            diameter_pair=tuple(np.asarray(x).tolist() for x in pair),
        )


_ENGINES: dict = {}
_ENGINES_LOCK = threading.Lock()


def engine_for(spec: SurfaceSpec, h: float = 0.05) -> DistanceEngine:
    key = (spec, float(h))
    with _ENGINES_LOCK:
        eng = _ENGINES.get(key)
        if eng is None:
            eng = _ENGINES[key] = DistanceEngine(spec, h)
        return eng


def mesh_distance(mesh, p: int, q: int) -> DistanceResult:
    return engine_for(mesh.spec, mesh.h).mesh_distance(p, q)


def distance(spec: SurfaceSpec, p, q, h: float = 0.05, hints=()) -> DistanceResult:
    return engine_for(spec, h).distance(p, q, hints)


def cut_time(spec: SurfaceSpec, p, v, tol: float = 1e-3, h: float = 0.05) -> CutTimeSample:
    return engine_for(spec, h).cut_time(p, v, tol)


def scan(spec: SurfaceSpec, point_samples=8, direction_samples=4, tol=None, h: float = 0.05,
         **kw) -> ScanReport:
    return engine_for(spec, h).scan(point_samples, direction_samples, tol=tol, **kw)

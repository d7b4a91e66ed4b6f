"""Geodesic shooting, Jacobi fields and conjugate points on implicit surfaces.

Geodesics are integrated in ambient coordinates,

    x'' = lam(x, x') grad Phi(x),   lam = -(x'^T H x') / |grad Phi|^2,

by classical RK4 with the position pulled back onto ``Phi = 0`` and the
velocity re-tangentialised after every step.  Along each geodesic the scalar
Jacobi equation ``J'' + K J = 0`` is carried in the same RK4 stages.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import DegenerateGradient, DriftExceeded, NonConvergence
from .surfaces import SurfaceSpec, project_to_surface, tangent_frame

DRIFT_PER_LENGTH = 1e-8
UNIT_TOL = 1e-10
CLOSURE_POS_TOL = 1e-8
CLOSURE_VEL_TOL = 1e-6
ZERO_TOL = 1e-8

CSV_HEADER = ("t", "x", "y", "z", "vx", "vy", "vz")


def default_step(spec: SurfaceSpec) -> float:
    return 1e-3 * spec.scale


def _raise_status(status: int, what: str):
    if status == K.DEGENERATE:
        raise DegenerateGradient(f"{what}: |grad Phi| fell below the floor")
    if status != K.OK:
        raise NonConvergence(f"{what}: projection onto the level set failed")


@dataclass
class GeodesicPath:
    """Arclength-sampled unit-speed geodesic.

    ``jacobi`` (n, 2) holds J and J' for the field with J(0) = 0, J'(0) = 1
    along the in-surface normal; it is empty for paths read from CSV.
    """

    spec: SurfaceSpec
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    speed_drift: float = 0.0
    jacobi: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    @property
    def start(self) -> np.ndarray:
        return self.x[0]

    @property
    def direction(self) -> np.ndarray:
        return self.v[0]

    @property
    def length(self) -> float:
        return float(self.t[-1])

    @property
    def end(self) -> np.ndarray:
        return self.x[-1]

    @property
    def step(self) -> float:
        return float(np.diff(self.t).max()) if len(self.t) > 1 else 0.0

    def point_at(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and unit velocity at arclength s (cubic Hermite, projected)."""
        s = float(s)
        if not 0.0 <= s <= self.length * (1 + 1e-12):
            raise ValueError(f"arclength {s} outside [0, {self.length}]")
        k = int(np.searchsorted(self.t, s, side="right") - 1)
        k = min(max(k, 0), len(self.t) - 2)
        t0, t1 = self.t[k], self.t[k + 1]
        h = t1 - t0
        u = (s - t0) / h
        x0, x1, v0, v1 = self.x[k], self.x[k + 1], self.v[k], self.v[k + 1]
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        x = h00 * x0 + h10 * h * v0 + h01 * x1 + h11 * h * v1
        d00 = (6 * u**2 - 6 * u) / h
        d10 = 3 * u**2 - 4 * u + 1
        d01 = (-6 * u**2 + 6 * u) / h
        d11 = 3 * u**2 - 2 * u
        v = d00 * x0 + d10 * v0 + d01 * x1 + d11 * v1
        g = np.empty(3)
        K.project_gradient(self.spec.exps, self.spec.coefs, x, g)
        n = g / np.linalg.norm(g)
        v = v - np.dot(v, n) * n
        return x, v / np.linalg.norm(v)

    def reversed(self) -> "GeodesicPath":
        L = self.length
        return GeodesicPath(self.spec, L - self.t[::-1], self.x[::-1].copy(),
                            -self.v[::-1], self.speed_drift)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, x, v in zip(self.t, self.x, self.v):
            w.writerow([f"{val:.17g}" for val in (t, *x, *v)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, spec: SurfaceSpec, source) -> "GeodesicPath":
        """Read the ``t,x,y,z,vx,vy,vz`` schema from a path or CSV text."""
        text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(h.strip() for h in rows[0]) != CSV_HEADER:
            raise ValueError(f"expected CSV header {','.join(CSV_HEADER)}, got {rows[0]}")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        return cls(spec, data[:, 0], data[:, 1:4], data[:, 4:7])


@dataclass
class ClosedGeodesic:
    path: GeodesicPath
    prime_length: float
    closure_residual: float
    label: str = ""

    @property
    def spec(self) -> SurfaceSpec:
        return self.path.spec

    def sidecar(self) -> dict:
        return {"prime_length": self.prime_length, "closure_residual": self.closure_residual}


@dataclass
class IndexReport:
    conjugate_times: list
    multiplicities: list
    index: int
    tangential_suspects: list = field(default_factory=list)


def _check_start(spec: SurfaceSpec, p, v):
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(spec.phi(p)) > 1e-9:
        p = project_to_surface(spec, p)
    n = spec.normal(p)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be unit length, |v| = {np.linalg.norm(v)!r}")
    if abs(np.dot(v, n)) > 1e-8:
        raise ValueError("direction is not tangent to the surface at the start point")
    v = v - np.dot(v, n) * n
    return p, v / np.linalg.norm(v)


def shoot(spec: SurfaceSpec, p, v, length: float, step: float | None = None,
          check_drift: bool = True) -> GeodesicPath:
    """Integrate the unit-speed geodesic from (p, v) for the given arclength.

    Parameters
    ----------
    spec : SurfaceSpec
    p, v : array_like
        Start point on the surface and unit tangent direction.
    length : float
        Arclength to integrate, >= 0.
    step : float, optional
        Upper bound for the sample spacing; defaults to ``1e-3 * spec.scale``.
    check_drift : bool
        Raise :class:`DriftExceeded` when the pre-projection speed error
        exceeds ``1e-8`` per unit length.
    """
    if length < 0:
        raise ValueError("length must be nonnegative")
    p, v = _check_start(spec, p, v)
    step = default_step(spec) if step is None else float(step)
    n = max(1, int(math.ceil(length / step - 1e-9)))
    if length == 0:
        n = 0
    X, V, JJ, drift, st = K.shoot_samples(spec.exps, spec.coefs, p, v, float(length), n)
    _raise_status(st, "shoot")
    t = np.linspace(0.0, length, n + 1)
    if check_drift and drift > DRIFT_PER_LENGTH * max(length, 1e-300):
        raise DriftExceeded(f"speed drift {drift:.3e} over length {length:g}")
    return GeodesicPath(spec, t, X, V, float(drift), JJ)


def endpoint(spec: SurfaceSpec, p, v, length: float, step: float):
    """Final (x, v, J, J') of the geodesic without storing samples."""
    n = max(1, int(math.ceil(length / step - 1e-9)))
    x, w, j, jp, _, st = K.shoot_end(spec.exps, spec.coefs, np.asarray(p, float),
                                     np.asarray(v, float), 0.0, 1.0, float(length), n)
    _raise_status(st, "endpoint")
    return x, w, j, jp


def closure_gaps(path: GeodesicPath, length: float | None = None):
    """(position gap, velocity gap) between the start and arclength ``length``."""
    if length is None or abs(length - path.length) < 1e-15:
        xe, ve = path.x[-1], path.v[-1]
    else:
        xe, ve = path.point_at(length)
    return float(np.linalg.norm(xe - path.x[0])), float(np.linalg.norm(ve - path.v[0]))


def _jacobi_samples(path: GeodesicPath) -> np.ndarray:
    if len(path.jacobi) == len(path.t):
        return path.jacobi
    # CSV-loaded path: re-integrate with the same sampling
    fresh = shoot(path.spec, path.start, path.direction, path.length, path.step,
                  check_drift=False)
    return fresh.jacobi


def jacobi_index(spec: SurfaceSpec, path: GeodesicPath) -> IndexReport:
    """Conjugate points of path.start along the path and the Morse index.

    Zeros of J in the open interval (0, length) are bracketed by sign changes
    between samples and then bisected to 1e-8 using single partial RK4 steps.
    Near-tangential zeros (|J| dips close to zero with J' changing sign but no
    sign change of J) are listed in ``tangential_suspects`` and not counted.
    """
    JJ = _jacobi_samples(path)
    J = JJ[:, 0]
    times = []
    suspects = []
    buf = np.empty((8, 3))
    g = np.empty(3)
    H = np.empty((3, 3))
    xn = np.empty(3)
    vn = np.empty(3)
    L = path.length
    scale_j = max(np.abs(J).max(), 1e-300)
    for k in range(1, len(J) - 1):
        a, b = J[k], J[k + 1]
        if a == 0.0:
            times.append(float(path.t[k]))
            continue
        if a * b < 0.0:
            lo, hi = 0.0, path.t[k + 1] - path.t[k]
            while hi - lo > ZERO_TOL:
                mid = 0.5 * (lo + hi)
                jm, _, _, _ = K.rk4_step(spec.exps, spec.coefs, path.x[k], path.v[k],
                                         JJ[k, 0], JJ[k, 1], mid, xn, vn, buf, g, H)
                if (jm > 0) == (a > 0):
                    lo = mid
                else:
                    hi = mid
            t0 = float(path.t[k] + 0.5 * (lo + hi))
            if 0.0 < t0 < L:
                times.append(t0)
        elif JJ[k, 1] * JJ[k + 1, 1] < 0 and min(abs(a), abs(b)) < 1e-6 * scale_j:
            suspects.append(float(path.t[k]))
    return IndexReport(times, [1] * len(times), len(times), suspects)


def random_unit_tangent(spec: SurfaceSpec, p, rng) -> np.ndarray:
    e1, e2, _ = tangent_frame(spec, p)
    a = rng.uniform(0.0, 2.0 * math.pi)
    return math.cos(a) * e1 + math.sin(a) * e2


def direction_plan(spec: SurfaceSpec, points, n_dirs: int):
    """Evenly spaced tangent directions at each point, as (p, v) pairs."""
    plan = []
    for p in np.atleast_2d(points):
        e1, e2, _ = tangent_frame(spec, p)
        for k in range(n_dirs):
            a = math.pi * k / n_dirs
            plan.append((np.asarray(p, float), math.cos(a) * e1 + math.sin(a) * e2))
    return plan


def first_conjugate_time(spec: SurfaceSpec, p, v, tmax: float | None = None,
                         step: float | None = None) -> float:
    tmax = 4.0 * math.pi * spec.scale if tmax is None else tmax
    step = 5e-3 * spec.scale if step is None else step
    t, st = K.first_conjugate(spec.exps, spec.coefs, np.asarray(p, float),
                              np.asarray(v, float), float(tmax), float(step))
    _raise_status(st, "first_conjugate_time")
    return float(t)


def conjugate_radius_estimate(spec: SurfaceSpec, samples, step: float | None = None) -> float:
    """Minimum first-conjugate time over a sampling plan of (p, v) pairs."""
    samples = list(samples)
    if not samples:
        raise ValueError("sampling plan is empty")
    return min(first_conjugate_time(spec, p, v, step=step) for p, v in samples)

"""Discrete length and energy on path space, concatenation, and a discrete
second-variation count of the Morse index.

A discrete path has N + 1 points on the unit parameter grid t_i = i / N.
Segment lengths are intrinsic, and

    L = sum(l_i),    E = N * sum(l_i ** 2),

so L**2 <= E by Cauchy-Schwarz with equality iff all l_i agree, which is the
discrete form of constant speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from . import _kernels as K
from .closed import short_segments
from .errors import EpsilonOutOfRange
from .geodesic import GeodesicPath, shoot
from .surfaces import SurfaceSpec

# fine enough that segment lengths are exact to ~1e-13 relative
SEGMENT_STEP = 1e-3


@dataclass
class DiscretePath:
    spec: SurfaceSpec
    points: np.ndarray

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if len(self.points) < 3:
            raise ValueError("a discrete path needs N >= 2 segments")
        self._ell = None

    @property
    def n_segments(self) -> int:
        return len(self.points) - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.points))

    def segment_lengths(self) -> np.ndarray:
        if self._ell is None:
            self._ell = short_segments(self.spec, self.points[:-1], self.points[1:],
                                       SEGMENT_STEP * self.spec.scale)[0]
        return self._ell

    def length(self) -> float:
        return float(self.segment_lengths().sum())

    def energy(self) -> float:
        ell = self.segment_lengths()
        return float(self.n_segments * np.dot(ell, ell))

    @classmethod
    def along(cls, geo: GeodesicPath, n: int, upto: float | None = None) -> "DiscretePath":
        """Equal-arclength samples of a geodesic (a constant-speed discrete path)."""
        L = geo.length if upto is None else upto
        pts = [geo.point_at(s)[0] for s in np.linspace(0.0, L, n + 1)]
        return cls(geo.spec, np.array(pts))


def length(path: DiscretePath) -> float:
    return path.length()


def energy(path: DiscretePath) -> float:
    return path.energy()


def concatenation_energy(energy_c: float, eps: float) -> float:
    """Energy of c followed by a unit-speed tail of length eps, squeezed into [0, 1]."""
    if not 0.0 < eps < 1.0:
        raise EpsilonOutOfRange(f"eps must lie in (0, 1), got {eps}")
    return energy_c / (1.0 - eps) + eps


def tail_segments(n_segments: int, eps: float) -> int:
    """Tail segment count K with K / (N + K) = eps; raises unless K is an integer."""
    if not 0.0 < eps < 1.0:
        raise EpsilonOutOfRange(f"eps must lie in (0, 1), got {eps}")
    k = n_segments * eps / (1.0 - eps)
    kr = round(k)
    if kr < 1 or abs(k - kr) > 1e-9 * max(1.0, k):
        raise ValueError(f"N * eps / (1 - eps) = {k:g} is not an integer; choose N or eps "
                         "so the grid splits at 1 - eps")
    return int(kr)


def concatenate(path: DiscretePath, tail: GeodesicPath, eps: float | None = None) -> DiscretePath:
    """tau * c: run c on [0, 1 - eps] and the unit-speed tail on [1 - eps, 1].

    The tail geodesic must start at the path's endpoint; its length is eps.
    Segment counts are proportional to (1 - eps, eps), so the discrete
    energies satisfy E(tau * c) = E(c) / (1 - eps) + eps exactly.
    """
    eps = tail.length if eps is None else eps
    if not 0.0 < eps < 1.0:
        raise EpsilonOutOfRange(f"eps must lie in (0, 1), got {eps}")
    if abs(tail.length - eps) > 1e-12 * max(1.0, eps):
        raise ValueError(f"tail length {tail.length} differs from eps {eps}")
    if np.linalg.norm(tail.start - path.points[-1]) > 1e-9 * path.spec.scale:
        raise ValueError("tail does not start at the end of the path")
    k = tail_segments(path.n_segments, eps)
    tail_pts = [tail.point_at(s)[0] for s in np.linspace(0.0, eps, k + 1)[1:]]
    return DiscretePath(path.spec, np.vstack([path.points, tail_pts]))


def _curvature_at(spec: SurfaceSpec, pts: np.ndarray) -> np.ndarray:
    g = np.empty(3)
    H = np.empty((3, 3))
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        K.phi_grad_hess(spec.exps, spec.coefs, np.ascontiguousarray(x), g, H)
        out[i] = K.gauss_curvature_from(g, H)
    return out


def second_variation_matrix(spec: SurfaceSpec, geo: GeodesicPath, n: int = 200):
    """Diagonal and off-diagonal of the discrete form sum(J'^2 - K J^2) dt.

    Variations are normal to the geodesic (the in-surface normal is parallel,
    so the form is scalar), vanish at both ends, and use curvature sampled at
    segment midpoints with lumped mass.
    """
    if n < 2:
        raise ValueError("need at least two segments")
    T = geo.length
    dt = T / n
    fine = shoot(spec, geo.start, geo.direction, T, dt / 2, check_drift=False)
    kmid = _curvature_at(spec, fine.x[1::2])
    diag = 2.0 / dt - 0.5 * dt * (kmid[:-1] + kmid[1:])
    off = np.full(n - 2, -1.0 / dt)
    return diag, off


def discrete_hessian_index(spec: SurfaceSpec, geo: GeodesicPath, n: int = 200) -> int:
    """Number of negative eigenvalues of the discrete second variation."""
    diag, off = second_variation_matrix(spec, geo, n)
    ev = eigvalsh_tridiagonal(diag, off)
    return int(np.count_nonzero(ev < 0.0))


def random_path(spec: SurfaceSpec, start, n: int, step: float, rng) -> DiscretePath:
    """Random walk of n steps of roughly the given length, projected onto the surface."""
    pts = [np.asarray(start, dtype=float)]
    g = np.empty(3)
    for _ in range(n):
        x = pts[-1] + rng.normal(size=3) * step / math.sqrt(3.0)
        K.project_gradient(spec.exps, spec.coefs, x, g)
        pts.append(x)
    return DiscretePath(spec, np.array(pts))

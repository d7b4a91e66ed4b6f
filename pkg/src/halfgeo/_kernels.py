"""Compiled inner loops for geodesic and Jacobi integration on polynomial level sets.

Surfaces reach these kernels as a monomial table: ``exps`` (m, 3) int64 and
``coefs`` (m,) float64 with Phi(x) = sum_k coefs[k] * x^e0 * y^e1 * z^e2.

Every kernel reports failure through an integer status instead of raising:

    0  ok
    1  gradient below floor (irregular level set)
    2  projection back onto the level set did not converge
"""

import math

import numpy as np
from numba import njit

GRAD_FLOOR = 1e-10
PROJ_TOL = 1e-14
PROJ_ITERS = 50

OK = 0
DEGENERATE = 1
NONCONVERGENT = 2


@njit(cache=True, nogil=True)
def _mono(s, e):
    # s^e and its first two derivatives
    if e == 0:
        return 1.0, 0.0, 0.0
    if e == 1:
        return s, 1.0, 0.0
    if e == 2:
        return s * s, 2.0 * s, 2.0
    p2 = s ** (e - 2)
    return p2 * s * s, e * p2 * s, e * (e - 1) * p2


@njit(cache=True, nogil=True)
def phi_grad_hess(exps, coefs, x, g, H):
    """Evaluate Phi at x, writing the gradient into g and the Hessian into H."""
    phi = 0.0
    for a in range(3):
        g[a] = 0.0
        for b in range(3):
            H[a, b] = 0.0
    for m in range(exps.shape[0]):
        c = coefs[m]
        f0, d0, s0 = _mono(x[0], exps[m, 0])
        f1, d1, s1 = _mono(x[1], exps[m, 1])
        f2, d2, s2 = _mono(x[2], exps[m, 2])
        phi += c * f0 * f1 * f2
        g[0] += c * d0 * f1 * f2
        g[1] += c * f0 * d1 * f2
        g[2] += c * f0 * f1 * d2
        H[0, 0] += c * s0 * f1 * f2
        H[1, 1] += c * f0 * s1 * f2
        H[2, 2] += c * f0 * f1 * s2
        H[0, 1] += c * d0 * d1 * f2
        H[0, 2] += c * d0 * f1 * d2
        H[1, 2] += c * f0 * d1 * d2
    H[1, 0] = H[0, 1]
    H[2, 0] = H[0, 2]
    H[2, 1] = H[1, 2]
    return phi


@njit(cache=True, nogil=True)
def phi_grad(exps, coefs, x, g):
    phi = 0.0
    g[0] = 0.0
    g[1] = 0.0
    g[2] = 0.0
    for m in range(exps.shape[0]):
        c = coefs[m]
        f0, d0, _ = _mono(x[0], exps[m, 0])
        f1, d1, _ = _mono(x[1], exps[m, 1])
        f2, d2, _ = _mono(x[2], exps[m, 2])
        phi += c * f0 * f1 * f2
        g[0] += c * d0 * f1 * f2
        g[1] += c * f0 * d1 * f2
        g[2] += c * f0 * f1 * d2
    return phi


@njit(cache=True, nogil=True)
def gauss_curvature_from(g, H):
    # K = g^T adj(H) g / |g|^4 for the level set of Phi
    a00 = H[1, 1] * H[2, 2] - H[1, 2] * H[2, 1]
    a11 = H[0, 0] * H[2, 2] - H[0, 2] * H[2, 0]
    a22 = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    a01 = H[0, 2] * H[2, 1] - H[0, 1] * H[2, 2]
    a02 = H[0, 1] * H[1, 2] - H[0, 2] * H[1, 1]
    a12 = H[0, 2] * H[1, 0] - H[0, 0] * H[1, 2]
    q = (a00 * g[0] * g[0] + a11 * g[1] * g[1] + a22 * g[2] * g[2]
         + 2.0 * (a01 * g[0] * g[1] + a02 * g[0] * g[2] + a12 * g[1] * g[2]))
    n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
    return q / (n2 * n2)


@njit(cache=True, nogil=True)
def _accel(exps, coefs, x, v, a, g, H):
    """Constrained acceleration x'' = lam * grad Phi; returns (K, |g|^2)."""
    phi_grad_hess(exps, coefs, x, g, H)
    n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
    vhv = 0.0
    for i in range(3):
        for k in range(3):
            vhv += v[i] * H[i, k] * v[k]
    lam = -vhv / n2
    a[0] = lam * g[0]
    a[1] = lam * g[1]
    a[2] = lam * g[2]
    return gauss_curvature_from(g, H), n2


@njit(cache=True, nogil=True)
def project_gradient(exps, coefs, x, g):
    """Pull x onto Phi = 0 by Newton steps along the gradient; returns status."""
    for _ in range(PROJ_ITERS):
        phi = phi_grad(exps, coefs, x, g)
        n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
        if n2 < GRAD_FLOOR * GRAD_FLOOR:
            return DEGENERATE
        s = phi / n2
        x[0] -= s * g[0]
        x[1] -= s * g[1]
        x[2] -= s * g[2]
        if abs(phi) <= PROJ_TOL * math.sqrt(n2):
            return OK
    return NONCONVERGENT


@njit(cache=True, nogil=True)
def _tangent_unit(exps, coefs, x, v, g):
    # project v onto the tangent plane at x, then renormalize; returns |v| before renormalization
    phi_grad(exps, coefs, x, g)
    n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
    d = (v[0] * g[0] + v[1] * g[1] + v[2] * g[2]) / n2
    v[0] -= d * g[0]
    v[1] -= d * g[1]
    v[2] -= d * g[2]
    s = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    v[0] /= s
    v[1] /= s
    v[2] /= s
    return s


@njit(cache=True, nogil=True)
def rk4_step(exps, coefs, x, v, j, jp, h, xn, vn, buf, g, H):
    """One projected RK4 step of the geodesic + scalar Jacobi system.

    Writes the new position/velocity into xn/vn and returns
    (j_new, jp_new, status, speed_deviation). ``buf`` is (8, 3) scratch.
    """
    a1 = buf[0]
    a2 = buf[1]
    a3 = buf[2]
    a4 = buf[3]
    xs = buf[4]
    vs2 = buf[5]
    vs3 = buf[6]
    vs4 = buf[7]
    K1, n2 = _accel(exps, coefs, x, v, a1, g, H)
    if n2 < GRAD_FLOOR * GRAD_FLOOR:
        return j, jp, DEGENERATE, 0.0
    for i in range(3):
        xs[i] = x[i] + 0.5 * h * v[i]
        vs2[i] = v[i] + 0.5 * h * a1[i]
    K2, n2 = _accel(exps, coefs, xs, vs2, a2, g, H)
    if n2 < GRAD_FLOOR * GRAD_FLOOR:
        return j, jp, DEGENERATE, 0.0
    for i in range(3):
        xs[i] = x[i] + 0.5 * h * vs2[i]
        vs3[i] = v[i] + 0.5 * h * a2[i]
    K3, n2 = _accel(exps, coefs, xs, vs3, a3, g, H)
    if n2 < GRAD_FLOOR * GRAD_FLOOR:
        return j, jp, DEGENERATE, 0.0
    for i in range(3):
        xs[i] = x[i] + h * vs3[i]
        vs4[i] = v[i] + h * a3[i]
    K4, n2 = _accel(exps, coefs, xs, vs4, a4, g, H)
    if n2 < GRAD_FLOOR * GRAD_FLOOR:
        return j, jp, DEGENERATE, 0.0
    for i in range(3):
        xn[i] = x[i] + h / 6.0 * (v[i] + 2.0 * vs2[i] + 2.0 * vs3[i] + vs4[i])
        vn[i] = v[i] + h / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])

    kj1 = jp
    kp1 = -K1 * j
    kj2 = jp + 0.5 * h * kp1
    kp2 = -K2 * (j + 0.5 * h * kj1)
    kj3 = jp + 0.5 * h * kp2
    kp3 = -K3 * (j + 0.5 * h * kj2)
    kj4 = jp + h * kp3
    kp4 = -K4 * (j + h * kj3)
    jn = j + h / 6.0 * (kj1 + 2.0 * kj2 + 2.0 * kj3 + kj4)
    jpn = jp + h / 6.0 * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4)

    dev = abs(math.sqrt(vn[0] * vn[0] + vn[1] * vn[1] + vn[2] * vn[2]) - 1.0)
    st = project_gradient(exps, coefs, xn, g)
    if st != OK:
        return jn, jpn, st, dev
    _tangent_unit(exps, coefs, xn, vn, g)
    return jn, jpn, OK, dev


@njit(cache=True, nogil=True)
def shoot_samples(exps, coefs, x0, v0, length, n):
    """Integrate n equal steps over [0, length], storing every state.

    Returns (X, V, JJ, drift, status) with JJ[:, 0] = J and JJ[:, 1] = J'.
    """
    X = np.empty((n + 1, 3))
    V = np.empty((n + 1, 3))
    JJ = np.empty((n + 1, 2))
    buf = np.empty((8, 3))
    g = np.empty(3)
    H = np.empty((3, 3))
    X[0] = x0
    V[0] = v0
    JJ[0, 0] = 0.0
    JJ[0, 1] = 1.0
    h = length / n if n > 0 else 0.0
    drift = 0.0
    for k in range(n):
        jn, jpn, st, dev = rk4_step(exps, coefs, X[k], V[k], JJ[k, 0], JJ[k, 1], h,
                                    X[k + 1], V[k + 1], buf, g, H)
        if st != OK:
            return X[:k + 1], V[:k + 1], JJ[:k + 1], drift, st
        JJ[k + 1, 0] = jn
        JJ[k + 1, 1] = jpn
        if dev > drift:
            drift = dev
    return X, V, JJ, drift, OK


@njit(cache=True, nogil=True)
def shoot_end(exps, coefs, x0, v0, j0, jp0, length, n):
    """Like shoot_samples but keeps only the final state.

    Returns (x, v, j, jp, drift, status).
    """
    x = x0.copy()
    v = v0.copy()
    xn = np.empty(3)
    vn = np.empty(3)
    buf = np.empty((8, 3))
    g = np.empty(3)
    H = np.empty((3, 3))
    j = j0
    jp = jp0
    h = length / n if n > 0 else 0.0
    drift = 0.0
    for _ in range(n):
        j, jp, st, dev = rk4_step(exps, coefs, x, v, j, jp, h, xn, vn, buf, g, H)
        if st != OK:
            return x, v, j, jp, drift, st
        x[:] = xn
        v[:] = vn
        if dev > drift:
            drift = dev
    return x, v, j, jp, drift, OK


@njit(cache=True, nogil=True)
def fan_miss(exps, coefs, p, dirs, q, length, n):
    """Closest approach to q of each geodesic fanned out from p.

    For every direction the polyline of RK4 nodes is scanned and the
    point-to-segment distance to q is minimised. Returns (miss, t_at_miss).
    """
    K = dirs.shape[0]
    miss = np.full(K, np.inf)
    tbest = np.zeros(K)
    x = np.empty(3)
    v = np.empty(3)
    xn = np.empty(3)
    vn = np.empty(3)
    buf = np.empty((8, 3))
    g = np.empty(3)
    H = np.empty((3, 3))
    h = length / n
    for d in range(K):
        x[:] = p
        v[:] = dirs[d]
        for k in range(n):
            _, _, st, _ = rk4_step(exps, coefs, x, v, 0.0, 1.0, h, xn, vn, buf, g, H)
            if st != OK:
                break
            sx = xn[0] - x[0]
            sy = xn[1] - x[1]
            sz = xn[2] - x[2]
            s2 = sx * sx + sy * sy + sz * sz
            u = 0.0
            if s2 > 0.0:
                u = ((q[0] - x[0]) * sx + (q[1] - x[1]) * sy + (q[2] - x[2]) * sz) / s2
                u = min(1.0, max(0.0, u))
            cx = x[0] + u * sx - q[0]
            cy = x[1] + u * sy - q[1]
            cz = x[2] + u * sz - q[2]
            dist = math.sqrt(cx * cx + cy * cy + cz * cz)
            if dist < miss[d]:
                miss[d] = dist
                tbest[d] = (k + u) * h
            x[:] = xn
            v[:] = vn
    return miss, tbest


@njit(cache=True, nogil=True)
def _normal_cross(exps, coefs, x, v, g, out):
    # out = n(x) x v, the in-surface unit normal to v
    phi_grad(exps, coefs, x, g)
    s = math.sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
    out[0] = (g[1] * v[2] - g[2] * v[1]) / s
    out[1] = (g[2] * v[0] - g[0] * v[2]) / s
    out[2] = (g[0] * v[1] - g[1] * v[0]) / s


@njit(cache=True, nogil=True)
def short_geodesics(exps, coefs, P, Q, max_step, tol, max_iter):
    """Solve the two-point problem for many nearby pairs (P[i], Q[i]).

    Newton on (initial angle, length) seeded with the projected chord. The
    angle derivative of the endpoint is the Jacobi field J(T) times the
    in-surface normal, so each iteration costs a single shot.

    Returns (length, midpoint, start direction, residual, status) per pair.
    """
    m = P.shape[0]
    L = np.zeros(m)
    M = np.empty((m, 3))
    D = np.zeros((m, 3))
    R = np.zeros(m)
    S = np.zeros(m, dtype=np.int64)
    g = np.empty(3)
    H = np.empty((3, 3))
    buf = np.empty((8, 3))
    x = np.empty(3)
    v = np.empty(3)
    xn = np.empty(3)
    vn = np.empty(3)
    e2 = np.empty(3)
    w = np.empty(3)
    v0 = np.empty(3)
    for i in range(m):
        p = P[i]
        q = Q[i]
        for a in range(3):
            v0[a] = q[a] - p[a]
        T = math.sqrt(v0[0] * v0[0] + v0[1] * v0[1] + v0[2] * v0[2])
        if T == 0.0:
            L[i] = 0.0
            M[i] = p
            S[i] = OK
            continue
        _tangent_unit(exps, coefs, p, v0, g)
        _normal_cross(exps, coefs, p, v0, g, e2)
        theta = 0.0
        status = NONCONVERGENT
        res = np.inf
        for it in range(max_iter):
            c = math.cos(theta)
            s = math.sin(theta)
            for a in range(3):
                v[a] = c * v0[a] + s * e2[a]
                x[a] = p[a]
            n = max(2, 2 * int(math.ceil(0.5 * T / max_step)))
            h = T / n
            j = 0.0
            jp = 1.0
            bad = False
            for k in range(n):
                j, jp, st, _ = rk4_step(exps, coefs, x, v, j, jp, h, xn, vn, buf, g, H)
                if st != OK:
                    bad = True
                    break
                x[:] = xn
                v[:] = vn
                if k + 1 == n // 2:
                    M[i] = x
            if bad:
                status = st
                break
            rx = x[0] - q[0]
            ry = x[1] - q[1]
            rz = x[2] - q[2]
            res = math.sqrt(rx * rx + ry * ry + rz * rz)
            if res <= tol:
                status = OK
                break
            _normal_cross(exps, coefs, x, v, g, w)
            dT = -(rx * v[0] + ry * v[1] + rz * v[2])
            dth = 0.0
            if abs(j) > 1e-12:
                dth = -(rx * w[0] + ry * w[1] + rz * w[2]) / j
            dth = max(-0.5, min(0.5, dth))
            T += dT
            if T <= 0.0:
                T = 0.5 * (T - dT)
            theta += dth
        L[i] = T
        R[i] = res
        S[i] = status
        c = math.cos(theta)
        s = math.sin(theta)
        for a in range(3):
            D[i, a] = c * v0[a] + s * e2[a]
    return L, M, D, R, S


@njit(cache=True, nogil=True)
def first_conjugate(exps, coefs, x0, v0, tmax, h):
    """First t in (0, tmax] where the Jacobi field J(0)=0, J'(0)=1 vanishes.

    Returns (t, status); t is inf when no zero occurs before tmax.
    """
    x = x0.copy()
    v = v0.copy()
    xn = np.empty(3)
    vn = np.empty(3)
    xs = np.empty(3)
    vs = np.empty(3)
    buf = np.empty((8, 3))
    g = np.empty(3)
    H = np.empty((3, 3))
    j = 0.0
    jp = 1.0
    t = 0.0
    n = int(math.ceil(tmax / h))
    h = tmax / n
    for _ in range(n):
        jn, jpn, st, _ = rk4_step(exps, coefs, x, v, j, jp, h, xn, vn, buf, g, H)
        if st != OK:
            return np.inf, st
        if t > 0.0 and j > 0.0 and jn <= 0.0:
            lo = 0.0
            hi = h
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                jm, _, _, _ = rk4_step(exps, coefs, x, v, j, jp, mid, xs, vs, buf, g, H)
                if jm > 0.0:
                    lo = mid
                else:
                    hi = mid
            return t + 0.5 * (lo + hi), OK
        x[:] = xn
        v[:] = vn
        j = jn
        jp = jpn
        t += h
    return np.inf, OK

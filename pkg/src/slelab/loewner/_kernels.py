"""Compiled inner loops for the discretised Loewner flow.

Conventions
-----------
Step ``k`` holds the driving value ``U_k`` constant for a capacity
increment ``dt_k``; its elementary map is the exact vertical-slit map

    phi_k(z) = U_k + sqrt((z - U_k)**2 + 2 a dt_k).

Boundary points are tracked relative to the driving value,
``w = g(x) - U``.  Gaps between neighbouring points on the same side are
updated multiplicatively so that they never suffer cancellation.

The Monte Carlo kernels use a scale-adaptive step
``dt_k = h_k * d_k**2`` where ``d_k`` is the distance from the driving
value to the nearest tracked point and ``h_k = clip(h / rho_k, h, hmax)``
with ``rho_k`` the relative spread of the tracked points.  The step is
therefore uniform in the natural logarithmic clock of the problem and the
flow can be followed to the ``t -> infinity`` limit at bounded cost.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_SWALLOWED = 1
STATUS_MAXSTEPS = 2
STATUS_HIT = 3


@njit(cache=True)
def slit_forward(w, c):
    """``sqrt(w**2 + c)`` on the branch mapping H to H (sign-preserving on R)."""
    s = np.sqrt(w * w + c)
    if s.imag < 0.0 or (s.imag == 0.0 and s.real * w.real < 0.0):
        s = -s
    return s


@njit(cache=True)
def slit_inverse(w, c):
    """Inverse of :func:`slit_forward`, landing in the closed upper half-plane."""
    s = np.sqrt(w * w - c)
    if s.imag < 0.0 or (s.imag == 0.0 and s.real * w.real < 0.0):
        s = -s
    return s


@njit(cache=True)
def apply_chain(z, U, dt, a):
    """Push complex points through all elementary maps; returns g(z).

    The offset ``g(z) - z`` is accumulated separately, using
    ``sqrt(w^2 + c) - w = c / (sqrt(w^2 + c) + w)``, so that small capacity
    increments are not lost against a large ``|z|``.
    """
    n = z.shape[0]
    off = np.zeros(n, dtype=np.complex128)
    for k in range(U.shape[0]):
        c = 2.0 * a * dt[k]
        u = U[k]
        for i in range(n):
            w = z[i] + off[i] - u
            s = slit_forward(w, c)
            off[i] += c / (s + w)
    return z + off


@njit(cache=True)
def apply_chain_real(x, U, dt, a):
    """g(x) and g'(x) for real boundary points (``x`` not on the hull)."""
    n = x.shape[0]
    g = x.copy()
    d = np.ones(n)
    for k in range(U.shape[0]):
        c = 2.0 * a * dt[k]
        u = U[k]
        for i in range(n):
            w = g[i] - u
            if w == 0.0:
                d[i] = 0.0
                continue
            W = np.sqrt(w * w + c)
            if w < 0.0:
                W = -W
            d[i] *= w / W
            g[i] = u + W
    return g, d


@njit(cache=True)
def tip(k, U, dt, a):
    """Tip of the discrete hull after ``k`` steps (``k = 0`` gives U_0)."""
    if k == 0:
        return complex(U[0], 0.0)
    c = 2.0 * a * dt[k - 1]
    z = 1j * np.sqrt(c)
    for j in range(k - 2, -1, -1):
        z = z + (U[j + 1] - U[j])
        z = slit_inverse(z, 2.0 * a * dt[j])
    return z + U[0]


@njit(cache=True)
def tips(idx, U, dt, a):
    out = np.empty(idx.shape[0], dtype=np.complex128)
    for i in range(idx.shape[0]):
        out[i] = tip(idx[i], U, dt, a)
    return out


@njit(cache=True)
def seg_dist(p, q, w):
    """Distance from ``w`` to the segment [p, q] (complex)."""
    d = q - p
    L = d.real * d.real + d.imag * d.imag
    if L == 0.0:
        return abs(w - p)
    t = ((w - p).real * d.real + (w - p).imag * d.imag) / L
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return abs(w - (p + t * d))


@njit(cache=True)
def polyline_dist(pts, w):
    best = np.inf
    if pts.shape[0] == 1:
        return abs(pts[0] - w)
    for i in range(pts.shape[0] - 1):
        d = seg_dist(pts[i], pts[i + 1], w)
        if d < best:
            best = d
    return best


@njit(cache=True)
def trace_min_dist(U, dt, a, target, k0, k1, stride, cap):
    """Minimum distance from ``target`` to the trace polyline over tips k0..k1.

    Tips are first evaluated every ``stride`` steps; windows around coarse
    tips that could hide a closer point are then refined to full
    resolution.  Distances above ``cap`` are not resolved (``cap`` is
    returned as a lower bound).
    """
    if k1 < k0:
        return cap
    nc = (k1 - k0) // stride + 1
    cidx = np.empty(nc + 1, dtype=np.int64)
    for i in range(nc):
        cidx[i] = k0 + i * stride
    m = nc
    if cidx[nc - 1] != k1:
        cidx[nc] = k1
        m = nc + 1
    cidx = cidx[:m]
    ct = tips(cidx, U, dt, a)
    cd = np.empty(m)
    for i in range(m):
        cd[i] = abs(ct[i] - target)
    best = cap
    for i in range(m - 1):
        d = seg_dist(ct[i], ct[i + 1], target)
        if d < best:
            best = d
    if stride == 1:
        return best
    # refine: a window can only contain a closer point if its coarse chord is long
    for i in range(m - 1):
        chord = abs(ct[i + 1] - ct[i])
        lo_d = min(cd[i], cd[i + 1]) - 2.0 * chord
        if lo_d >= best:
            continue
        ka = cidx[i]
        kb = cidx[i + 1]
        prev = ct[i]
        for k in range(ka + 1, kb + 1):
            z = ct[i + 1] if k == kb else tip(k, U, dt, a)
            d = seg_dist(prev, z, target)
            if d < best:
                best = d
            prev = z
    return best


@njit(cache=True)
def flow_points(p, a, h, hmax, tol, max_steps, swallow_rel, rng):
    """Adaptive flow of real boundary points to the t -> infinity limit.

    Parameters
    ----------
    p : float64[:]
        Sorted, nonzero starting positions relative to the launch point 0.
    Returns
    -------
    w : final positions relative to the driving value
    gp : final derivatives g'(p)
    gaps : gaps[i] = w[i+1] - w[i] for same-side neighbours (nan otherwise)
    status, nsteps
    """
    n = p.shape[0]
    w = p.copy()
    gp = np.ones(n)
    gaps = np.empty(max(n - 1, 1))
    gaps[:] = np.nan
    for i in range(n - 1):
        if p[i] * p[i + 1] > 0.0:
            gaps[i] = p[i + 1] - p[i]
    W = np.empty(n)
    status = STATUS_MAXSTEPS
    k = 0
    while k < max_steps:
        d = np.inf
        big = 0.0
        for i in range(n):
            aw = abs(w[i])
            if aw < d:
                d = aw
            if aw > big:
                big = aw
        if d < swallow_rel * big:
            status = STATUS_SWALLOWED
            break
        # relative spread per side
        rho = 0.0
        sr = 0.0
        sl = 0.0
        nr = np.inf
        nl = np.inf
        for i in range(n):
            if w[i] > 0.0:
                if w[i] < nr:
                    nr = w[i]
            else:
                if -w[i] < nl:
                    nl = -w[i]
        for i in range(n - 1):
            if not np.isnan(gaps[i]):
                if w[i] > 0.0:
                    sr += gaps[i]
                else:
                    sl += gaps[i]
        if sr > 0.0:
            rho = sr / nr
        if sl > 0.0 and sl / nl > rho:
            rho = sl / nl
        if rho < tol:
            status = STATUS_OK
            break
        hk = h / rho
        if hk < h:
            hk = h
        if hk > hmax:
            hk = hmax
        dtk = hk * d * d
        c = 2.0 * a * dtk
        for i in range(n):
            s = np.sqrt(w[i] * w[i] + c)
            if w[i] < 0.0:
                s = -s
            W[i] = s
            gp[i] *= w[i] / s
        for i in range(n - 1):
            if not np.isnan(gaps[i]):
                gaps[i] *= (abs(w[i]) + abs(w[i + 1])) / (abs(W[i]) + abs(W[i + 1]))
        du = np.sqrt(dtk) * rng.standard_normal()
        for i in range(n):
            w[i] = W[i] - du
        k += 1
    return w, gp, gaps, status, k


@njit(cache=True)
def flow_pair_history(x, a, h, hmax, tol, qtol, max_steps, swallow_rel, rng):
    """Flow of the pair (x, 1) with the driving history recorded.

    Also follows the image ``r`` of the launch point seen from the right
    (the right side of the curve's base), used for a distance bound at x.

    Returns
    -------
    U, dt : driving values and capacity increments per step
    ups : Upsilon_k = Y_k / ((1 - x) g'_k(1)) at step starts (length m+1)
    bx : lower bound for dist(x, gamma_{t_k}) (length m+1)
    phi_val : Phi_infinity (0 if x was swallowed)
    status, m
    The loop stops once Y/Z < tol and (1-x) g'(1) / X < qtol.
    """
    cap = 1024
    U = np.empty(cap)
    dts = np.empty(cap)
    ups = np.empty(cap + 1)
    bx = np.empty(cap + 1)
    Z = x
    X = 1.0
    Y = 1.0 - x
    gx = 1.0
    g1 = 1.0
    P = 1.0
    r = 0.0
    u = 0.0
    alive_x = True
    status = STATUS_MAXSTEPS
    k = 0
    ups[0] = 1.0
    bx[0] = min(x, 1.0 - x)
    while k < max_steps:
        if alive_x:
            if Z < swallow_rel * X:
                alive_x = False
                P = 0.0
        q = (1.0 - x) * g1 / X
        if alive_x:
            rhox = Y / Z
            d = Z
        else:
            rhox = 0.0
            d = X
            if X < swallow_rel:
                status = STATUS_SWALLOWED
                break
        if rhox < tol and q < qtol:
            status = STATUS_OK
            break
        rho = rhox if rhox > q else q
        hk = h / rho if rho > 0.0 else hmax
        if hk < h:
            hk = h
        if hk > hmax:
            hk = hmax
        dtk = hk * d * d
        c = 2.0 * a * dtk
        if k >= cap:
            U = np.concatenate((U, np.empty(cap)))
            dts = np.concatenate((dts, np.empty(cap)))
            ups = np.concatenate((ups, np.empty(cap)))
            bx = np.concatenate((bx, np.empty(cap)))
            cap *= 2
        U[k] = u
        dts[k] = dtk
        Wx = np.sqrt(X * X + c)
        g1 *= X / Wx
        if alive_x:
            Wz = np.sqrt(Z * Z + c)
            s = (Wz + Wx) / (Z + X)
            P *= Z * X * s * s / (Wz * Wx)
            gx *= Z / Wz
            Y /= s
        Wr = np.sqrt(r * r + c)
        du = np.sqrt(dtk) * rng.standard_normal()
        if alive_x:
            Z = Wz - du
        X = Wx - du
        r = Wr - du
        u += du
        k += 1
        if alive_x:
            ups[k] = Y / ((1.0 - x) * g1)
            # Koebe 1/4 in the plane slit along (-inf, g(0+)] and [g(1), inf)
            bx[k] = (Z - r) * (X - Z) / ((X - r) * gx)
        else:
            ups[k] = X / ((1.0 - x) * g1)
            bx[k] = 0.0
    return U[:k], dts[:k], ups[:k + 1], bx[:k + 1], P, status, k


@njit(cache=True)
def tail_path(x, a, h, hmax, tol, qtol, max_steps, swallow_rel, eps_max, stride, rng):
    """Run one path and return (Phi, dist(1, gamma) / (1 - x) capped at eps_max, status, m)."""
    U, dts, ups, bx, P, status, m = flow_pair_history(x, a, h, hmax, tol, qtol, max_steps,
                                                     swallow_rel, rng)
    # tips with Upsilon below eps_max are the only ones that can be that close to 1
    k0 = -1
    for k in range(m + 1):
        if ups[k] < eps_max:
            k0 = k
            break
    if k0 < 0:
        return P, eps_max, status, m
    if k0 > 0:
        k0 -= 1
    d = trace_min_dist(U, dts, a, complex(1.0, 0.0), k0, m, stride, eps_max * (1.0 - x))
    return P, d / (1.0 - x), status, m


@njit(cache=True)
def delta_path(x, a, h, hmax, tol, qtol, max_steps, swallow_rel, stride, rng):
    """Phi and the distance from gamma to the points x and 1."""
    U, dts, ups, bx, P, status, m = flow_pair_history(x, a, h, hmax, tol, qtol, max_steps,
                                                     swallow_rel, rng)
    d1 = trace_min_dist(U, dts, a, complex(1.0, 0.0), 0, m, stride, 1.0)
    dx = trace_min_dist(U, dts, a, complex(x, 0.0), 0, m, stride, x)
    return P, min(d1, dx), status, m

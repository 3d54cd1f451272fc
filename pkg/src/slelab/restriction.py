"""Restriction experiments for a vertical-slit hull.

The hull ``K = [p, p + i h]`` sits away from the starting point 0.  Along a
discretised SLE curve the image ``g_t(K)`` is tracked through a fixed set of
points on ``K``; at every step it is mapped out again with a geodesic
zipper, which gives the hydrodynamically normalised map
``Phi_t : H \\ g_t(K) -> H`` at the driving point together with its
derivative and Schwarzian.  From these

    m_t = -(a/6) int_0^t S Phi_s(U_s) ds,
    M_t = exp(c/2 * m_t) * Phi_t'(U_t)^b * 1{curve has not hit K by t}.

At central charge zero the probability of avoiding ``K`` altogether is
``Phi_K'(0)^b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .numerics.estimate import Estimate
from .numerics.params import SleParams
from .numerics.rng import RandomStream
from .numerics.special import ConvergenceError
from .loewner._kernels import STATUS_HIT, STATUS_MAXSTEPS, STATUS_OK, polyline_dist, slit_forward
from ._parallel import run_paths

__all__ = [
    "HullSpec",
    "HullMap",
    "hull_map",
    "zipper_map",
    "RestrictionSample",
    "simulate_restriction",
    "avoidance_probability",
    "loop_measure_integral",
    "restriction_martingale_check",
    "MartingaleReport",
]

INCONCLUSIVE_CAP = 5e-3


@dataclass(frozen=True)
class HullSpec:
    """Vertical slit ``[p, p + i h]`` with ``p != 0`` and ``h > 0``."""

    p: float
    h: float

    def __post_init__(self):
        if not math.isfinite(self.p) or self.p == 0:
            raise ValueError("slit base p must be finite and nonzero")
        if not (math.isfinite(self.h) and self.h >= 0):
            raise ValueError("slit height h must be finite and nonnegative")

    @property
    def distance(self) -> float:
        """``dist(0, K)``."""
        return abs(self.p)

    def loewner_encoding(self, params: SleParams):
        """Constant driving value and time that grow the slit in the ``a``-normalised chain."""
        return self.p, self.h ** 2 / (2 * params.a)

    def points(self, J: int) -> np.ndarray:
        """Base plus ``J`` points on the slit, clustered toward the tip."""
        y = self.h * np.sin(0.5 * np.pi * np.arange(J + 1) / J)
        return self.p + 1j * y


@dataclass(frozen=True)
class HullMap:
    """``Phi_K(z) = z + O(1)`` at infinity with ``Phi_K(0) = 0``."""

    hull: HullSpec

    def __call__(self, z):
        p, h = self.hull.p, self.hull.h
        z = np.asarray(z)
        w = z - p
        sg = math.copysign(1.0, p)
        if np.isrealobj(z):
            r = np.sign(w) * np.sqrt(w * w + h * h)
        else:
            r = np.sqrt(w * w + h * h + 0j)
            r = np.where(r.imag < 0, -r, r)
            r = np.where((r.imag == 0) & (r.real * w.real < 0), -r, r)
        return r + sg * math.hypot(p, h)

    def derivative(self, x):
        p, h = self.hull.p, self.hull.h
        w = np.asarray(x, dtype=float) - p
        return np.abs(w) / np.sqrt(w * w + h * h)

    def schwarzian(self, x):
        p, h = self.hull.p, self.hull.h
        w = np.asarray(x, dtype=float) - p
        R2 = w * w + h * h
        return -3 * h * h / R2 ** 2 - 1.5 * h ** 4 / (R2 ** 2 * w * w)

    @property
    def derivative_at_zero(self) -> float:
        return abs(self.hull.p) / math.hypot(self.hull.p, self.hull.h)


def hull_map(hull: HullSpec) -> HullMap:
    return HullMap(hull)


# ------------------------------------------------------------------- zipper

@njit(cache=True)
def _zip(pts, u):
    """Geodesic zipper for the curve ``pts[0] (real), pts[1], ...``.

    Each piece is replaced by the arc of a circle orthogonal to R that joins
    the current base to the next point, and mapped out with a Moebius map
    followed by a vertical-slit map.  Returns ``(Phi'(u), S Phi(u))`` for the
    hydrodynamically normalised map, ``u`` real and off the curve.
    """
    n = pts.shape[0]
    z = pts.copy()
    base = z[0].real
    for k in range(n):
        z[k] -= base
    x = u - base
    dF = 1.0
    S = 0.0
    at_inf = True
    alpha = 1.0
    A = 0.0
    c1 = 0.0
    for j in range(1, n):
        zeta = z[j]
        if zeta.imag <= 0.0:
            zeta = complex(zeta.real, 1e-300)
        r2 = zeta.real * zeta.real + zeta.imag * zeta.imag
        vertical = abs(zeta.real) <= 1e-14 * math.sqrt(r2)
        if vertical:
            d2 = r2
            cc = 0.0
        else:
            cc = r2 / zeta.real
            d = r2 / zeta.imag
            d2 = d * d
        # remaining curve points
        for k in range(j + 1, n):
            w = z[k]
            if not vertical:
                w = cc * w / (cc - w)
            z[k] = slit_forward(w, d2)
        z[j] = 0.0
        # the evaluation point
        if vertical:
            mx = x
            mp = 1.0
        else:
            mx = cc * x / (cc - x)
            mp = cc * cc / ((cc - x) * (cc - x))
        R2 = mx * mx + d2
        R = math.sqrt(R2)
        if mx < 0.0:
            R = -R
        S += (-3.0 * d2 / (R2 * R2) - 1.5 * d2 * d2 / (R2 * R2 * mx * mx)) * mp * mp * dF * dF
        dF *= mx / R * mp
        x = R
        # the point at infinity
        if at_inf:
            if not vertical:
                at_inf = False
                Rm = math.sqrt(cc * cc + d2)
                if cc > 0.0:
                    Rm = -Rm
                c1 = (-cc / Rm) * (-cc * cc / alpha)
                A = Rm
        else:
            if vertical:
                mA = A
                mpA = 1.0
            else:
                mA = cc * A / (cc - A)
                mpA = cc * cc / ((cc - A) * (cc - A))
            RA = math.sqrt(mA * mA + d2)
            if mA < 0.0:
                RA = -RA
            c1 *= mA / RA * mpA
            A = RA
    if at_inf:
        return dF / alpha, S
    return -c1 * dF / ((x - A) * (x - A)), S


def zipper_map(points, u: float = 0.0):
    """``(Phi'(u), S Phi(u))`` for the curve through ``points`` (first point real).

    ``Phi`` maps the complement of the polygonal-arc approximation of the
    curve onto H with ``Phi(z) = z + O(1)`` at infinity.
    """
    pts = np.asarray(points, dtype=np.complex128)
    if pts.ndim != 1 or pts.size < 2:
        raise ValueError("need a base point and at least one curve point")
    if pts[0].imag != 0:
        raise ValueError("the first point must be real")
    return _zip(pts, float(u))


# ------------------------------------------------------------ path kernel

@njit(cache=True)
def _restriction_path(pts0, a, t_max, h, hmax, hit_tol, far_tol, max_steps, use_zip, rng):
    """One curve against the hull described by ``pts0`` (base first).

    Returns (status, phi_prime, m, time, steps, n_positive_S, m_monotone).
    ``t_max = inf`` runs until the hull is hit or has collapsed (relative
    size below ``far_tol``).
    """
    n = pts0.shape[0]
    w = pts0.copy()
    t = 0.0
    m = 0.0
    npos = 0
    mono = True
    dphi = 1.0
    S_prev = 0.0
    if use_zip:
        dphi, S_prev = _zip(w, 0.0)
        if S_prev > 0.0:
            npos += 1
    status = STATUS_MAXSTEPS
    k = 0
    while k < max_steps:
        if t >= t_max:
            status = STATUS_OK
            break
        d = polyline_dist(w, 0.0 + 0.0j)
        diam = 0.0
        for i in range(1, n):
            e = abs(w[i] - w[0])
            if e > diam:
                diam = e
        if d < hit_tol * diam:
            status = STATUS_HIT
            break
        rho = diam / d
        if rho < far_tol and not math.isfinite(t_max):
            status = STATUS_OK
            break
        hk = h / rho
        if hk < h:
            hk = h
        if hk > hmax:
            hk = hmax
        dtk = hk * d * d
        if t + dtk > t_max:
            dtk = t_max - t
        c = 2.0 * a * dtk
        du = math.sqrt(dtk) * rng.standard_normal()
        for i in range(n):
            w[i] = slit_forward(w[i], c) - du
        w[0] = complex(w[0].real, 0.0)
        t += dtk
        k += 1
        if use_zip:
            dphi, S = _zip(w, 0.0)
            if S > 0.0:
                npos += 1
            inc = -(a / 6.0) * 0.5 * (S_prev + S) * dtk
            if inc < 0.0:
                mono = False
            m += inc
            S_prev = S
    return status, dphi, m, t, k, npos, mono


@dataclass(frozen=True)
class RestrictionSample:
    """Per-curve outcome arrays."""

    status: np.ndarray
    phi_prime: np.ndarray
    loop: np.ndarray
    time: np.ndarray
    steps: np.ndarray
    positive_s: np.ndarray
    monotone: np.ndarray

    @property
    def hit(self) -> np.ndarray:
        return self.status == STATUS_HIT

    @property
    def inconclusive(self) -> np.ndarray:
        return self.status == STATUS_MAXSTEPS


def _restr_work(seed, stream_id, start, stop, pts, a, t_max, h, hmax, hit_tol, far_tol, max_steps, use_zip):
    out = np.empty((stop - start, 7))
    for r, i in enumerate(range(start, stop)):
        rng = RandomStream(seed, stream_id).generator(i)
        out[r] = _restriction_path(pts, a, t_max, h, hmax, hit_tol, far_tol, max_steps, use_zip, rng)
    return out


def simulate_restriction(params: SleParams, hull: HullSpec, n: int, *, t: float = math.inf, dt: float = 1e-4,
                         hmax: float = 1e-2, J: int = 32, hit_tol: float = 1e-2, far_tol: float = 1e-2,
                         max_steps: int = 2_000_000, zipper: bool = True, stream: RandomStream | None = None,
                         workers=None) -> RestrictionSample:
    """Run ``n`` curves against ``hull`` up to time ``t`` (or to the end).

    ``dt`` is the relative step: a step adds capacity time
    ``h_k dist(U, g(K))^2`` with ``h_k`` between ``dt`` and ``hmax``.
    A curve counts as hitting ``K`` once the image hull comes within
    ``hit_tol`` times its own size of the driving point.
    """
    if not (t >= 0):
        raise ValueError("t must be nonnegative")
    if J < 1:
        raise ValueError("J must be positive")
    stream = stream or RandomStream(0)
    pts = hull.points(J)
    res = run_paths(_restr_work, n, stream, workers, pts=pts, a=params.a, t_max=float(t), h=float(dt),
                    hmax=float(hmax), hit_tol=float(hit_tol), far_tol=float(far_tol), max_steps=int(max_steps),
                    use_zip=bool(zipper))
    return RestrictionSample(res[:, 0].astype(int), res[:, 1], res[:, 2], res[:, 3], res[:, 4].astype(int),
                             res[:, 5].astype(int), res[:, 6].astype(bool))


def _check_inconclusive(sample: RestrictionSample):
    bad = int(sample.inconclusive.sum())
    if bad > INCONCLUSIVE_CAP * sample.status.size:
        raise ConvergenceError(f"{bad} of {sample.status.size} curves were inconclusive")
    return bad


def avoidance_probability(params: SleParams, hull: HullSpec, n: int, dt: float = 1e-4,
                          stream: RandomStream | None = None, **kw) -> Estimate:
    """``P{gamma avoids K}`` at central charge zero, compared with ``Phi_K'(0)^b``."""
    if abs(params.central_charge) > 1e-12:
        raise ValueError("avoidance probability requires central charge 0 (kappa = 8/3)")
    stream = stream or RandomStream(0)
    s = simulate_restriction(params, hull, n, dt=dt, zipper=False, stream=stream, **kw)
    bad = _check_inconclusive(s)
    keep = ~s.inconclusive
    vals = (~s.hit[keep]).astype(float)
    target = hull_map(hull).derivative_at_zero ** params.b
    cfg = {"kappa": params.kappa, "p": hull.p, "h": hull.h, "n": int(n), "dt": dt, "inconclusive": bad,
           "target": target}
    return Estimate.from_samples(vals, seed=stream.seed, config=cfg)


def loop_measure_integral(params: SleParams, hull: HullSpec, chain, J: int = 32) -> float:
    """``-(a/6) int_0^T S Phi_s(U_s) ds`` along a given chain.

    ``chain`` is a :class:`~slelab.loewner.LoewnerChain` that must not have
    hit the hull; the image hull is pushed forward step by step and
    re-zipped at every grid time.
    """
    if hull.h == 0 or chain.steps == 0:
        return 0.0
    return float(_loop_along(hull.points(J), chain.U, chain.dt, chain.U_end, chain.params.a))


@njit(cache=True)
def _loop_along(pts, U, dt, U_end, a):
    w = pts - U[0]
    _, S0 = _zip(w, 0.0)
    m = 0.0
    M = U.shape[0]
    for k in range(M):
        c = 2.0 * a * dt[k]
        nxt = U[k + 1] if k + 1 < M else U_end
        du = nxt - U[k]
        for i in range(w.shape[0]):
            w[i] = slit_forward(w[i], c) - du
        w[0] = complex(w[0].real, 0.0)
        _, S1 = _zip(w, 0.0)
        m += -(a / 6.0) * 0.5 * (S0 + S1) * dt[k]
        S0 = S1
    return m


@dataclass(frozen=True)
class MartingaleReport:
    kappa: float
    hull: HullSpec
    t: float
    M0: float
    estimate: Estimate
    invalid_fraction: float
    hit_fraction: float
    positive_s_fraction: float
    monotone: bool
    weight_ok: bool
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return abs(self.estimate.mean - self.M0) <= 3 * self.estimate.stderr

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "hull": {"p": self.hull.p, "h": self.hull.h}, "t": self.t, "M0": self.M0,
                "mean": self.estimate.mean, "stderr": self.estimate.stderr, "n": self.estimate.n_samples,
                "invalid_fraction": self.invalid_fraction, "hit_fraction": self.hit_fraction,
                "positive_s_fraction": self.positive_s_fraction, "monotone": self.monotone,
                "weight_ok": self.weight_ok, "pass": self.passed}


def restriction_martingale_check(params: SleParams, hull: HullSpec, t: float, n: int,
                                 stream: RandomStream | None = None, *, dt: float = 1e-4, J: int = 32,
                                 **kw) -> MartingaleReport:
    """Monte Carlo ``E[M_t]`` against ``M_0 = Phi_K'(0)^b``."""
    params.require_simple()
    stream = stream or RandomStream(0)
    hm = hull_map(hull)
    M0 = hm.derivative_at_zero ** params.b
    cfg = {"kappa": params.kappa, "p": hull.p, "h": hull.h, "t": t, "n": int(n), "dt": dt, "J": J}
    if t == 0 or hull.h == 0:
        est = Estimate(M0, 0.0, max(int(n), 2), stream.seed, cfg, 0.0)
        return MartingaleReport(params.kappa, hull, t, M0, est, 0.0, 0.0, 0.0, True, True)
    s = simulate_restriction(params, hull, n, t=t, dt=dt, J=J, zipper=True, stream=stream, **kw)
    bad = _check_inconclusive(s)
    keep = ~s.inconclusive
    cc = params.central_charge
    weight = np.exp(0.5 * cc * s.loop)
    vals = np.where(s.hit, 0.0, weight * np.clip(s.phi_prime, 0.0, None) ** params.b)
    live = keep & ~s.hit
    if cc < 0:
        weight_ok = bool(np.all(weight[live] <= 1 + 1e-12))
    elif cc > 0:
        weight_ok = bool(np.all(weight[live] >= 1 - 1e-12))
    else:
        weight_ok = True
    est = Estimate.from_samples(vals[keep], seed=stream.seed, config=cfg)
    steps = max(int(s.steps[keep].sum()), 1)
    return MartingaleReport(params.kappa, hull, t, M0, est, bad / s.status.size, float(s.hit.mean()),
                            float(s.positive_s[keep].sum()) / steps, bool(s.monotone[keep].all()), weight_ok,
                            vals)

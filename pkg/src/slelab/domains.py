"""Reference domains, boundary Poisson kernels and excursion measures.

Kernels are normalised so that ``H_H(x, y) = (y - x)**-2`` and transform
covariantly, ``H_D(x, y) = f'(x) f'(y) H_H(f(x), f(y))`` for a conformal
map ``f: D -> H``.  The excursion measure between two boundary arcs is the
double integral of ``H_D`` over them (with this normalisation the half-plane
value for the arcs ``(-inf, 0]`` and ``[x, 1]`` is ``log(1/x)``).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .numerics.params import SleParams
from .numerics.quadrature import QuadratureSpec, QuadratureError, adaptive_double_integral
from .numerics.special import phi, phi_derivs
from .loewner.chain import LoewnerChain, SwallowedError, evaluate_map, map_derivative, trace_points, dist_to_point

__all__ = [
    "HalfPlane",
    "VerticalSlit",
    "LoewnerComplement",
    "IntervalPair",
    "kernel",
    "q_prob",
    "excursion_measure",
    "halfplane_excursion",
    "two_pair_psi",
    "kernel_partials",
    "derivative_bound_report",
    "report_to_csv",
]

TRUNCATION_R = 1e6


class HalfPlane:
    """The upper half-plane itself."""

    def boundary_map(self, u):
        """(f, f', f'', f''') of the hydrodynamic map at real ``u``."""
        u = np.asarray(u, dtype=float)
        one = np.ones_like(u)
        return u, one, 0 * u, 0 * u

    def boundary_distance(self, u) -> float:
        return math.inf

    def __repr__(self):
        return "HalfPlane()"


@dataclass(frozen=True)
class VerticalSlit:
    """``H`` minus the segment ``[p, p + i h]``.

    The hydrodynamic map is ``f(z) = p + sqrt((z - p)**2 + h**2)``.
    """

    p: float
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("slit height must be positive")

    def boundary_map(self, u):
        u = np.asarray(u, dtype=float)
        v = u - self.p
        if np.any(v == 0):
            raise ValueError("point at the base of the slit")
        h2 = self.h * self.h
        R = np.sqrt(v * v + h2)
        s = np.sign(v)
        f = self.p + s * R
        f1 = np.abs(v) / R
        f2 = s * h2 / R ** 3
        f3 = -3.0 * np.abs(v) * h2 / R ** 5
        return f, f1, f2, f3

    def boundary_distance(self, u) -> float:
        return float(np.min(np.abs(np.atleast_1d(u) - self.p)))


@dataclass
class LoewnerComplement:
    """``H`` minus the hull of a Loewner chain.

    Points are classified by the sign of ``g_T(x) - U_T``; kernels between
    points on opposite sides of the curve vanish.
    """

    chain: LoewnerChain
    side: int | None = None
    _trace: object = field(default=None, repr=False)

    def images(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        g = evaluate_map(self.chain, u)
        d = map_derivative(self.chain, u)
        return g, d

    def sides(self, u):
        g, _ = self.images(u)
        return np.sign(g - self.chain.U_end)

    def boundary_distance(self, u) -> float:
        if self._trace is None:
            self._trace = trace_points(self.chain)
        return min(dist_to_point(self._trace, complex(float(v), 0.0)) for v in np.atleast_1d(u))


@dataclass(frozen=True)
class IntervalPair:
    """Two boundary arcs ``[x1, y1]`` and ``[x2, y2]``; ``x1`` may be ``-inf``
    and ``y2`` may be ``+inf``."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.y1 <= self.x2 <= self.y2):
            raise ValueError("need x1 <= y1 <= x2 <= y2")
        if self.y1 == self.x2 and self.x1 < self.y1 and self.x2 < self.y2:
            raise ValueError("arcs touch: excursion measure diverges")
        if math.isinf(self.x1) and math.isinf(self.y2):
            raise ValueError("arcs meet at infinity: excursion measure diverges")


def kernel(domain, x: float, y: float) -> float:
    """Boundary Poisson kernel ``H_D(x, y)``."""
    x, y = float(x), float(y)
    if x == y:
        raise ValueError("kernel needs distinct points")
    if isinstance(domain, LoewnerComplement):
        try:
            g, d = domain.images([x, y])
        except SwallowedError:
            raise
        s = np.sign(g - domain.chain.U_end)
        if s[0] != s[1]:
            return 0.0
        return float(d[0] * d[1] / (g[1] - g[0]) ** 2)
    f, f1, _, _ = domain.boundary_map(np.array([x, y]))
    return float(f1[0] * f1[1] / (f[1] - f[0]) ** 2)


def q_prob(domain, x: float, y: float) -> float:
    """``H_D(x, y) / H_H(x, y)``: probability that an excursion avoids the hull."""
    return kernel(domain, x, y) * (y - x) ** 2


def _kernel_fn(domain):
    if isinstance(domain, HalfPlane):
        return lambda r, s: 1.0 / (s - r) ** 2
    if isinstance(domain, VerticalSlit):
        p, h2 = domain.p, domain.h ** 2

        def f(r, s):
            vr, vs = r - p, s - p
            Rr, Rs = math.sqrt(vr * vr + h2), math.sqrt(vs * vs + h2)
            fr = math.copysign(Rr, vr)
            fs = math.copysign(Rs, vs)
            return (abs(vr) / Rr) * (abs(vs) / Rs) / (fs - fr) ** 2
        return f
    return lambda r, s: kernel(domain, r, s)


def _far_map(domain, u):
    """Hydrodynamic image of a boundary point, used for the truncation tail."""
    if isinstance(domain, LoewnerComplement):
        return float(evaluate_map(domain.chain, float(u)))
    return float(domain.boundary_map(np.array([u]))[0][0])


def excursion_measure(domain, pair: IntervalPair, spec: QuadratureSpec = QuadratureSpec(1e-11, 1e-10, 200),
                      R: float = TRUNCATION_R) -> float:
    """Excursion measure between the arcs of ``pair`` in ``domain``.

    Infinite arcs are truncated at ``|r| = R`` and the neglected part is
    added back from the kernel asymptotics ``H_D(r, s) ~ f'(s) / (f(s) - r)**2``
    as ``r -> -inf`` (and symmetrically), which integrates in closed form.
    """
    x1, y1, x2, y2 = pair.x1, pair.y1, pair.x2, pair.y2
    if x1 == y1 or x2 == y2:
        return 0.0
    tail = 0.0
    if math.isinf(x1):
        x1 = -R
        tail += math.log((_far_map(domain, y2) + R) / (_far_map(domain, x2) + R))
    if math.isinf(y2):
        y2 = R
        tail += math.log((R - _far_map(domain, x1)) / (R - _far_map(domain, y1)))
    f = _kernel_fn(domain)
    # integrate in logarithmic distance from the inner gap: smooth on long arcs
    g0 = y1
    g1 = x2

    def G(u, v):
        r = g0 - math.expm1(u)
        s = g1 + math.expm1(v)
        return f(r, s) * math.exp(u) * math.exp(v)

    ua = math.log1p(g0 - y1) if g0 > y1 else 0.0
    ub = math.log1p(g0 - x1)
    va = math.log1p(x2 - g1) if x2 > g1 else 0.0
    vb = math.log1p(y2 - g1)
    val = adaptive_double_integral(G, ((ua, ub), (va, vb)), spec)
    return val + tail


def halfplane_excursion(x1: float, y1: float, x2: float, y2: float) -> float:
    """Closed form ``log[(x2 - x1)(y2 - y1) / ((x2 - y1)(y2 - x1))]``."""
    return math.log((x2 - x1) * (y2 - y1) / ((x2 - y1) * (y2 - x1)))


def two_pair_psi(domain, pair: IntervalPair, params: SleParams, spec: QuadratureSpec | None = None) -> float:
    """Normalised two-pair partition function ``phi(exp(-excursion))``."""
    e = excursion_measure(domain, pair, spec) if spec is not None else excursion_measure(domain, pair)
    return float(phi(min(1.0, math.exp(-e)), params))


def _log_partials(f, f1, f2, f3):
    """Derivatives of log H for H = f1(x) f1(y) / (f(y) - f(x))^2."""
    fx, fy = f
    ax, ay = f1
    bx, by = f2
    cx, cy = f3
    D = fy - fx
    Lx = bx / ax + 2.0 * ax / D
    Ly = by / ay - 2.0 * ay / D
    Lxx = (cx * ax - bx * bx) / ax ** 2 + 2.0 * bx / D + 2.0 * ax ** 2 / D ** 2
    Lyy = (cy * ay - by * by) / ay ** 2 - 2.0 * by / D + 2.0 * ay ** 2 / D ** 2
    Lxy = -2.0 * ax * ay / D ** 2
    return Lx, Ly, Lxx, Lxy, Lyy


def kernel_partials(domain, x: float, y: float, order: int = 2) -> dict:
    """Partial derivatives of ``H_D`` at ``(x, y)`` up to ``order`` (<= 2).

    Closed forms for the half-plane and the vertical slit; for Loewner
    complements, central differences with step ``delta / 100`` and one
    Richardson extrapolation.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if isinstance(domain, LoewnerComplement):
        return _fd_partials(domain, x, y, order)
    f, f1, f2, f3 = domain.boundary_map(np.array([x, y], dtype=float))
    H = f1[0] * f1[1] / (f[1] - f[0]) ** 2
    out = {"H": float(H)}
    if order == 0:
        return out
    Lx, Ly, Lxx, Lxy, Lyy = _log_partials(f, f1, f2, f3)
    out["x"] = float(H * Lx)
    out["y"] = float(H * Ly)
    if order == 2:
        out["xx"] = float(H * (Lxx + Lx * Lx))
        out["xy"] = float(H * (Lxy + Lx * Ly))
        out["yy"] = float(H * (Lyy + Ly * Ly))
    return out


def _delta(domain, pts) -> float:
    pts = np.asarray(pts, dtype=float)
    d = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
    return min(d, domain.boundary_distance(pts))


def _fd_partials(domain, x, y, order):
    delta = _delta(domain, [x, y])
    s = delta / 100.0
    if s < 1e-12:
        raise ArithmeticError("finite-difference step underflow near the hull")
    H = lambda u, v: kernel(domain, u, v)
    out = {"H": H(x, y)}
    if order == 0:
        return out

    def rich(fun):
        a1 = fun(s)
        a2 = fun(s / 2)
        return (4.0 * a2 - a1) / 3.0

    out["x"] = rich(lambda e: (H(x + e, y) - H(x - e, y)) / (2 * e))
    out["y"] = rich(lambda e: (H(x, y + e) - H(x, y - e)) / (2 * e))
    if order == 2:
        h0 = out["H"]
        out["xx"] = rich(lambda e: (H(x + e, y) - 2 * h0 + H(x - e, y)) / e ** 2)
        out["yy"] = rich(lambda e: (H(x, y + e) - 2 * h0 + H(x, y - e)) / e ** 2)
        out["xy"] = rich(lambda e: (H(x + e, y + e) - H(x + e, y - e) - H(x - e, y + e) + H(x - e, y - e)) / (4 * e * e))
    return out


def _psi_cross_partial(domain, pair: IntervalPair, params: SleParams):
    """Max over z1 in {x1, y1}, z2 in {x2, y2} of |d^2 Psi / dz1 dz2| and Psi."""
    f = _kernel_fn(domain)
    kw = dict(epsabs=1e-12, epsrel=1e-10, limit=200)
    E = excursion_measure(domain, pair)
    u = math.exp(-E)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        dE = {
            "x1": -integrate.quad(lambda s: f(pair.x1, s), pair.x2, pair.y2, **kw)[0],
            "y1": integrate.quad(lambda s: f(pair.y1, s), pair.x2, pair.y2, **kw)[0],
            "x2": -integrate.quad(lambda r: f(r, pair.x2), pair.x1, pair.y1, **kw)[0],
            "y2": integrate.quad(lambda r: f(r, pair.y2), pair.x1, pair.y1, **kw)[0],
        }
    sign = {"x1": -1.0, "y1": 1.0, "x2": -1.0, "y2": 1.0}
    pos = {"x1": pair.x1, "y1": pair.y1, "x2": pair.x2, "y2": pair.y2}
    psi = phi(u, params)
    d1, d2 = phi_derivs(u, params)
    best = 0.0
    for z1 in ("x1", "y1"):
        for z2 in ("x2", "y2"):
            Ezz = sign[z1] * sign[z2] * f(pos[z1], pos[z2])
            uz1 = -u * dE[z1]
            uz2 = -u * dE[z2]
            uzz = u * (dE[z1] * dE[z2] - Ezz)
            val = d2 * uz1 * uz2 + d1 * uzz
            best = max(best, abs(val))
    return best, psi


def derivative_bound_report(family, points=(0.0, 1.0), params: SleParams | None = None,
                            arm: float = 1.0) -> dict:
    """Normalised derivative ratios of ``H_D`` over a family of domains.

    Parameters
    ----------
    family : iterable
        Members are ``"halfplane"``, a domain object, or ``(p, h)`` slits.
    points : (x, y)
        Kernel arguments.
    params : SleParams, optional
        If given, also reports ``|d^2 Psi / dz1 dz2| delta^2 / Psi`` for the
        two-pair configuration ``(x - arm, x, y, y + arm)``.

    Returns
    -------
    dict with ``rows`` (list of dicts with keys p, h, delta, H, r1, r2,
    rpsi) and ``sup`` (column-wise suprema).
    """
    x, y = map(float, points)
    rows = []
    for mem in family:
        if isinstance(mem, str) and mem.lower() == "halfplane":
            dom, p, h = HalfPlane(), math.nan, 0.0
        elif isinstance(mem, (HalfPlane, VerticalSlit)):
            dom = mem
            p, h = (mem.p, mem.h) if isinstance(mem, VerticalSlit) else (math.nan, 0.0)
        else:
            p, h = map(float, mem)
            dom = VerticalSlit(p, h)
        dpts = min(abs(x - y), dom.boundary_distance([x, y]))
        kp = kernel_partials(dom, x, y, 2)
        H = kp["H"]
        r1 = (abs(kp["x"]) + abs(kp["y"])) * dpts / H
        r2 = (abs(kp["xx"]) + abs(kp["xy"]) + abs(kp["yy"])) * dpts ** 2 / H
        rpsi = math.nan
        if params is not None:
            pair = IntervalPair(x - arm, x, y, y + arm)
            dpsi = min(arm, abs(y - x), dom.boundary_distance([x - arm, x, y, y + arm]))
            cp, psi = _psi_cross_partial(dom, pair, params)
            rpsi = cp * dpsi ** 2 / psi
        rows.append({"p": p, "h": h, "delta": dpts, "H": H, "r1": r1, "r2": r2, "rpsi": rpsi})
    sup = {k: max((r[k] for r in rows if not math.isnan(r[k])), default=math.nan)
           for k in ("r1", "r2", "rpsi")}
    return {"rows": rows, "sup": sup}


def report_to_csv(report: dict, path=None) -> str:
    """CSV with columns p, h, delta, H, r1, r2, rpsi (17 significant digits)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["p", "h", "delta", "H", "r1", "r2", "rpsi"]
    w.writerow(cols)
    for r in report["rows"]:
        w.writerow([f"{r[c]:.17g}" for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text

"""Monte Carlo estimators of multiple-SLE partition functions.

The normalised partition function of ``n`` non-crossing curves is
``Psi~ = E[Y]``.  It is estimated recursively: sample one curve with its
marginal law (chordal SLE between its endpoints), then average over that
curve the product of the excursion-avoidance ratios ``Q_k^b`` of the other
pairs and the normalised partition function of the remaining pairs in the
complement, which for two pairs is ``phi(exp(-excursion))``.

Paths are run with the scale-adaptive slit flow until the tracked points
have collapsed (relative spread below ``tol``), which approximates the
``t -> infinity`` limit; see :mod:`slelab.loewner._kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics.estimate import Estimate
from .numerics.params import SleParams
from .numerics.rng import RandomStream
from .numerics.special import ConvergenceError, phi, phi_derivs
from .loewner import _kernels as K
from ._parallel import run_paths

__all__ = [
    "PairConfig",
    "estimate_two_psi",
    "estimate_psi",
    "estimate_three_psi",
    "delta_moment_probe",
    "delta_moment_scan",
    "smoothness_probe",
    "SmoothnessReport",
    "FlowSettings",
]

FAIL_CAP = 1e-3


@dataclass(frozen=True)
class FlowSettings:
    """Discretisation of the adaptive flow.

    ``dt`` is the relative step: each step adds capacity time
    ``h_k d^2`` with ``d`` the distance to the nearest tracked point and
    ``h_k`` between ``dt`` and ``hmax``.
    """

    dt: float = 1e-4
    hmax: float = 1e-2
    tol: float = 1e-4
    max_steps: int = 10_000_000
    swallow_rel: float = 1e-9

    def __post_init__(self):
        if not (0 < self.dt <= self.hmax):
            raise ValueError("need 0 < dt <= hmax")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class PairConfig:
    """Endpoint pairs ``(x_j, y_j)`` of non-crossing curves on the real line."""

    pairs: tuple

    def __init__(self, pairs):
        pr = tuple((float(x), float(y)) for x, y in pairs)
        pts = [v for p in pr for v in p]
        if len(set(pts)) != len(pts):
            raise ValueError("endpoints must be pairwise distinct")
        for i in range(len(pr)):
            for j in range(i + 1, len(pr)):
                if _crossing(pr[i], pr[j]):
                    raise ValueError(f"pairs {pr[i]} and {pr[j]} cannot be joined by disjoint curves")
        object.__setattr__(self, "pairs", pr)

    def __len__(self):
        return len(self.pairs)

    def permuted(self, order) -> "PairConfig":
        return PairConfig([self.pairs[i] for i in order])

    def swapped(self, j) -> "PairConfig":
        pr = list(self.pairs)
        pr[j] = (pr[j][1], pr[j][0])
        return PairConfig(pr)


def _crossing(p, q) -> bool:
    a, b = sorted(p)
    c, d = sorted(q)
    return (a < c < b) != (a < d < b)


def _stream_gen(seed, stream_id, i):
    return RandomStream(seed, stream_id).generator(i)


def _check_failures(status, what):
    bad = int(np.sum(status == K.STATUS_MAXSTEPS))
    if bad > FAIL_CAP * status.size:
        raise ConvergenceError(f"{what}: {bad} of {status.size} paths hit the step cap")
    return bad


# --------------------------------------------------------------------- two curves

def _two_psi_work(seed, stream_id, start, stop, x, a, s: FlowSettings):
    out = np.empty((stop - start, 3))
    pts = np.array([x, 1.0])
    for r, i in enumerate(range(start, stop)):
        w, gp, gaps, st, k = K.flow_points(pts, a, s.dt, s.hmax, s.tol, s.max_steps, s.swallow_rel,
                                           _stream_gen(seed, stream_id, i))
        if st == K.STATUS_SWALLOWED:
            q = 0.0
        else:
            q = (1.0 - x) ** 2 * gp[0] * gp[1] / gaps[0] ** 2
        out[r] = (q, st, k)
    return out


def estimate_two_psi(params: SleParams, x: float, n: int, dt: float = 1e-4, stream: RandomStream | None = None,
                     *, settings: FlowSettings | None = None, workers=None, return_samples=False):
    """Estimate ``phi(x) = E[Q(x, 1)^b]`` for SLE from 0 to infinity.

    Parameters
    ----------
    params : SleParams
    x : float
        Second pair ``(x, 1)`` with ``0 < x < 1``.
    n : int
        Number of independent curves.
    dt : float
        Relative capacity step.
    stream : RandomStream
    settings : FlowSettings, optional
        Overrides ``dt``.

    Notes
    -----
    For ``4 < kappa < 8`` the integrand is ``Q^b 1{Q > 0}``; ``Q = 0`` when
    ``x`` is swallowed.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("need 0 < x < 1")
    stream = stream or RandomStream(0)
    s = settings or FlowSettings(dt=dt)
    res = run_paths(_two_psi_work, n, stream, workers, x=float(x), a=params.a, s=s)
    q, st = res[:, 0], res[:, 1].astype(int)
    bad = _check_failures(st, "estimate_two_psi")
    keep = st != K.STATUS_MAXSTEPS
    vals = np.where(q > 0, q, 0.0) ** params.b if params.b != 0 else (q > 0).astype(float)
    cfg = {"kappa": params.kappa, "x": float(x), "n": int(n), "dt": s.dt, "hmax": s.hmax, "tol": s.tol,
           "failed": bad, "mean_steps": float(res[:, 2].mean())}
    est = Estimate.from_samples(vals[keep], seed=stream.seed, config=cfg)
    return (est, vals) if return_samples else est


# ------------------------------------------------------------------ general n <= 3

def _moebius(xj, yj):
    """Orientation-preserving Moebius map sending xj -> 0 and yj -> infinity."""
    if math.isinf(yj):
        return lambda z: z - xj
    if math.isinf(xj):
        return lambda z: 0.0 if math.isinf(z) else -1.0 / (z - yj)
    sg = 1.0 if yj > xj else -1.0

    def m(z):
        if math.isinf(z):
            return -sg
        return sg * (z - xj) / (yj - z)
    return m


def _layout(config: PairConfig, marginal: int):
    """Mapped positions of the other endpoints, sorted, with pair labels."""
    xj, yj = config.pairs[marginal]
    m = _moebius(xj, yj)
    pos, lab = [], []
    for k, (x, y) in enumerate(config.pairs):
        if k == marginal:
            continue
        pos += [m(x), m(y)]
        lab += [k, k]
    pos = np.asarray(pos, dtype=float)
    order = np.argsort(pos)
    return pos[order], np.asarray(lab)[order]


def _diff(gaps, i, j):
    """w[j] - w[i] for same-side sorted indices i < j, from gap products."""
    return float(np.sum(gaps[i:j]))


def _psi_work(seed, stream_id, start, stop, pos, lab, a, b, s: FlowSettings):
    """Per path: (weight excluding the residual two-pair factor, u, status, steps).

    ``u`` is the cross-ratio of the two remaining pairs when they share a
    side (their factor is ``phi(u)``) and ``nan`` when they are separated
    (factor 1).
    """
    n = stop - start
    out = np.empty((n, 4))
    labels = np.unique(lab)
    for r, i in enumerate(range(start, stop)):
        w, gp, gaps, st, k = K.flow_points(pos, a, s.dt, s.hmax, s.tol, s.max_steps, s.swallow_rel,
                                           _stream_gen(seed, stream_id, i))
        weight = 1.0
        same_side_pairs = []
        for L in labels:
            i0, i1 = np.nonzero(lab == L)[0]
            if w[i0] * w[i1] < 0:
                weight = 0.0
                break
            d = _diff(gaps, i0, i1)
            q = (pos[i1] - pos[i0]) ** 2 * gp[i0] * gp[i1] / d ** 2
            weight *= q ** b
            same_side_pairs.append((i0, i1))
        u = math.nan
        if weight > 0 and len(labels) == 2:
            (a0, a1), (b0, b1) = same_side_pairs
            if w[a0] * w[b0] > 0:
                idx = sorted([a0, a1, b0, b1])
                s1, s2, s3, s4 = idx
                d = lambda p, q: _diff(gaps, p, q)
                if {a0, a1} in ({s1, s2}, {s3, s4}):
                    u = d(s2, s3) * d(s1, s4) / (d(s1, s3) * d(s2, s4))
                else:
                    u = d(s1, s2) * d(s3, s4) / (d(s1, s3) * d(s2, s4))
        out[r] = (weight, u, st, k)
    return out


def estimate_psi(params: SleParams, config: PairConfig, n: int, dt: float = 1e-4,
                 stream: RandomStream | None = None, *, marginal: int = 0,
                 settings: FlowSettings | None = None, workers=None, return_samples=False):
    """Estimate ``Psi~`` for up to three pairs, sampling pair ``marginal`` first."""
    params.require_simple()
    npairs = len(config)
    stream = stream or RandomStream(0)
    s = settings or FlowSettings(dt=dt)
    cfg = {"kappa": params.kappa, "pairs": [list(p) for p in config.pairs], "marginal": marginal,
           "n": int(n), "dt": s.dt, "hmax": s.hmax, "tol": s.tol}
    if npairs == 1:
        est = Estimate(1.0, 0.0, max(int(n), 2), stream.seed, cfg, 0.0)
        return (est, np.ones(max(int(n), 2))) if return_samples else est
    if npairs > 3:
        raise NotImplementedError("estimators cover at most three pairs")
    if not 0 <= marginal < npairs:
        raise ValueError("marginal index out of range")
    pos, lab = _layout(config, marginal)
    res = run_paths(_psi_work, n, stream, workers, pos=pos, lab=lab, a=params.a, b=params.b, s=s)
    wgt, u, st = res[:, 0], res[:, 1], res[:, 2].astype(int)
    bad = _check_failures(st, "estimate_psi")
    keep = st != K.STATUS_MAXSTEPS
    fac = np.ones_like(wgt)
    m = ~np.isnan(u) & (wgt > 0)
    if m.any():
        fac[m] = phi(np.clip(u[m], 0.0, 1.0), params)
    vals = wgt * fac
    cfg.update(failed=bad, mean_steps=float(res[:, 3].mean()))
    est = Estimate.from_samples(vals[keep], seed=stream.seed, config=cfg)
    return (est, vals) if return_samples else est


def estimate_three_psi(params: SleParams, config: PairConfig, n: int, dt: float = 1e-4,
                       stream: RandomStream | None = None, *, marginal: int = 0, **kw):
    """Three-pair ``Psi~`` (also accepts one pair, returning exactly 1)."""
    if len(config) not in (1, 3):
        raise ValueError("estimate_three_psi expects three pairs (or one)")
    return estimate_psi(params, config, n, dt, stream, marginal=marginal, **kw)


# ---------------------------------------------------------------------- Delta probe

def _canonical_x(config) -> float:
    if isinstance(config, (int, float)):
        return float(config)
    pr = sorted(tuple(sorted(p)) for p in config.pairs)
    if len(pr) != 2 or pr[0][0] != 0.0 or not math.isinf(pr[0][1]) or pr[1][1] != 1.0:
        if len(pr) == 2 and pr[1] == (0.0, math.inf):
            pr = pr[::-1]
        else:
            raise ValueError("delta probe expects the normalised configuration {(0, inf), (x, 1)}")
    return pr[1][0]


def _delta_work(seed, stream_id, start, stop, x, a, b, s: FlowSettings, stride):
    out = np.empty((stop - start, 4))
    for r, i in enumerate(range(start, stop)):
        P, d, st, m = K.delta_path(x, a, s.dt, s.hmax, s.tol, 1e-3, s.max_steps, s.swallow_rel, stride,
                                   _stream_gen(seed, stream_id, i))
        out[r] = (P ** b if P > 0 else 0.0, d, st, m)
    return out


def delta_moment_scan(params: SleParams, config, p: float, floors, n: int, stream: RandomStream | None = None,
                      dt: float = 4e-3, stride: int = 16, workers=None):
    """``E[Q^b max(Delta, floor)^-p]`` for several floors from the same curves.

    ``Delta`` is the distance from the curve joining ``0`` and ``infinity``
    to the endpoints ``{x, 1}`` of the other pair.
    """
    if params.kappa >= 4:
        raise ValueError("delta probe requires kappa < 4")
    if p > 2:
        raise ValueError("need p <= 2")
    x = _canonical_x(config)
    stream = stream or RandomStream(0)
    s = FlowSettings(dt=dt)
    res = run_paths(_delta_work, n, stream, workers, x=x, a=params.a, b=params.b, s=s, stride=stride)
    w, d, st = res[:, 0], res[:, 1], res[:, 2].astype(int)
    _check_failures(st, "delta_moment_probe")
    keep = st != K.STATUS_MAXSTEPS
    out = {}
    for fl in floors:
        vals = w * np.maximum(d, fl) ** (-p)
        cfg = {"kappa": params.kappa, "x": x, "p": p, "eps_floor": fl, "n": int(n), "dt": dt}
        out[fl] = Estimate.from_samples(vals[keep], seed=stream.seed, config=cfg)
    return out


def delta_moment_probe(params: SleParams, config, p: float, eps_floor: float, n: int,
                       stream: RandomStream | None = None, **kw) -> Estimate:
    """``E[Q^b max(Delta, eps_floor)^-p]`` for a two-pair configuration."""
    return delta_moment_scan(params, config, p, [eps_floor], n, stream, **kw)[eps_floor]


# ---------------------------------------------------------------- smoothness probe

@dataclass
class SmoothnessReport:
    x: np.ndarray
    h: float
    d2_h: np.ndarray
    se_h: np.ndarray
    d2_h2: np.ndarray
    se_h2: np.ndarray
    diff_se: np.ndarray
    phi2: np.ndarray
    phi_d2_h: np.ndarray
    phi_d2_h2: np.ndarray

    @property
    def mesh_discrepancy(self) -> np.ndarray:
        """|D2(h) - D2(h/2)| in units of the (paired) MC error."""
        return np.abs(self.d2_h - self.d2_h2) / self.diff_se

    @property
    def phi_zscore(self) -> np.ndarray:
        return (self.d2_h2 - self.phi2) / self.se_h2

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def _smooth_work(seed, stream_id, start, stop, pts, a, b, s: FlowSettings):
    n = pts.size
    out = np.empty((stop - start, n - 1))
    for r, i in enumerate(range(start, stop)):
        w, gp, gaps, st, k = K.flow_points(pts, a, s.dt, s.hmax, s.tol, s.max_steps, s.swallow_rel,
                                           _stream_gen(seed, stream_id, i))
        if st == K.STATUS_MAXSTEPS:
            out[r] = np.nan
            continue
        tailsum = np.cumsum(gaps[::-1])[::-1]      # w[-1] - w[j]
        q = (1.0 - pts[:-1]) ** 2 * gp[:-1] * gp[-1] / tailsum ** 2
        out[r] = q ** b
    return out


def smoothness_probe(params: SleParams, xs, h: float, n: int, stream: RandomStream | None = None,
                     dt: float = 1e-4, workers=None) -> SmoothnessReport:
    """Second differences of the two-curve partition function at meshes h and h/2.

    All stencil points and the point 1 ride on the same curve (common random
    numbers), so the per-curve second differences are smooth in ``x``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs - h <= 0) or np.any(xs + h >= 1):
        raise ValueError("stencil must stay inside (0, 1)")
    offs = np.array([-h, -h / 2, 0.0, h / 2, h])
    pts = np.unique(np.concatenate([x + offs for x in xs]))
    pts = np.append(pts, 1.0)
    stream = stream or RandomStream(0)
    s = FlowSettings(dt=dt)
    res = run_paths(_smooth_work, n, stream, workers, pts=pts, a=params.a, b=params.b, s=s)
    res = res[~np.isnan(res).any(axis=1)]
    col = {v: j for j, v in enumerate(pts[:-1])}

    def c(v):
        return res[:, col[v]]

    out = {k: [] for k in ("d2_h", "se_h", "d2_h2", "se_h2", "diff_se", "phi2", "pd_h", "pd_h2")}
    m = res.shape[0]
    for x in xs:
        A = (c(x + h) - 2 * c(x) + c(x - h)) / h ** 2
        B = (c(x + h / 2) - 2 * c(x) + c(x - h / 2)) / (h / 2) ** 2
        out["d2_h"].append(A.mean())
        out["se_h"].append(A.std(ddof=1) / math.sqrt(m))
        out["d2_h2"].append(B.mean())
        out["se_h2"].append(B.std(ddof=1) / math.sqrt(m))
        out["diff_se"].append((A - B).std(ddof=1) / math.sqrt(m))
        out["phi2"].append(phi_derivs(x, params)[1])
        f = lambda v: phi(v, params)
        out["pd_h"].append((f(x + h) - 2 * f(x) + f(x - h)) / h ** 2)
        out["pd_h2"].append((f(x + h / 2) - 2 * f(x) + f(x - h / 2)) / (h / 2) ** 2)
    A = {k: np.asarray(v) for k, v in out.items()}
    return SmoothnessReport(xs, h, A["d2_h"], A["se_h"], A["d2_h2"], A["se_h2"], A["diff_se"], A["phi2"],
                            A["pd_h"], A["pd_h2"])

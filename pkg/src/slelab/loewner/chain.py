"""Discretised chordal Loewner chains on a time grid.

``g_t`` solves ``d g_t(z) / dt = a / (g_t(z) - U_t)`` with ``U`` a standard
Brownian motion and ``a = 2 / kappa``.  On each grid step the driving value
is frozen, which makes the step map an explicit vertical-slit map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..numerics.params import SleParams
from . import _kernels as K

__all__ = [
    "DrivingPath",
    "LoewnerChain",
    "TraceSample",
    "BoundaryTrack",
    "SwallowedError",
    "sample_driving",
    "evolve_chain",
    "evaluate_map",
    "map_derivative",
    "trace_points",
    "dist_to_point",
    "track_boundary",
    "q_ratio",
    "upsilon",
]

SWALLOW_TOL = 1e-9


class SwallowedError(ValueError):
    """A boundary point was evaluated after being swallowed by the hull."""


@dataclass(frozen=True)
class DrivingPath:
    """Driving function sampled on a uniform grid, ``values[0] == 0``."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("values must be a nonempty 1-d sequence")
        if v[0] != 0.0:
            raise ValueError("driving path must start at 0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", v)

    @property
    def steps(self) -> int:
        return self.values.size - 1

    @property
    def horizon(self) -> float:
        return self.steps * self.dt

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def scaled(self, c: float) -> "DrivingPath":
        """Brownian rescaling: ``U_{c^2 t} / c`` sampled on the grid ``dt / c^2``."""
        return DrivingPath(self.dt / c ** 2, self.values / c)


def sample_driving(params: SleParams, horizon: float, dt: float, stream) -> DrivingPath:
    """Standard Brownian motion on ``[0, horizon]`` with step ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if horizon < dt * (1 - 1e-12):
        raise ValueError("horizon must be at least dt")
    m = int(round(horizon / dt))
    gen = stream.generator()
    inc = np.sqrt(dt) * np.asarray(gen.standard_normal(m), dtype=float)
    return DrivingPath(dt, np.concatenate(([0.0], np.cumsum(inc))))


@dataclass(frozen=True)
class LoewnerChain:
    """Composition of elementary slit maps.

    Attributes
    ----------
    U : ndarray
        Driving value held on each step (absolute coordinates).
    dt : ndarray
        Capacity-time increment of each step; the half-plane capacity
        added by step ``k`` is ``a * dt[k]``.
    params : SleParams
    U_end : float
        Driving value at the final time.
    """

    U: np.ndarray
    dt: np.ndarray
    params: SleParams
    U_end: float = 0.0

    @property
    def steps(self) -> int:
        return self.U.size

    @property
    def time(self) -> float:
        return float(np.sum(self.dt))

    @property
    def capacity(self) -> float:
        return self.params.a * self.time

    @property
    def times(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.dt)))

    def then(self, other: "LoewnerChain") -> "LoewnerChain":
        """Chain that applies ``self`` first, then ``other``."""
        return LoewnerChain(np.concatenate((self.U, other.U)), np.concatenate((self.dt, other.dt)),
                            self.params, other.U_end)

    def shifted(self, du: float) -> "LoewnerChain":
        """Same chain in coordinates translated by ``du``."""
        return LoewnerChain(self.U + du, self.dt.copy(), self.params, self.U_end + du)

    def reflected(self) -> "LoewnerChain":
        """Image under ``z -> -conj(z)``."""
        return LoewnerChain(-self.U, self.dt.copy(), self.params, -self.U_end)

    def evaluate(self, z):
        return evaluate_map(self, z)

    def derivative(self, x):
        return map_derivative(self, x)


def evolve_chain(driving: DrivingPath, params: SleParams) -> LoewnerChain:
    """Chain whose step ``k`` holds ``U_k`` over ``[t_k, t_{k+1}]``."""
    v = driving.values
    return LoewnerChain(v[:-1].copy(), np.full(driving.steps, driving.dt), params, float(v[-1]))


@njit(cache=True)
def _real_track(x, U, dt, a, U_end):
    """Real evaluation with swallowing detection (sign change of g - U)."""
    n = x.shape[0]
    g = x.copy()
    d = np.ones(n)
    bad = np.zeros(n, dtype=np.bool_)
    m = U.shape[0]
    for k in range(m):
        c = 2.0 * a * dt[k]
        u = U[k]
        nxt = U[k + 1] if k + 1 < m else U_end
        for i in range(n):
            if bad[i]:
                continue
            w = g[i] - u
            if w == 0.0:
                bad[i] = True
                continue
            W = np.sqrt(w * w + c)
            if w < 0.0:
                W = -W
            d[i] *= w / W
            g[i] = u + W
            if (g[i] - nxt) * W <= 0.0:
                bad[i] = True
    return g, d, bad


def evaluate_map(chain: LoewnerChain, z):
    """``g_T(z)`` for complex ``z`` (upper half-plane) or real boundary points."""
    zs = np.atleast_1d(np.asarray(z))
    scalar = np.ndim(z) == 0
    a = chain.params.a
    if np.isrealobj(zs):
        g, _, bad = _real_track(zs.astype(float), chain.U, chain.dt, a, chain.U_end)
        if bad.any():
            raise SwallowedError(f"points {zs[bad]} are swallowed by the hull")
        out = g
    else:
        if np.any(zs.imag < 0):
            raise ValueError("complex points must lie in the closed upper half-plane")
        out = K.apply_chain(zs.astype(np.complex128), chain.U, chain.dt, a)
    return out[0] if scalar else out


def map_derivative(chain: LoewnerChain, x):
    """``g_T'(x)`` for real boundary points, by the chain rule."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    _, d, bad = _real_track(xs, chain.U, chain.dt, chain.params.a, chain.U_end)
    if bad.any():
        raise SwallowedError(f"points {xs[bad]} are swallowed by the hull")
    return d[0] if np.ndim(x) == 0 else d


@dataclass(frozen=True)
class TraceSample:
    """Points ``gamma(t_k)`` of the discrete trace."""

    points: np.ndarray
    times: np.ndarray

    def __len__(self):
        return self.points.size


def trace_points(chain: LoewnerChain, stride: int = 1) -> TraceSample:
    """Tips of the discrete hull at every ``stride``-th grid time (and the last).

    Tip ``k`` is the top of the slit added by step ``k - 1`` pulled back
    through the earlier slit maps, so the cost is O(m) per tip.
    """
    m = chain.steps
    idx = np.arange(0, m + 1, max(1, int(stride)), dtype=np.int64)
    if idx[-1] != m:
        idx = np.append(idx, m)
    pts = K.tips(idx, chain.U, chain.dt, chain.params.a) if m else np.array([complex(0.0)])
    if m == 0:
        pts = np.array([complex(chain.U_end, 0.0)])
    return TraceSample(pts, chain.times[idx])


def dist_to_point(trace: TraceSample, w: complex) -> float:
    """Euclidean distance from ``w`` to the trace polyline."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    return float(K.polyline_dist(trace.points.astype(np.complex128), complex(w)))


@dataclass(frozen=True)
class BoundaryTrack:
    """Observables of a pair of boundary points along a chain.

    ``Z = g(x) - U``, ``X = g(y) - U`` and ``Y = X - Z`` (tracked without
    cancellation); ``K = Z / X``.  Arrays have one entry per grid time;
    ``U`` holds the driving value at each grid time.
    """

    t: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    gprime_x: np.ndarray
    gprime_y: np.ndarray
    x: float
    y: float
    swallowed: bool = False
    swallow_time: float | None = None
    mirrored: bool = False
    params: SleParams | None = field(default=None, repr=False)
    U: np.ndarray | None = field(default=None, repr=False)

    @property
    def K(self) -> np.ndarray:
        return self.Z / self.X

    @property
    def phi(self) -> np.ndarray:
        """``Phi_t = (y - x)^2 g'(x) g'(y) / (g(y) - g(x))^2``; 0 after swallowing."""
        out = (self.y - self.x) ** 2 * self.gprime_x * self.gprime_y / self.Y ** 2
        return out


@njit(cache=True)
def _track(x, y, U, dt, a, U_end, tol):
    m = U.shape[0]
    Z = np.empty(m + 1)
    X = np.empty(m + 1)
    Y = np.empty(m + 1)
    gx = np.empty(m + 1)
    gy = np.empty(m + 1)
    Z[0] = x - U[0] if m else x - U_end
    X[0] = y - U[0] if m else y - U_end
    Y[0] = y - x
    gx[0] = 1.0
    gy[0] = 1.0
    sw = -1
    for k in range(m):
        c = 2.0 * a * dt[k]
        z = Z[k]
        xx = X[k]
        Wz = np.sqrt(z * z + c)
        Wx = np.sqrt(xx * xx + c)
        s = (Wz + Wx) / (z + xx)
        gx[k + 1] = gx[k] * z / Wz
        gy[k + 1] = gy[k] * xx / Wx
        Y[k + 1] = Y[k] / s
        nxt = U[k + 1] if k + 1 < m else U_end
        du = nxt - U[k]
        Z[k + 1] = Wz - du
        X[k + 1] = Wx - du
        if Z[k + 1] < tol:
            sw = k + 1
            for j in range(k + 2, m + 1):
                Z[j] = 0.0
                X[j] = np.nan
                Y[j] = np.nan
                gx[j] = 0.0
                gy[j] = np.nan
            Z[k + 1] = 0.0
            gx[k + 1] = 0.0
            break
    return Z, X, Y, gx, gy, sw


def track_boundary(chain: LoewnerChain, x: float, y: float) -> BoundaryTrack:
    """Follow ``x`` and ``y`` (same side, ``|x| < |y|``) along the chain."""
    x, y = float(x), float(y)
    mirrored = False
    if x < 0 and y < 0:
        chain = chain.reflected()
        x, y = -x, -y
        mirrored = True
    if not (0 < x < y):
        raise ValueError("need 0 < x < y (or the mirrored configuration y < x < 0)")
    Z, X, Y, gx, gy, sw = _track(x, y, chain.U, chain.dt, chain.params.a, chain.U_end, SWALLOW_TOL)
    t = chain.times
    return BoundaryTrack(t, X, Z, Y, gx, gy, x, y, sw >= 0, float(t[sw]) if sw >= 0 else None,
                         mirrored, chain.params, np.append(chain.U, chain.U_end))


def q_ratio(chain: LoewnerChain, x: float, y: float) -> float:
    """``H_{H \\ gamma_T}(x, y) / H_H(x, y)`` at the final time (0 if swallowed)."""
    tr = track_boundary(chain, x, y)
    if tr.swallowed:
        return 0.0
    return float(tr.phi[-1])


def upsilon(track: BoundaryTrack, x: float | None = None) -> np.ndarray:
    """``Y_t / ((y - x) g_t'(y))``: conformal radius of ``y`` in the reflected
    domain, normalised to 1 at ``t = 0``."""
    if x is not None and abs(float(x) - track.x) > 1e-15 and abs(-float(x) - track.x) > 1e-15:
        raise ValueError("x does not match the track")
    return track.Y / ((track.y - track.x) * track.gprime_y)

"""Euler-Maruyama integration of scalar SDEs over an ensemble of paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SdePath", "StateEscapeError", "integrate_sde"]


class StateEscapeError(ArithmeticError):
    """The state left its admissible interval (or needed too many reflections)."""


@dataclass
class SdePath:
    """Recorded ensemble path.

    Attributes
    ----------
    t : ndarray, shape (n_rec,)
    x : ndarray, shape (n_rec,) or (n_rec, n_paths)
    reflections : int
        Number of buffer reflections applied over all paths and steps.
    steps : int
    integrals : ndarray or None
        Trapezoid-rule time integrals of the requested functionals,
        shape (n_functionals, n_paths).
    """

    t: np.ndarray
    x: np.ndarray
    reflections: int = 0
    steps: int = 0
    integrals: np.ndarray | None = None
    final: np.ndarray | None = field(default=None, repr=False)

    def __iter__(self):
        return iter(zip(self.t, self.x))

    def __len__(self):
        return len(self.t)


def _enforce(x, lo, hi, buffer, policy):
    """Reflect ``x`` into ``[lo + buffer, hi - buffer]``; return count of fixes."""
    n = 0
    if lo is not None:
        lb = lo + buffer
        m = x < lb
        if m.any():
            if policy == "raise":
                raise StateEscapeError(f"state fell below {lo}")
            x[m] = 2 * lb - x[m]
            n += int(m.sum())
    if hi is not None:
        hb = hi - buffer
        m = x > hb
        if m.any():
            if policy == "raise":
                raise StateEscapeError(f"state rose above {hi}")
            x[m] = 2 * hb - x[m]
            n += int(m.sum())
    if lo is not None or hi is not None:
        # a second overshoot after reflection can only come from huge steps
        np.clip(x, -np.inf if lo is None else lo + buffer, np.inf if hi is None else hi - buffer, out=x)
    return n


def integrate_sde(drift, diffusion, x0, dt, horizon, stream, *, n_paths=None, interval=None,
                  buffer=1e-8, policy="reflect", record_every=1, max_reflect_frac=0.01,
                  integrals=(), key=()):
    """Euler-Maruyama scheme ``x += drift(t, x) dt + diffusion(t, x) dW``.

    Parameters
    ----------
    drift, diffusion : callable
        Vectorised functions of ``(t, x)``.
    x0 : float or array
        Initial state; broadcast to ``n_paths`` when given.
    dt, horizon : float
        Step and final time; ``horizon / dt`` is rounded to an integer step count.
    stream : RandomStream
        Source of Gaussian increments; path is deterministic given the stream.
    interval : (lo, hi), optional
        Admissible open interval.  Either end may be None.
    buffer : float
        Reflection buffer from each end.
    policy : {"reflect", "raise"}
    record_every : int
        Thinning of the recorded path.
    max_reflect_frac : float
        Raise :class:`StateEscapeError` if reflections exceed this fraction of
        all path-steps.
    integrals : sequence of callables
        Functionals ``g(t, x)`` whose time integrals are accumulated.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if horizon < dt * (1 - 1e-12):
        raise ValueError("horizon must be at least dt")
    steps = int(round(horizon / dt))
    scalar = n_paths is None and np.ndim(x0) == 0
    x = np.array(x0, dtype=float, copy=True)
    if n_paths is not None:
        x = np.broadcast_to(x, (int(n_paths),)).copy()
    x = np.atleast_1d(x)
    lo, hi = (None, None) if interval is None else interval
    if interval is not None:
        if (lo is not None and np.any(x <= lo)) or (hi is not None and np.any(x >= hi)):
            raise StateEscapeError("initial state outside the admissible interval")
    gen = stream.generator(*key)
    sq = math.sqrt(dt)
    n_rec = steps // record_every + 1
    rec = np.empty((n_rec, x.size))
    rec[0] = x
    acc = np.zeros((len(integrals), x.size))
    prev = [g(0.0, x) for g in integrals]
    reflections = 0
    j = 1
    for k in range(steps):
        t = k * dt
        dw = sq * gen.standard_normal(x.shape)
        x = x + drift(t, x) * dt + diffusion(t, x) * dw
        if interval is not None:
            reflections += _enforce(x, lo, hi, buffer, policy)
        for i, g in enumerate(integrals):
            cur = g(t + dt, x)
            acc[i] += 0.5 * dt * (prev[i] + cur)
            prev[i] = cur
        if (k + 1) % record_every == 0:
            rec[j] = x
            j += 1
    if interval is not None and reflections > max_reflect_frac * steps * x.size:
        raise StateEscapeError(f"{reflections} reflections exceed {max_reflect_frac:.0%} of steps")
    times = np.arange(n_rec) * dt * record_every
    out = rec[:, 0] if scalar else rec
    return SdePath(times, out, reflections, steps, acc if integrals else None, x.copy())

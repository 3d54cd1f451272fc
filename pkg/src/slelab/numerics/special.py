"""Gamma, Gauss hypergeometric series and the two-curve function phi.

The hypergeometric function is summed directly from its power series.
Terms are generated in blocks from the term ratio, and the remainder after
the last block is bounded geometrically using the ratio asymptotics, so the
returned value carries a certified truncation bound (up to rounding).
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from .params import SleParams

__all__ = ["ConvergenceError", "log_gamma", "hyp2f1", "hyp2f1_with_error", "phi", "phi_derivs"]

MAX_TERMS = 1_000_000
_BLOCK0 = 256


class ConvergenceError(ArithmeticError):
    """A series, quadrature or Monte Carlo stopping rule failed to converge."""


def log_gamma(x: float) -> float:
    """Natural logarithm of the Gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise ValueError(f"log_gamma requires a positive finite argument, got {x}")
    return math.lgamma(x)


def _check_gamma(gamma: float) -> None:
    if gamma <= 0 and float(gamma).is_integer():
        raise ValueError(f"gamma={gamma} is a nonpositive integer")


def _log_terms(alpha, beta, gamma, n0, n1, x):
    """Log-magnitudes and signs of the ratio factors for indices n0..n1-1."""
    n = np.arange(n0, n1, dtype=float)
    rho = (alpha + n) * (beta + n) / ((gamma + n) * (n + 1.0))
    if x != 1.0:
        rho = rho * x
    return rho


def _ratio_sup(alpha, beta, gamma, n, x):
    """Upper bound on |t_{m+1}/t_m| over all m >= n (needs n >= 2|gamma| + 2)."""
    A = abs(alpha + beta - gamma - 1.0)
    B = abs(alpha * beta - gamma)
    return x * (1.0 + 2.0 * (A + B / n) / n)


def hyp2f1_with_error(alpha: float, beta: float, gamma: float, x: float,
                      rtol: float = 1e-12, max_terms: int = MAX_TERMS):
    """Gauss series with a truncation bound.

    Returns
    -------
    value, bound, nterms : float, float, int
        ``bound`` bounds the neglected tail ``|sum_{n > N} t_n|``.
    """
    alpha, beta, gamma, x = float(alpha), float(beta), float(gamma), float(x)
    _check_gamma(gamma)
    if not (0.0 <= x < 1.0):
        if x == 1.0:
            return _hyp2f1_at_one(alpha, beta, gamma, rtol, max_terms)
        raise ValueError(f"hyp2f1 series requires 0 <= x < 1, got {x}")
    if x == 0.0:
        return 1.0, 0.0, 1
    total = 1.0
    last = 1.0
    n = 0
    block = _BLOCK0
    nmin = int(2 * abs(gamma) + 2)
    while True:
        rho = _log_terms(alpha, beta, gamma, n, n + block, x)
        terms = last * np.cumprod(rho)
        s = math.fsum(terms)
        total += s
        last = float(terms[-1])
        n += block
        if last == 0.0:
            return total, 0.0, n + 1
        if n >= nmin:
            r = _ratio_sup(alpha, beta, gamma, n, x)
            if r < 1.0:
                bound = abs(last) * r / (1.0 - r)
                if bound <= rtol * abs(total):
                    return total, bound, n + 1
        if n >= max_terms:
            raise ConvergenceError(
                f"hyp2f1({alpha}, {beta}, {gamma}; {x}) did not reach rtol={rtol} "
                f"within {max_terms} terms")
        block = min(2 * block, max_terms - n) if n < max_terms else block


def _partial_sum_at_one(alpha, beta, gamma, N):
    rho = _log_terms(alpha, beta, gamma, 0, N, 1.0)
    terms = np.concatenate(([1.0], np.cumprod(rho)))
    return math.fsum(terms), float(terms[-1])


def _hyp2f1_at_one(alpha, beta, gamma, rtol, max_terms):
    """Value at x = 1 from tail-corrected partial sums plus Richardson.

    For ``s = gamma - alpha - beta + 1 > 1`` the terms decay like ``n**-s``;
    the corrected sum ``S_N + t_N N / (s - 1)`` has error ``O(N**-s)``, which
    one Richardson step removes to ``O(N**(-s-1))``.
    """
    s = gamma - alpha - beta + 1.0
    if not s > 1.0:
        raise ValueError("series diverges at x = 1 unless gamma > alpha + beta")
    prev = None
    N = 4096
    while True:
        S1, t1 = _partial_sum_at_one(alpha, beta, gamma, N)
        S2, t2 = _partial_sum_at_one(alpha, beta, gamma, 2 * N)
        T1 = S1 + t1 * N / (s - 1.0)
        T2 = S2 + t2 * 2 * N / (s - 1.0)
        est = (2.0 ** s * T2 - T1) / (2.0 ** s - 1.0)
        err = abs(est - T2)
        if prev is not None:
            err = max(err * 2.0 ** (-s), abs(est - prev))
        if err <= rtol * abs(est) or abs(t2) == 0.0:
            return est, err, 2 * N + 1
        if 4 * N > max_terms:
            # best effort: report the achieved bound rather than fail
            if err <= 1e-8 * abs(est):
                return est, err, 2 * N + 1
            raise ConvergenceError("hyp2f1 at x=1: tail extrapolation did not converge")
        prev = est
        N *= 2


def hyp2f1(alpha: float, beta: float, gamma: float, x: float,
           rtol: float = 1e-12, max_terms: int = MAX_TERMS) -> float:
    """Gauss hypergeometric function ``F(alpha, beta; gamma; x)``.

    Parameters
    ----------
    alpha, beta, gamma : float
        Series parameters; ``gamma`` must not be a nonpositive integer.
    x : float
        Argument in ``[0, 1)``.  ``x = 1`` is accepted when
        ``gamma > alpha + beta`` and is evaluated from the series itself
        (tail-corrected, extrapolated), not from Gauss's formula.
    rtol : float
        Target relative bound on the truncation error.
    max_terms : int
        Cap on the number of terms; exceeding it raises
        :class:`ConvergenceError`.
    """
    return hyp2f1_with_error(alpha, beta, gamma, x, rtol=rtol, max_terms=max_terms)[0]


def _phi_prefactor_log(a: float) -> float:
    return (log_gamma(2 * a) + log_gamma(6 * a - 1) - log_gamma(4 * a) - log_gamma(4 * a - 1))


# above this the direct series needs too many terms; switch to Euler's integral
_X_SERIES_MAX = 0.999


def _F_euler(a: float, x: float) -> float:
    """F(2a, 1-2a; 4a; x) through the Euler integral (adaptive quadrature).

    F = Gamma(4a)/Gamma(2a)^2 * int_0^1 t^(2a-1) (1-t)^(2a-1) (1-xt)^(2a-1) dt
    """
    e = 2 * a - 1
    eps = 1.0 - x

    def f(t):
        return (eps + x * (1.0 - t)) ** e

    split = max(0.0, 1.0 - 50.0 * eps)
    kw = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    v1 = 0.0
    with warnings.catch_warnings():
        # QUADPACK flags roundoff once it is already at machine precision
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if split > 0.0:
            # weight t^e on [0, split]; (1-t)^e is smooth there
            v1 = integrate.quad(lambda t: f(t) * (1.0 - t) ** e, 0.0, split,
                                weight="alg", wvar=(e, 0.0), **kw)[0]
        v2 = integrate.quad(lambda t: f(t) * t ** e, split, 1.0,
                            weight="alg", wvar=(0.0, e), **kw)[0]
    val = v1 + v2
    return math.exp(log_gamma(4 * a) - 2 * log_gamma(2 * a)) * val


def _F(a: float, x: float, order: int = 0) -> float:
    al, be, ga = 2 * a, 1 - 2 * a, 4 * a
    if order == 0:
        if x == 1.0:
            return hyp2f1(al, be, ga, 1.0)
        if x <= _X_SERIES_MAX:
            return hyp2f1(al, be, ga, x)
        return _F_euler(a, x)
    c = 1.0
    for k in range(order):
        c *= (al + k) * (be + k) / (ga + k)
    return c * hyp2f1(al + order, be + order, ga + order, x, rtol=1e-11)


def phi(x, params: SleParams):
    """Two-curve normalised partition function.

    ``phi(x) = C x^a F(2a, 1-2a; 4a; x)`` with ``C`` chosen so that
    ``phi(1) = 1``.  Accepts a scalar or an array.
    """
    if np.ndim(x):
        return np.array([phi(float(v), params) for v in np.ravel(x)]).reshape(np.shape(x))
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"phi requires 0 <= x <= 1, got {x}")
    if x == 0.0:
        return 0.0
    a = params.a
    logc = _phi_prefactor_log(a)
    return math.exp(logc + a * math.log(x)) * _F(a, x)


def phi_derivs(x: float, params: SleParams):
    """First and second derivatives of :func:`phi` on (0, 1).

    Uses the term-wise differentiated series, i.e.
    ``F^(k) = (alpha)_k (beta)_k / (gamma)_k F(alpha+k, beta+k; gamma+k)``.
    """
    x = float(x)
    if not (0.0 < x < 1.0):
        raise ValueError(f"phi_derivs requires 0 < x < 1, got {x}")
    a = params.a
    C = math.exp(_phi_prefactor_log(a))
    F0 = _F(a, x)
    F1 = _F(a, x, 1)
    F2 = _F(a, x, 2)
    xa = x ** a
    d1 = C * (a * xa / x * F0 + xa * F1)
    d2 = C * (a * (a - 1) * xa / x ** 2 * F0 + 2 * a * xa / x * F1 + xa * F2)
    return d1, d2

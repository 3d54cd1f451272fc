"""Adaptive double integration backed by QUADPACK (scipy.integrate.nquad)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from scipy import integrate

__all__ = ["QuadratureSpec", "QuadratureError", "adaptive_double_integral"]


class QuadratureError(ArithmeticError):
    """Requested tolerance not met within the subdivision budget."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be strictly positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


def adaptive_double_integral(f, rectangle, spec: QuadratureSpec = QuadratureSpec(),
                             return_error: bool = False):
    """Integrate ``f(r, s)`` over ``[r0, r1] x [s0, s1]``.

    Parameters
    ----------
    f : callable
        ``f(r, s) -> float``; must be finite on the closed rectangle.
    rectangle : ((r0, r1), (s0, s1))
    spec : QuadratureSpec
    return_error : bool
        Also return the estimated absolute error.

    Raises
    ------
    QuadratureError
        When QUADPACK reports that the tolerance could not be achieved.
    """
    (r0, r1), (s0, s1) = rectangle
    if r1 == r0 or s1 == s0:
        return (0.0, 0.0) if return_error else 0.0
    opts = {"limit": int(spec.max_subdivisions), "epsabs": spec.abs_tol, "epsrel": spec.rel_tol}
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.nquad(lambda s, r: f(r, s), [[s0, s1], [r0, r1]], opts=[opts, opts])
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    if err > max(spec.abs_tol, spec.rel_tol * abs(val)) * 10:
        raise QuadratureError(f"estimated error {err:.3g} exceeds tolerance")
    return (val, err) if return_error else val

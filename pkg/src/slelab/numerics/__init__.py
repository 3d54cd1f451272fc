"""Low-level numerical building blocks."""

from .params import SleParams, make_params
from .special import log_gamma, hyp2f1, phi, phi_derivs, ConvergenceError
from .rng import RandomStream, ZeroStream
from .quadrature import QuadratureSpec, adaptive_double_integral, QuadratureError
from .sde import integrate_sde, SdePath, StateEscapeError
from .estimate import Estimate

__all__ = [
    "SleParams",
    "make_params",
    "log_gamma",
    "hyp2f1",
    "phi",
    "phi_derivs",
    "ConvergenceError",
    "RandomStream",
    "ZeroStream",
    "QuadratureSpec",
    "adaptive_double_integral",
    "QuadratureError",
    "integrate_sde",
    "SdePath",
    "StateEscapeError",
    "Estimate",
]

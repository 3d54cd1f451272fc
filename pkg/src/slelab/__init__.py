"""slelab: Monte Carlo and quadrature laboratory for chordal SLE.

The package is organised bottom-up:

numerics
    parameters, special functions, quadrature, random streams, SDE stepping
loewner
    discretised chordal Loewner chains and boundary observables
domains
    reference domains, Poisson kernels, excursion measures
partition
    Monte Carlo estimators of multiple-SLE partition functions
exponents
    boundary-proximity exponents and the auxiliary diffusions
restriction
    restriction martingales and avoidance probabilities
"""

__version__ = "0.1.0"

from .numerics import (
    SleParams,
    make_params,
    log_gamma,
    hyp2f1,
    phi,
    phi_derivs,
    RandomStream,
    QuadratureSpec,
    adaptive_double_integral,
    integrate_sde,
    Estimate,
    ConvergenceError,
)

__all__ = [
    "SleParams",
    "make_params",
    "log_gamma",
    "hyp2f1",
    "phi",
    "phi_derivs",
    "RandomStream",
    "QuadratureSpec",
    "adaptive_double_integral",
    "integrate_sde",
    "Estimate",
    "ConvergenceError",
    "__version__",
]

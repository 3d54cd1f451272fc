"""SLE parameters derived from kappa."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SleParams:
    """Constants attached to SLE_kappa.

    Attributes
    ----------
    kappa : float
        Variance parameter, ``0 < kappa < 8``.
    a : float
        ``2 / kappa``; the Loewner equation reads ``dg = a / (g - U) dt``
        with ``U`` a standard Brownian motion.
    b : float
        Boundary scaling exponent ``(6 - kappa) / (2 kappa) = (3a - 1) / 2``.
    central_charge : float
        ``(6 - kappa)(3 kappa - 8) / (2 kappa)``.
    lam : float
        ``2 a**2``.
    """

    kappa: float
    a: float
    b: float
    central_charge: float
    lam: float

    @property
    def lambda_(self) -> float:
        return self.lam

    def require_simple(self) -> None:
        """Raise unless the curves are simple (``kappa <= 4``)."""
        if self.kappa > 4.0 + 1e-12:
            raise ValueError(f"kappa={self.kappa} > 4: estimator requires simple curves")

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "a": self.a,
            "b": self.b,
            "central_charge": self.central_charge,
            "lambda": self.lam,
        }


def make_params(kappa: float) -> SleParams:
    """Build :class:`SleParams` for ``kappa`` in (0, 8).

    >>> make_params(2.0).b
    1.0
    """
    kappa = float(kappa)
    if not (0.0 < kappa < 8.0):
        raise ValueError(f"kappa must lie in (0, 8), got {kappa}")
    a = 2.0 / kappa
    b = (6.0 - kappa) / (2.0 * kappa)
    c = (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa)
    return SleParams(kappa=kappa, a=a, b=b, central_charge=c, lam=2.0 * a * a)

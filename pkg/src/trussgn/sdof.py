"""Gauge equivalence for the linear single-degree-of-freedom oscillator.

The oscillator ``m y'' + c y' + k y = 0`` is over-parametrised: scaling
``(m, c, k) -> (alpha m, beta c, gamma k)`` with ``alpha * gamma == beta**2``
leaves the damping ratio, and therefore the shape of the free decay,
unchanged. The canonical representative of an equivalence class is the
single damping ratio of ``y'' + 2 zeta y' + y = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import ValidationError

GAUGE_RTOL = 1e-12


def _check_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise ValidationError(f"{name} must be a positive finite number, got {value!r}")


def _check_nonnegative(**values: float) -> None:
    for name, value in values.items():
        if not (value >= 0 and math.isfinite(value)):
            raise ValidationError(f"{name} must be a nonnegative finite number, got {value!r}")


@dataclass(frozen=True)
class SdofParameters:
    m: float
    c: float
    k: float

    def __post_init__(self):
        _check_positive(m=self.m, k=self.k)
        # c == 0 is the undamped limit
        _check_nonnegative(c=self.c)


@dataclass(frozen=True)
class ModalQuantities:
    zeta: float
    omega_n: float
    omega_d: float


@dataclass(frozen=True)
class GaugeElement:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        _check_positive(alpha=self.alpha, beta=self.beta, gamma=self.gamma)

    @property
    def physics_preserving(self) -> bool:
        """True when the scaling is induced by rescaling displacement and time."""
        return abs(self.alpha * self.gamma - self.beta**2) <= GAUGE_RTOL * self.beta**2

    def compose(self, other: "GaugeElement") -> "GaugeElement":
        return GaugeElement(self.alpha * other.alpha, self.beta * other.beta,
                            self.gamma * other.gamma)

    @classmethod
    def identity(cls) -> "GaugeElement":
        return cls(1.0, 1.0, 1.0)


def modal_quantities(p: SdofParameters) -> ModalQuantities:
    """Damping ratio, undamped and damped natural frequencies.

    Overdamped and critically damped systems report ``omega_d = 0``.
    """
    zeta = p.c / (2.0 * math.sqrt(p.m * p.k))
    omega_n = math.sqrt(p.k / p.m)
    omega_d = omega_n * math.sqrt(1.0 - zeta * zeta) if zeta < 1.0 else 0.0
    return ModalQuantities(zeta, omega_n, omega_d)


def apply_gauge(p: SdofParameters, g: GaugeElement) -> SdofParameters:
    return SdofParameters(p.m * g.alpha, p.c * g.beta, p.k * g.gamma)


def canonicalize(p: SdofParameters) -> float:
    """Return the damping ratio of the canonical form ``y'' + 2 zeta y' + y = 0``."""
    return p.c / (2.0 * math.sqrt(p.m * p.k))


def gauge_equivalent(p: SdofParameters, q: SdofParameters, rtol: float = GAUGE_RTOL) -> bool:
    """Whether two systems lie on the same orbit of the physics-preserving subgroup."""
    zp, zq = canonicalize(p), canonicalize(q)
    return abs(zp - zq) <= rtol * max(zp, zq)


def physics_preserving_gauge(alpha: float, beta: float) -> GaugeElement:
    """Complete ``(alpha, beta)`` to a gauge with ``alpha * gamma == beta**2``."""
    return GaugeElement(alpha, beta, beta * beta / alpha)

"""Unit conventions and conversions shared across the package.

Energies are frequencies in GHz (h = 1). Dynamics internally use angular
frequencies omega = 2*pi*f in rad/ns, and rates are reported in 1/us.
Temperatures may be given in millikelvin or directly as GHz; the conversion
uses k_B/h, under which 12 mK corresponds to 0.2500 GHz.
"""

from __future__ import annotations

import math

# k_B / h in GHz per millikelvin (CODATA: k_B/h = 20.836619123 GHz/K).
KB_GHZ_PER_MK = 0.020836619123

TWO_PI = 2.0 * math.pi

# nanoseconds per microsecond; rates in rad/ns convert to 1/us via this factor
NS_PER_US = 1000.0


def temperature_to_ghz(value: float, unit: str = "mK") -> float:
    """Convert a temperature to its energy scale in GHz (h = 1).

    unit is "mK" or "GHz". Values must be strictly positive.
    """
    if value <= 0:
        raise ValueError(f"temperature must be positive, got {value}")
    u = unit.strip().lower()
    if u == "mk":
        return value * KB_GHZ_PER_MK
    if u == "ghz":
        return value
    raise ValueError(f"unknown temperature unit {unit!r} (use 'mK' or 'GHz')")


def beta_energy(temperature: float, unit: str = "mK") -> float:
    """Inverse temperature in 1/GHz for Boltzmann factors on GHz energies."""
    return 1.0 / temperature_to_ghz(temperature, unit)


def beta_angular(temperature: float, unit: str = "mK") -> float:
    """Inverse temperature against angular frequencies (rad/ns).

    exp(-beta_angular * omega) with omega = 2*pi*f equals exp(-f/T_GHz).
    """
    return 1.0 / (TWO_PI * temperature_to_ghz(temperature, unit))

"""Desk-scale laboratory for transverse-field anneals with mid-anneal pauses.

Two engines over shared Ising instances and schedules: planar-rotor Monte
Carlo (standard and transverse-field-restricted proposals, time in sweeps)
and a truncated adiabatic master equation with an Ohmic thermal bath (time
in microseconds), plus relaxation-curve fitting and time-to-solution
analysis and a scan-oriented command line.
"""

__version__ = "0.1.0"

from .instance import (
    ClassicalSpectrum,
    IsingInstance,
    SpinConfig,
    all_config_energies,
    brute_force_spectrum,
    bundled_instance,
    ising_energy,
    load_instance,
)
from .schedule import (
    AnnealPlan,
    AnnealSchedule,
    eval_schedule,
    s_of_t,
    schedule_from_csv,
    schedule_to_csv,
    synthetic_schedule,
)

__all__ = [
    "__version__",
    "ClassicalSpectrum",
    "IsingInstance",
    "SpinConfig",
    "all_config_energies",
    "brute_force_spectrum",
    "bundled_instance",
    "ising_energy",
    "load_instance",
    "AnnealPlan",
    "AnnealSchedule",
    "eval_schedule",
    "s_of_t",
    "schedule_from_csv",
    "schedule_to_csv",
    "synthetic_schedule",
]

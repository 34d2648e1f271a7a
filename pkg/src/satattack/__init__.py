"""Simulation of the detector saturation attack on Gaussian-modulated CV-QKD.

Submodules: :mod:`~satattack.units` (shot-noise units, parameters, RNG),
:mod:`~satattack.detector`, :mod:`~satattack.protocol`,
:mod:`~satattack.attack`, :mod:`~satattack.keyrate`,
:mod:`~satattack.countermeasure` and the :mod:`~satattack.harness` behind the
``satattack`` command.
"""

from .attack import (
    AttackParams,
    InfeasibleError,
    attack_analytics,
    find_delta_for_target_xi,
    simulate_attack,
    solve_gain_for_unbiased_t,
)
from .countermeasure import apply_gaussian_postselect, build_histogram, optimize_gaussian_filter, radical_postselect
from .detector import DetectorCharacterization, fit_detector, simulate_lo_sweep
from .keyrate import holevo_bound, key_rate, null_key_threshold, optimize_va, system_at_distance
from .protocol import QuadratureBlock, estimate_parameters
from .units import REFERENCE_PROFILE, ChannelSpec, RngHandle, SystemParams

__version__ = "0.1.0"

__all__ = [
    "AttackParams",
    "ChannelSpec",
    "DetectorCharacterization",
    "InfeasibleError",
    "QuadratureBlock",
    "REFERENCE_PROFILE",
    "RngHandle",
    "SystemParams",
    "apply_gaussian_postselect",
    "attack_analytics",
    "build_histogram",
    "estimate_parameters",
    "find_delta_for_target_xi",
    "fit_detector",
    "holevo_bound",
    "key_rate",
    "null_key_threshold",
    "optimize_gaussian_filter",
    "optimize_va",
    "radical_postselect",
    "simulate_attack",
    "simulate_lo_sweep",
    "solve_gain_for_unbiased_t",
    "system_at_distance",
]

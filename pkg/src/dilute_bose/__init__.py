"""Numerical laboratory for the ground-state energy of a dilute Bose gas.

Units throughout are hbar = 2m = 1.
"""

from dilute_bose.potentials import RadialPotential, decompose, evaluate, scale
from dilute_bose.scattering import (
    BoundStateSuspected,
    ConditionReport,
    DegenerateTail,
    ScatteringError,
    ScatteringSolution,
    check_corollary2_narrowness,
    check_theorem2,
    energy_functional,
    scattering_length,
    solve_zero_energy,
)

__version__ = "0.1.0"

from dilute_bose.lower_bound import assemble_lemma1, covering_constants, default_c_constants  # noqa: E402
from dilute_bose.trial_state import ParticleConfiguration, build_trial, grad_log_psi, log_psi  # noqa: E402
from dilute_bose.vmc import estimate_upper_bound, merge_estimates  # noqa: E402

__all__ = [
    "RadialPotential",
    "evaluate",
    "scale",
    "decompose",
    "ScatteringSolution",
    "ConditionReport",
    "ScatteringError",
    "BoundStateSuspected",
    "DegenerateTail",
    "solve_zero_energy",
    "scattering_length",
    "energy_functional",
    "check_theorem2",
    "check_corollary2_narrowness",
    "build_trial",
    "ParticleConfiguration",
    "log_psi",
    "grad_log_psi",
    "estimate_upper_bound",
    "merge_estimates",
    "assemble_lemma1",
    "covering_constants",
    "default_c_constants",
]

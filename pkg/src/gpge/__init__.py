"""Gross-Pitaevskii energies for a two-level atom in a shaped laser beam.

Full two-component model, reduced gauge model and harmonic rotation model,
with an adiabatic decomposition harness tying the three together.
"""

__version__ = "0.1.0"

from .grid import (GridSpec, ScalarField, SpinorField, make_grid, deriv,
                   l2_inner, l2_norm, weighted_sobolev_norm, write_field,
                   read_field, BoundaryMassWarning)
from .model import (PhysicalParams, ScaledParams, PartitionPair, FSpec,
                    make_scaled, rescale_physical, snap_tau, bump_v,
                    potential_V, matrix_M, unitary_u0, connection_AX,
                    born_huang_W, omega, symbol_Pi0, symbol_Pi1, symbol_Pi2,
                    symbol_h_pm, symbol_h_bo)
from .energy import (EnergyBreakdown, energy_H, energy_tau, energy_eps,
                     apply_H_ellV, apply_H_minus_tau, apply_H_lin, gradient,
                     euler_lagrange, total_energy, to_rotation_frame,
                     from_rotation_frame, rotation_energy)
from .minimize import (Problem, MinimizeOptions, GroundState, minimize,
                       multistart)
from .adiabatic import (decompose, recompose, l4_invariance_check,
                        nagy_unitary, riesz_projection, weyl_quantize_1d,
                        moyal_check)
from .vortex import VortexSet, Vortex, find_vortices, match_vortices
from .verify import (spectrum_rpm, dense_ground_energy, distance_mod_phase,
                     sweep_tau, sweep_full, adiabatic_energy_check,
                     ims_identity_check, lojasiewicz_probe, SweepReport)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Sender-receiver cell networks coupled by diffusion in a ball.

Two models of the same system: the full PDE-ODE model with the signal field
on a lattice, and the reduced ODE network where the field is replaced by a
static gain matrix built from the ball's Green's function.
"""

__version__ = "0.1.0"

from .types import (CellKind, CellSpec, DomainSpec, ReceiverParams, SenderParams, SignalParams,
                    SystemSpec, Trajectory, ValidationReport, output_map, validate)
from .greens import (GainMatrix, GreenMatrix, SingularSystemError, assemble_gain, assemble_green,
                     green_pair, green_self, static_field)
from .kinetics import REFERENCE_PARAMS, receiver_rate, sender_rate, signal_rate
from .reduced import ReducedSystem, build_gain, interconnect, simulate_reduced, step_reduced
from .field import (FieldGrid, FullFieldModel, SolverError, build_grid, deposit_and_sample,
                    frozen_relaxation, simulate_full, step_full)
from .analysis import (classify_toggle, epsilon_sweep, fit_decay_rate, max_abs_error, time_scales,
                       ToggleState)
from .scenarios import place_shell, place_slab

__all__ = [name for name in dir() if not name.startswith("_")]

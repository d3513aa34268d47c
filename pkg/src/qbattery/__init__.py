"""Spin-chain quantum battery simulation under local dephasing noise."""

__version__ = "0.1.0"

from .channels import (ChannelEntry, ChannelSet, ConstantRate, JumpKind,
                       OhmicSchedule, is_non_markovian, jump_operator,
                       ohmic_dephasing_rate, ohmic_spectral_density, rate_at)
from .dynamics import (IntegratorConfig, IntegratorDivergenceError, Trajectory,
                       detect_steady_state, evolve, evolve_batch,
                       lindblad_generator)
from .observables import (EntanglementSeries, WorkSeries, entanglement_series,
                          instantaneous_power, log_negativity, reduced_state,
                          work)
from .spin_model import (DensityMatrix, NormalizedHamiltonian, PhaseLabel,
                         SpinChainParams, TwoQubitClosedFormParams,
                         build_hamiltonian, ground_state, normalize_spectrum,
                         phase_label, thermal_state,
                         two_qubit_closed_form_ground)

__all__ = [name for name in dir() if not name.startswith("_")]

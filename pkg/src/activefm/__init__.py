"""activefm: spectral-measure simulation of active-fluid turbulence.

Velocity fields are finite sums of plane waves (atomic Fourier
measures); the package provides exact atom algebra, the model's operator
symbols and stability classification, exponential-integrator evolution
on a truncated wavevector lattice, and an independent pseudospectral
oracle on a periodic box.
"""

__version__ = "0.1.0"

from .errors import (ActiveFMError, AtomCapError, ConfigError, DimensionMismatchError,
                     ExperimentError, InvalidStateError, LatticeError, NumericError,
                     SingularSymbolError)
from .measures import (Atom, SpectralMeasure, combine, evaluate, fm_norm, hermitian_pair,
                       multiply, normalize, read_snapshots, restrict, scale, write_snapshots,
                       zero_measure)
from .symbols import (CriticalBand, ModelParams, SectorialityReport, StabilityVerdict,
                      SteadyState, Witness, classify_disordered, classify_ordered,
                      critical_wavenumbers, dispersion_disordered, helmholtz_symbol,
                      linearized_symbol, maxreg_constant_check, phi_operator,
                      project_solenoidal, propagator, sectoriality_scan)
from .dynamics import (DiagnosticsRecord, GrowthResult, ManufacturedSolution, Outcome,
                       PressureRecovery, SimConfig, Trajectory, TruncationPolicy,
                       diagnostics, evolve, growth_rate_experiment, manufactured_forcing,
                       nonlinearity, pair_seed, random_real_solenoidal, recover_pressure,
                       steady_state_transform, step)
from .gridoracle import (GridField, GridSpec, brute_force_product, grid_step, lift,
                         nonlinear_rhs, project_divergence_free, to_measure)

__all__ = [name for name in dir() if not name.startswith("_")]

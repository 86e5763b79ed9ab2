"""Exact non-Markovian dynamics of two bosonic modes coupled to Ohmic-type reservoirs."""
from .boundstates import (BoundState, SystemParams, critical_coupling, critical_coupling_sweep,
                          eigenmodes, find_bound_states, numerical_residue, residue)
from .errors import (BracketError, DimensionError, QuadratureError, SingularPropagatorError,
                     StepSizeError)
from .mastereq import CoefficientTrajectory, coefficients, evolve_moments
from .oracle import discretize, exact_u, exact_v
from .propagator import (GreenTrajectory, oscillation_frequency, u_localized, u_spectral, u_volterra,
                         v_from_u, v_volterra)
from .spectral import BathParams, lamb_shift, memory_kernel, noise_kernel, ohmic_density, self_energy

__version__ = "0.1.0"

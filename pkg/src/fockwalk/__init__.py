"""Selective Fock-lattice recurrences for Gaussian photonic circuits."""

from fockwalk.gaussian_core import (
    CircuitSpec,
    ComplexGaussianState,
    GaussianData,
    GlobalPhotons,
    Representation,
    ValidationError,
    build_complex_state,
    to_density_params,
    to_statevector_params,
)
from fockwalk.lattice import GlobalWeight, Local, ProbabilityMass, SchedulerError
from fockwalk.vanilla import fill_full

__version__ = "0.1.0"

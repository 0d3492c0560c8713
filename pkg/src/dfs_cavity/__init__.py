"""Two cavity modes sharing a reservoir: master equation, exact propagator,
fringe experiment and decoherence-free subspaces."""

from .core import (
    DegenerateStateError,
    DiagnosticsError,
    InvalidDimensionError,
    SystemParams,
    TruncationError,
    TwoModeDensityMatrix,
    bell_state,
    pure_state,
    vacuum,
)
from .experiment import ExperimentConfig, pe_diagonal, pe_dissipative, pe_ideal, run_protocol
from .generator import NonPhysicalWarning, build_liouvillian
from .oracle import IntegratorConfig, integrate
from .propagator import (
    SingularFactorizationError,
    compute_coefficients,
    factorization_params,
    propagate_analytic,
    single_photon_evolution,
)

__version__ = "0.1.0"

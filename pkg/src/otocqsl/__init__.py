"""Exact OTOC, Redfield dynamics and quantum-speed-limit bounds for Ising chains."""
from .params import ChainParams, ParameterError, TimeGrid
from .spinchain import (
    build_chain_hamiltonian, decompose, partial_trace, site_operator,
)
from .exact_dynamics import (
    OtocSeries, exact_average_otoc, haar_average_otoc_mc, initial_state, propagate,
    renyi2_entropy, thermal_state,
)
from .bath import (
    AfmDispersion, CorrelatorKernel, analytic_afm_kernel, heisenberg_operator,
    nonstationary_kernel, stationary_kernel,
)
from .redfield import (
    BoundSeries, SystemTrajectory, integrate_redfield, liouvillian_matrix, qsl_bounds,
    redfield_rhs, scrambling_rate, spectral_norm, system_trajectory,
)

__version__ = "0.1.0"

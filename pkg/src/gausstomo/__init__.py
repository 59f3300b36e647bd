"""Gaussian tomography of free-fermion correlations from occupation snapshots."""
from .errors import InvalidArgumentError, NumericalError, RankDeficientError, ResourceError, TomographyError
from .lattice import Lattice, build_lattice, chain, chebyshev_patch, expansion_layout, grid, sublattice_sign
from .gaussian import (
    build_hamiltonian,
    direct_sum,
    evolve_correlations,
    hermitian_to_vec,
    propagator,
    random_gaussian_state,
    vec_to_hermitian,
)
from .ensemble import QuenchEnsemble, QuenchParams, global_scheme_ensemble, sample_local_ensemble
from .tomo_map import (
    InverseBundle,
    MeasurementMap,
    default_inner_radius,
    forward_map_single,
    noise_matrix,
    optimal_inverse,
    pseudo_inverse,
    rank_check,
    stack_forward,
    truncated_local_map,
)
from .complexity import predicted_variance, samples_required, sigma_avg, sigma_observable, sigma_worst
from .simulator import (
    EstimateResult,
    ShotDataset,
    estimate_correlation_matrix,
    estimate_observable,
    run_experiment,
    sample_occupations,
    void_probability,
)

__version__ = "0.1.0"

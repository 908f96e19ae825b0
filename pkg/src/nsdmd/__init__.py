"""Data-driven approximation of Koopman and Perron-Frobenius operators.

The package fits finite-dimensional transfer operator matrices from snapshot
pairs of a dynamical system.  Alongside the classical least-squares fits (DMD,
EDMD) it provides convex constrained fits that preserve the operators'
positivity and Markov structure, spectral post-processing (eigenfunctions,
invariant densities), a set-oriented box-partition reference method, and
Lyapunov-measure stability certificates.
"""

from .systems import (
    DivergenceError,
    VectorField,
    DiscreteMap,
    SnapshotSet,
    integrate,
    builtin_system,
    sample_trajectories,
    sample_snapshots,
    save_snapshots,
    load_snapshots,
)
from .dictionary import (
    Dictionary,
    GramPair,
    gaussian_rbf,
    indicator_boxes,
    coordinates,
    monomials,
    eval_dictionary,
    kmeans_centers,
    gram_matrices,
    lambda_matrix,
    save_dictionary,
    load_dictionary,
)
from .edmd import TransferModel, apply_similarity, fit_edmd, fit_dmd, save_model, load_model
from .nsdmd import (
    NsdmdConfig,
    FeasibilityReport,
    project_simplex_rows,
    fit_nsdmd,
    check_feasibility,
)
from .spectral import (
    SpectralError,
    Spectrum,
    GridSpec,
    EigenfunctionGrid,
    eig_sorted,
    koopman_eigenfunction,
    pf_eigenfunction,
    invariant_density,
    eigenfunction_grid,
    save_grid,
    load_grid,
)
from .set_oriented import (
    BoxPartition,
    UlamMatrix,
    ulam_from_trajectory,
    ulam_from_sampling,
    stationary_density,
    compare_densities,
    save_ulam,
    load_ulam,
)
from .lyapunov import LyapunovResult, identify_attractor, lyapunov_measure, save_lyapunov, load_lyapunov
from .config import ConfigError, ExperimentConfig, load_config, save_config

__version__ = "0.1.0"

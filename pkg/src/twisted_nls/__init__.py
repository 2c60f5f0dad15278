"""Spectral simulator and estimate-verification suite for the nonlinear
Schrodinger equation of the twisted Laplacian (planar magnetic NLS with a
constant magnetic field) on C^n."""

__version__ = "0.1.0"

from .grid import (
    Grid,
    GridFunction,
    GridMismatchError,
    inner_product,
    load_grid_function,
    lp_norm,
    make_grid,
    quadrature,
    save_grid_function,
)
from .hermite import (
    HermiteTable,
    fourier_wigner,
    hermite_eval,
    laguerre_eval,
    phi_k,
    special_hermite,
)
from .twisted import (
    SobolevReport,
    SpaceTimeFunction,
    apply_Lj,
    apply_Mj,
    apply_twisted_laplacian,
    gradient_abs_inequality,
    mixed_norm,
    mixed_sobolev_norm,
    sobolev_norm,
    twisted_convolve,
)
from .spectral import (
    AdmissiblePair,
    RepresentabilityError,
    SpectralCoeffs,
    analyze,
    basis_for,
    is_admissible,
    project_k,
    propagate_eigen,
    propagate_kernel,
    synthesize,
)
from .nls import (
    ContinuationReport,
    NonContractionError,
    NonlinearitySpec,
    SolutionReport,
    SolverConfig,
    TimeStepTooLarge,
    continue_maximal,
    duhamel_apply,
    estimate_T0,
    eval_G,
    eval_SG,
    picard_solve,
    split_step_solve,
    stability_experiment,
)
from .verify import (
    EstimateReport,
    calibrate_strichartz_constant,
    check_commutation,
    check_dispersive,
    check_equivalence_residual,
    check_nonlinearity_estimates,
    check_retarded,
    check_strichartz_homogeneous,
    check_strichartz_inhomogeneous,
)

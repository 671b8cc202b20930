"""Numerical laboratory for Delta u = u^-p + f and its rupture-set geometry."""

from .field import (
    BallRegion,
    Grid,
    ScalarField,
    ball_integral,
    centered_grid,
    distance_transform,
    gradient,
    interpolate,
    laplacian,
    load_field,
    save_field,
    sublevel_measure,
)
from .exact import HomogeneousSolution, OdeSolution, homogeneous_field, ode_profile
from .density import (
    Cutoff,
    DensityProfile,
    FunctionalValues,
    density_profile,
    evaluate_functionals,
    hd_identity_check,
    homogeneity_defect,
    pinch_W,
    rupture_classifier,
)
from .solver import (
    SolveResult,
    SolverConfig,
    energy,
    evolve_parabolic,
    gradient_tail,
    morrey_seminorm,
    pde_residual,
    solve_elliptic,
)
from .symmetry import blow_up, fit_k_symmetric, quantitative_stratum, rupture_points, scale_forcing, symmetry_defect
from .gmt import (
    AtomicMeasure,
    AffineSubspace,
    best_fit_affine,
    displacement,
    displacement_bruteforce,
    effective_span,
    minkowski_content,
    moment_spectrum,
    rectifiability_integral,
    reifenberg_check,
    vitali_cover,
)

__version__ = "0.1.0"

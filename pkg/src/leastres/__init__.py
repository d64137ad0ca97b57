"""Least-resistance shape optimization over convex bodies.

Convex grid functions and polytopes, pressure functionals, nose-stretch
variation families with their quadratic resistance law, a convexity-
constrained minimizer, and structural verification of candidate
solutions.
"""

from .errors import (
    CoverageError,
    DegenerateInputError,
    FitError,
    LeastResError,
    NonSmoothModelError,
    PreconditionError,
    ResolutionError,
    ValidityError,
)
from .geometry import (
    Domain,
    GridFn,
    PolyBody,
    Segment3,
    body_to_fn,
    conv_with_segment,
    epigraph_body,
    extreme_vertices,
    homothety,
    lower_convex_envelope,
    minkowski_blend,
    shrink_family_negative,
    singular_points,
    support_function,
)
from .pressure import (
    HessianClass,
    PressureModel,
    RegionMask,
    classify_hessian,
    eval_F,
    eval_F_body,
    partition_domain,
    pressure_by_name,
)
from .toy import ConvexFn1D, ToyFamily, resistance_1d, toy_family_at, toy_slope_identity
from .stretch import (
    ProfileW,
    QuadCoeffs,
    QuadFit,
    StretchSite,
    analytic_coeffs,
    family_at,
    fit_quadratic,
    improvement_step,
    prepare_site,
    profile_w,
    sweep_resistance,
)
from .solver import (
    RadialSolution,
    Solve2DResult,
    SolveConfig,
    VerificationReport,
    VerifyTolerances,
    reconstruct_from_singular,
    solve_2d,
    solve_radial_1d,
    verify_solution,
)

__version__ = "0.1.0"

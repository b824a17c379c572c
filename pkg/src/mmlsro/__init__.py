"""Riemannian optimization over sampled manifolds via MMLS projection."""

from .errors import (
    EmptySupport,
    IllConditioned,
    InitialProjectionFailure,
    InsufficientSupport,
    MissingValues,
    MMLSError,
    NoConvergence,
    NonDescentDirection,
    RankDeficient,
    StepTooSmall,
)
from .func_approx import ScalarPoly, approx_value_and_grad, fit_scalar_poly
from .geometry import (
    GeometryConfig,
    TangentBasis,
    approx_riemannian_grad,
    approx_riemannian_grad_sampled,
    orth_project,
    retract,
    vector_transport,
)
from .mmls import FrameConfig, LocalFrame, Projection, VectorPoly, local_frame, mmls_project, monomial_basis
from .optimize import (
    Problem,
    SolverOptions,
    Trace,
    armijo_backtracking,
    conjugate_gradient,
    gradient_descent,
)
from .point_cloud import (
    SampleSet,
    add_noise,
    build_cloud,
    estimate_fill_distance,
    neighbors_within,
    sample_manifold,
)
from .weights import WeightSpec, theta

__version__ = "0.1.0"

"""Interval reachability for nonlinear ODEs via lifted embedding systems.

The pipeline: lift the system to a higher dimension (``lifting``), build
the lifted dynamics symbolically (``exprgraph``), integrate the facewise
embedding system (``embedding``) while tightening every face with an
interval refinement operator (``refinement``), and validate the resulting
tube against Monte-Carlo sampled true trajectories.
"""

from .embedding import (
    BoxSchedule,
    EmbeddingState,
    EmbeddingTrajectory,
    bound_size,
    embedding_rhs,
    integrate,
    monte_carlo_validate,
    trajectory_to_csv,
)
from .exprgraph import (
    DynamicsSystem,
    build_lifted,
    eval_natural_inclusion,
    eval_point,
    parse_dynamics,
)
from .intervals import Box, Interval, interval_hull_matvec
from .lifting import (
    Lifting,
    RefinementMatrix,
    expected_row_count,
    make_lifting,
    null_basis,
    subspace_sample_matrix,
    svd_null_basis,
)
from .models import (
    ModelSpec,
    ObstacleSpec,
    check_obstacle_clearance,
    enzyme,
    platoon,
    vanderpol,
)
from .refinement import (
    IdentityRefiner,
    LpRefiner,
    RefinementOutcome,
    SamplingRefiner,
    refine_lp,
    refine_sampling,
)
from .simplex import LpResult, lp_solve

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BoxSchedule",
    "DynamicsSystem",
    "EmbeddingState",
    "EmbeddingTrajectory",
    "IdentityRefiner",
    "Interval",
    "Lifting",
    "LpRefiner",
    "LpResult",
    "ModelSpec",
    "ObstacleSpec",
    "RefinementMatrix",
    "RefinementOutcome",
    "SamplingRefiner",
    "bound_size",
    "build_lifted",
    "check_obstacle_clearance",
    "embedding_rhs",
    "enzyme",
    "eval_natural_inclusion",
    "eval_point",
    "expected_row_count",
    "integrate",
    "interval_hull_matvec",
    "lp_solve",
    "make_lifting",
    "monte_carlo_validate",
    "null_basis",
    "parse_dynamics",
    "platoon",
    "refine_lp",
    "refine_sampling",
    "subspace_sample_matrix",
    "svd_null_basis",
    "trajectory_to_csv",
    "vanderpol",
]

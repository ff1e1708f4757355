"""Sensitivity bounds for transferring network treatment effects.

Transfers an average total treatment effect from a source sample with an
observed network to a target population whose network is unknown, by
bounding the effect over a Wasserstein ball of candidate degree
distributions and bootstrapping the bound estimates.
"""

from .bootstrap import (
    BootKernel,
    BoundCI,
    BoundCIEntry,
    DistanceModel,
    bandwidth_rule,
    bootstrap_bounds,
    build_kernel,
    draw_eta,
    path_weighted_distance,
    truncated_quadratic,
)
from .bounds import (
    BallSpec,
    ContrastVector,
    FaceSet,
    TargetSpec,
    atte_point,
    bound_profile,
    bound_with_shape,
    dual_upper_bound,
    enumerate_face,
    lower_bound,
    upper_bound,
)
from .distributions import (
    DiscreteDist,
    TransportPlan,
    align_supports,
    degree_dist_conditional,
    optimal_plan,
    wasserstein,
)
from .errors import (
    ConfigError,
    DataError,
    EmptyCellError,
    IndefiniteKernelError,
    InfeasibleShapeError,
    NetshiftError,
    NonGraphicError,
    NumericalError,
    RankDeficiencyError,
    SolverError,
)
from .graphs import (
    chung_lu,
    is_graphic,
    mahalanobis_distances,
    nearest_neighbor_graph,
    realize,
    shortest_paths,
)
from .regression import (
    BasisSpec,
    SourceDataset,
    VCFit,
    contrast_vector,
    cross_validate_bandwidth,
    exposure,
    fit_vc,
    kernel_weight,
)
from .simulation import (
    CoverageReport,
    DGPConfig,
    EstimatorVariant,
    TruthRecord,
    coverage_experiment,
    simulate_once,
    true_bounds,
    true_contrast,
)

__version__ = "0.1.0"

__all__ = [
    "BallSpec",
    "BasisSpec",
    "BootKernel",
    "BoundCI",
    "BoundCIEntry",
    "ContrastVector",
    "CoverageReport",
    "DGPConfig",
    "DiscreteDist",
    "DistanceModel",
    "EstimatorVariant",
    "FaceSet",
    "SourceDataset",
    "TargetSpec",
    "TransportPlan",
    "TruthRecord",
    "VCFit",
    "align_supports",
    "atte_point",
    "bandwidth_rule",
    "bootstrap_bounds",
    "bound_profile",
    "bound_with_shape",
    "build_kernel",
    "chung_lu",
    "contrast_vector",
    "coverage_experiment",
    "cross_validate_bandwidth",
    "degree_dist_conditional",
    "draw_eta",
    "dual_upper_bound",
    "enumerate_face",
    "exposure",
    "fit_vc",
    "is_graphic",
    "kernel_weight",
    "lower_bound",
    "mahalanobis_distances",
    "nearest_neighbor_graph",
    "optimal_plan",
    "path_weighted_distance",
    "realize",
    "shortest_paths",
    "simulate_once",
    "true_bounds",
    "true_contrast",
    "truncated_quadratic",
    "upper_bound",
    "wasserstein",
    "ConfigError",
    "DataError",
    "EmptyCellError",
    "IndefiniteKernelError",
    "InfeasibleShapeError",
    "NetshiftError",
    "NonGraphicError",
    "NumericalError",
    "RankDeficiencyError",
    "SolverError",
]

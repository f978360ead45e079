"""Convex multiclass segmentation on weighted graphs.

Builds k-NN graphs over point sets, equips them with a discrete calculus,
and labels nodes by minimizing assignment costs plus weighted graph total
variation through an augmented-Lagrangian max-flow solver — with optional
class-size constraints, point-cloud region terms, and a fully unsupervised
two-class mode driven by the graph spectrum.
"""

from .calculus import (
    CalculusParams,
    divergence,
    divergence_operator,
    gradient,
    inner_product_edge,
    inner_product_vertex,
    laplacian_apply,
    total_variation,
)
from .errors import (
    ConfigError,
    DataError,
    GraphsegError,
    InfeasibleSizeError,
    SolverDivergenceError,
    SpectralConvergenceError,
)
from .graph import (
    Graph,
    WeightSpec,
    boost_supervised_edges,
    build_knn_graph,
    pointcloud_weights,
)
from .solver import (
    RegionCosts,
    SizeSpec,
    SolverParams,
    SolverResult,
    assemble_costs,
    binary_difference,
    brute_force_oracle,
    dual_energy,
    primal_energy,
    solve,
    threshold_dual,
    threshold_rounding,
)

__version__ = "0.1.0"

__all__ = [
    "CalculusParams", "ConfigError", "DataError", "Graph", "GraphsegError",
    "InfeasibleSizeError", "RegionCosts", "SizeSpec", "SolverDivergenceError",
    "SolverParams", "SolverResult", "SpectralConvergenceError", "WeightSpec",
    "assemble_costs", "binary_difference", "boost_supervised_edges",
    "brute_force_oracle", "build_knn_graph", "divergence",
    "divergence_operator", "dual_energy", "gradient", "inner_product_edge",
    "inner_product_vertex", "laplacian_apply", "pointcloud_weights",
    "primal_energy", "solve", "threshold_dual", "threshold_rounding",
    "total_variation",
]

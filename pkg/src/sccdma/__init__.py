"""Density-evolution analysis of spatially coupled CDMA ensembles.

Builds regular and small-world coupling graphs, predicts per-position
BER through the coupled density-evolution recursion, estimates BP
thresholds by bisection, and searches ensembles for instances that
converge in few iterations.
"""

from .coupling import (
    BaseMatrix,
    CouplingGraph,
    GraphError,
    GraphParseError,
    Provenance,
    TrainingAssignment,
    assign_training,
    average_load,
    cluster_of,
    make_regular,
    parse_graph,
    serialize_graph,
    sw_rewire,
    to_base_matrix,
)
from .density_evolution import (
    MMSE_CUTOFF,
    DeState,
    DeTrajectory,
    MmseTable,
    SystemScenario,
    ber_of,
    de_step,
    initial_state,
    mmse_bpsk,
    qfunc,
    run_de,
    sigma2_from_db,
    write_summary_csv,
    write_trajectory_csv,
)
from .search import (
    EnsembleSpec,
    InstanceScore,
    SearchReport,
    ensemble_search,
    instance_seed,
    sample_instance,
    score_instance,
    write_search_csv,
)
from .threshold import (
    ALPHA_MAP_10DB,
    DEFAULT_SUCCESS_BER,
    BracketError,
    DeEvaluation,
    ThresholdQuery,
    ThresholdResult,
    bp_threshold,
    de_success,
    scalar_fixed_points,
    write_evaluation_log_csv,
    write_threshold_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_MAP_10DB",
    "BaseMatrix",
    "CouplingGraph",
    "GraphError",
    "GraphParseError",
    "Provenance",
    "TrainingAssignment",
    "assign_training",
    "average_load",
    "cluster_of",
    "make_regular",
    "parse_graph",
    "serialize_graph",
    "sw_rewire",
    "to_base_matrix",
    "MMSE_CUTOFF",
    "DeState",
    "DeTrajectory",
    "MmseTable",
    "SystemScenario",
    "ber_of",
    "de_step",
    "initial_state",
    "mmse_bpsk",
    "qfunc",
    "run_de",
    "sigma2_from_db",
    "write_summary_csv",
    "write_trajectory_csv",
    "EnsembleSpec",
    "InstanceScore",
    "SearchReport",
    "ensemble_search",
    "instance_seed",
    "sample_instance",
    "score_instance",
    "write_search_csv",
    "DEFAULT_SUCCESS_BER",
    "BracketError",
    "DeEvaluation",
    "ThresholdQuery",
    "ThresholdResult",
    "bp_threshold",
    "de_success",
    "scalar_fixed_points",
    "write_evaluation_log_csv",
    "write_threshold_csv",
    "__version__",
]

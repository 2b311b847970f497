"""conflictseq: conflict-state sequence analysis over gridded event data.

Turns georeferenced violent-event records into per-cell annual state
sequences, compares them with optimal-matching edit distances, clusters the
trajectories with Ward linkage, and characterizes the resulting types with
Markov transition statistics, mean violence stopping times, and multitype
join-count spatial tests.
"""

__version__ = "0.1.0"

from .chains import (
    HittingTimes,
    TrajectorySummary,
    cluster_transition_matrix,
    hitting_times,
    mvst,
    start_distribution,
    summary_table,
    trajectory_summary,
)
from .cluster import ClusterAssignment, Dendrogram, cut, to_newick, ward_linkage
from .config import ConfigError, PipelineConfig, load_config
from .grid import CellId, GridSpec, assign_cell
from .ingest import (
    DEFAULT_FILTER,
    DEFAULT_SPAN,
    EventRecord,
    EventSet,
    ParseError,
    parse_events,
)
from .om import DistanceMatrix, om_distance, pairwise_distances
from .scdi import (
    State,
    StateField,
    VIOLENT_STATES,
    build_state_field,
    classify_cell_year,
    intensity_threshold,
    nearest_neighbor_index,
)
from .sequences import (
    CostMatrix,
    SequenceSet,
    StateSequence,
    TransitionMatrix,
    empirical_transition_matrix,
    extract_sequences,
    substitution_costs,
    uniform_costs,
)
from .spatial import (
    JoinCountReport,
    SpatialWeights,
    build_weights,
    join_counts,
    permutation_reference,
)
from .synthetic import (
    Emission,
    Region,
    ScenarioConfig,
    SyntheticResult,
    generate_synthetic,
    scenario_from_dict,
    simulate_scenario,
)

__all__ = [
    "__version__",
    "CellId",
    "GridSpec",
    "assign_cell",
    "EventRecord",
    "EventSet",
    "ParseError",
    "parse_events",
    "DEFAULT_FILTER",
    "DEFAULT_SPAN",
    "State",
    "VIOLENT_STATES",
    "StateField",
    "intensity_threshold",
    "nearest_neighbor_index",
    "classify_cell_year",
    "build_state_field",
    "StateSequence",
    "SequenceSet",
    "extract_sequences",
    "TransitionMatrix",
    "empirical_transition_matrix",
    "CostMatrix",
    "substitution_costs",
    "uniform_costs",
    "DistanceMatrix",
    "om_distance",
    "pairwise_distances",
    "Dendrogram",
    "ward_linkage",
    "ClusterAssignment",
    "cut",
    "to_newick",
    "HittingTimes",
    "hitting_times",
    "mvst",
    "start_distribution",
    "cluster_transition_matrix",
    "TrajectorySummary",
    "trajectory_summary",
    "summary_table",
    "SpatialWeights",
    "build_weights",
    "JoinCountReport",
    "join_counts",
    "permutation_reference",
    "Emission",
    "Region",
    "ScenarioConfig",
    "SyntheticResult",
    "generate_synthetic",
    "simulate_scenario",
    "scenario_from_dict",
    "PipelineConfig",
    "ConfigError",
    "load_config",
]

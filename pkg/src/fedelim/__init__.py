"""Phased-elimination bandit optimization over hierarchical partitions.

The package simulates a server and M clients that optimize shifted copies of
a benchmark objective from noisy point evaluations.  A collaborative stage
eliminates cells on the client average; a personalized stage then re-checks
every cell against each client's own objective, so no region is discarded
for a client until it has failed both tests.
"""
from .fedcore import (
    ClientReport,
    ConfParams,
    NodeStats,
    ProtocolFault,
    ServerBroadcast,
    SmoothParams,
    confidence_bound,
    eliminate,
    merge_global,
    quota,
    select_best,
    tau,
    transition_depth,
)
from .harness import (
    AggregateMetrics,
    ConfigError,
    ExperimentConfig,
    RunMetrics,
    VARIANTS,
    run,
    run_many,
    variant_schedule,
)
from .objectives import (
    BaseObjective,
    NoiseModel,
    ObjectiveSuite,
    OBJECTIVE_NAMES,
    OracleBudget,
    OracleFailure,
    OracleResult,
    eval_base,
    make_base,
    make_suite,
    near_optimality_profile,
    optimality_difference_count,
    oracle_optimum,
    profile_ladder,
)
from .partition import (
    ROOT,
    BoxDomain,
    NodeId,
    PartitionSpec,
    cell,
    children,
    node_containing,
    parent,
    representative,
)
from .protocol import (
    CommRound,
    EliminationEvent,
    PullLog,
    PullRecord,
    Stage,
    run_protocol,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateMetrics",
    "BaseObjective",
    "BoxDomain",
    "ClientReport",
    "CommRound",
    "ConfParams",
    "ConfigError",
    "EliminationEvent",
    "ExperimentConfig",
    "NodeId",
    "NodeStats",
    "NoiseModel",
    "OBJECTIVE_NAMES",
    "ObjectiveSuite",
    "OracleBudget",
    "OracleFailure",
    "OracleResult",
    "PartitionSpec",
    "ProtocolFault",
    "PullLog",
    "PullRecord",
    "ROOT",
    "RunMetrics",
    "ServerBroadcast",
    "SmoothParams",
    "Stage",
    "VARIANTS",
    "cell",
    "children",
    "confidence_bound",
    "eliminate",
    "eval_base",
    "make_base",
    "make_suite",
    "merge_global",
    "near_optimality_profile",
    "node_containing",
    "optimality_difference_count",
    "oracle_optimum",
    "parent",
    "profile_ladder",
    "quota",
    "representative",
    "run",
    "run_many",
    "run_protocol",
    "select_best",
    "tau",
    "transition_depth",
    "variant_schedule",
]

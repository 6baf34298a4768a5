"""Latent dependency forest models for discrete data.

The joint weight of an assignment is the total weight of all spanning
trees of its pairwise-dependency graph, computed in O(n^3) via the
matrix-tree theorem; parameters are learned with EM from edge posteriors
and queries are answered with Gibbs or tree-augmented MCMC.
"""

from .dataio import (
    Dataset,
    DatasetFormatError,
    GroundTruthNet,
    ModelFormatError,
    fixture_net,
    forward_sample,
    load_dataset,
    load_model,
    load_schema,
    save_dataset,
    save_model,
    save_schema,
)
from .evaluation import (
    EvalReport,
    IndependenceBaseline,
    evaluate,
    evaluate_baseline,
    fit_independence_baseline,
    format_report,
    make_query_instances,
)
from .learning import (
    Smoothing,
    SufficientStats,
    TrainConfig,
    data_log_likelihood,
    e_step,
    m_step,
    train_em,
)
from .matrix_tree import (
    AssignmentGraph,
    LogPartition,
    NumericConsistencyError,
    SingularLaplacianError,
    assignment_graph,
    build_laplacian,
    edge_posteriors,
    log_partition,
    unnormalized_log_joint,
)
from .model import (
    MISSING,
    ROOT,
    LdfmModel,
    NodeKey,
    Variant,
    VariableSchema,
    lookup_weight,
    make_uniform_model,
    validate_model,
)
from .oracle import (
    brute_edge_posteriors,
    brute_log_partition,
    brute_unnormalized_joint,
    brute_valid_normalizer,
    enumerate_rooted_trees,
    exact_conditional,
)
from .sampling import (
    ChainState,
    QueryInstance,
    SamplerConfig,
    SamplerKind,
    TreeProposal,
    estimate_cll,
    estimate_cmll,
    gibbs_sweep,
    run_chain,
    tree_augmented_step,
)

__all__ = [
    "AssignmentGraph",
    "ChainState",
    "Dataset",
    "DatasetFormatError",
    "EvalReport",
    "GroundTruthNet",
    "IndependenceBaseline",
    "LdfmModel",
    "LogPartition",
    "MISSING",
    "ModelFormatError",
    "NodeKey",
    "NumericConsistencyError",
    "QueryInstance",
    "ROOT",
    "SamplerConfig",
    "SamplerKind",
    "SingularLaplacianError",
    "Smoothing",
    "SufficientStats",
    "TrainConfig",
    "TreeProposal",
    "VariableSchema",
    "Variant",
    "assignment_graph",
    "brute_edge_posteriors",
    "brute_log_partition",
    "brute_unnormalized_joint",
    "brute_valid_normalizer",
    "build_laplacian",
    "data_log_likelihood",
    "e_step",
    "edge_posteriors",
    "enumerate_rooted_trees",
    "estimate_cll",
    "estimate_cmll",
    "evaluate",
    "evaluate_baseline",
    "exact_conditional",
    "fit_independence_baseline",
    "fixture_net",
    "format_report",
    "forward_sample",
    "gibbs_sweep",
    "load_dataset",
    "load_model",
    "load_schema",
    "log_partition",
    "lookup_weight",
    "m_step",
    "make_query_instances",
    "make_uniform_model",
    "run_chain",
    "save_dataset",
    "save_model",
    "save_schema",
    "train_em",
    "tree_augmented_step",
    "unnormalized_log_joint",
    "validate_model",
]

__version__ = "0.1.0"

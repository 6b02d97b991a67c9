"""Discovery of functional timing side channels from execution traces.

The package fits one timing curve per secret over the public input, groups
curves whose derivative p-norm distance stays within an indistinguishability
bound, explains the groups with a decision tree over program-internal
counters, and simulates both mitigation schemes and the offset-robust
remote attacker.
"""

from .attacker import (
    MatchResult,
    RemoteObservation,
    kd_bound,
    leakage_bits,
    match_remote,
)
from .benchmarks import (
    BENCH_KINDS,
    BRANCH_THRESHOLDS,
    BenchModel,
    default_branch_secrets,
    default_grid,
    default_jetty_secrets,
    generate,
)
from .clustering import (
    ClusterResult,
    cannot_links,
    cluster_curves,
    constrained_kmeans,
    fd_clustering,
    greedy_clique_bound,
    hierarchical_cluster,
    nonfunctional_cluster,
)
from .errors import (
    AuxDeterminismError,
    BasisError,
    DimensionError,
    DomainError,
    GenerationError,
    InfeasibleClusteringError,
    LeakscopeError,
    ParseError,
    PipelineStageError,
    ThreatModelError,
    UnderDeterminedError,
    UnsupportedNormError,
)
from .fda import (
    BasisSpec,
    DistanceSpec,
    FunctionalCurve,
    curve_from_record,
    default_basis,
    default_n_basis,
    distance,
    distance_matrix,
    eval_curve,
    fit_curve,
    make_basis,
)
from .mitigation import (
    DoubleScheme,
    MitigationScheme,
    double_scheme,
    mitigate_traces,
    quantize,
)
from .pipeline import (
    NONINTERFERENCE_NOTE,
    PipelineConfig,
    PipelineReport,
    render_json,
    run_pipeline,
    write_bundle,
)
from .traces import (
    ExecutionTrace,
    HyperTrace,
    TraceSet,
    build_hypertraces,
    load_traces,
    save_traces,
)
from .tree import (
    AuxFeature,
    DecisionTree,
    Discriminant,
    LabeledRow,
    cross_validate,
    discriminant_error,
    label_aux,
    learn_tree,
    predict,
    render_dot,
    render_text,
)

__version__ = "0.1.0"

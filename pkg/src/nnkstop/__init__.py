"""Channel-wise generalization estimates from non-negative kernel
regression neighborhoods, and a progressive early-stopping controller
that needs no validation set.

The pieces, bottom up: similarity kernels (:mod:`nnkstop.kernels`),
sparse non-negative neighborhoods over KNN candidates
(:mod:`nnkstop.nnk`), leave-one-out label-interpolation risk per channel
(:mod:`nnkstop.interpolation`), channel-importance diagnostics
(:mod:`nnkstop.diagnostics`), the patience state machine
(:mod:`nnkstop.controller`), and the snapshot/report/serve plumbing
(:mod:`nnkstop.snapshot`, :mod:`nnkstop.reports`, :mod:`nnkstop.serve`).
"""

from .controller import (
    ContractError,
    ControllerConfig,
    Decision,
    StoppingState,
    active_channels,
    controller_new,
    observe,
    should_evaluate,
)
from .diagnostics import (
    ImportanceMetrics,
    importance_from_reports,
    neighborhood_stats,
    rank_channels,
    zero_stats,
)
from .interpolation import (
    FULL_LAYER,
    ChannelLooReport,
    EvalOptions,
    LabelSet,
    classify,
    empirical_risk,
    loo_risk_all_channels,
    loo_risk_channel,
    loo_risk_full_layer,
    nnk_interpolate,
    same_class_weight,
)
from .kernels import (
    COSINE,
    GAUSSIAN,
    SIGMA_FIXED,
    SIGMA_MEDIAN_KNN,
    KernelSpec,
    estimate_sigma,
    kernel_matrix,
    kernel_value,
    resolve_sigma,
)
from .nnk import (
    DegenerateNeighborhoodError,
    NnkConfig,
    NnkNeighborhood,
    build_channel_graph,
    knn_candidates,
    nnk_solve,
    refresh_cached_neighborhood,
)
from .reports import (
    HistoryEntry,
    load_run_history,
    parse_report,
    replay_decisions,
    save_run_history,
    verify_history,
    write_report,
)
from .serve import ServeConfig, read_frame, serve_loop, write_frame
from .snapshot import (
    FeatureSnapshot,
    SnapshotDataError,
    SnapshotFormatError,
    read_snapshot,
    read_snapshot_csv,
    snapshot_from_bytes,
    snapshot_to_bytes,
    write_snapshot,
    write_snapshot_csv,
)

__version__ = "0.1.0"

"""Channel-importance signals: activation sparsity, neighborhood geometry,
same-class weight, and a risk-based channel ranking.

Channels whose activations are mostly zero build small neighborhoods with
little same-class weight and interpolate poorly; channels carrying task
signal connect to more neighbors of the query's own class. The ranking
itself uses the LOO risk (lower is better) — the geometric signals are
reported as predictors, not used to rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .interpolation import ChannelLooReport, LabelSet, same_class_weight, zero_fraction_of
from .nnk import NnkNeighborhood

DEFAULT_RISK_THRESHOLD = 0.4


@dataclass(frozen=True)
class ImportanceMetrics:
    channel: int
    zero_fraction: float
    mean_neighbors: float
    mean_same_class_weight: float
    rank_score: float


def zero_stats(features_c, zero_tol: float) -> float:
    """Fraction of activation entries with magnitude <= zero_tol."""
    return zero_fraction_of(features_c, zero_tol)


def neighborhood_stats(graph: Mapping[int, NnkNeighborhood], labels: LabelSet) -> tuple[float, float]:
    """Mean support size and mean normalized same-class weight over a graph."""
    if not graph:
        raise ValueError("graph must be non-empty")
    nodes = sorted(graph)
    sizes = [graph[i].size for i in nodes]
    weights = [same_class_weight(graph[i], labels) for i in nodes]
    return float(np.mean(sizes)), float(np.mean(weights))


def rank_channels(
    reports: Sequence[ChannelLooReport],
    risk_threshold: float = DEFAULT_RISK_THRESHOLD,
) -> tuple[list[int], list[int]]:
    """Channels ascending by LOO risk (ties to lower id), plus the subset
    with risk strictly below ``risk_threshold`` in the same order."""
    if not reports:
        raise ValueError("reports must be non-empty")
    ordered = sorted(reports, key=lambda rep: (rep.loo_risk, rep.channel))
    ranking = [rep.channel for rep in ordered]
    passing = [rep.channel for rep in ordered if rep.loo_risk < risk_threshold]
    return ranking, passing


def importance_from_reports(reports: Sequence[ChannelLooReport]) -> list[ImportanceMetrics]:
    """Importance metrics straight off LOO sweep reports, in report order."""
    return [
        ImportanceMetrics(
            channel=rep.channel,
            zero_fraction=rep.zero_fraction,
            mean_neighbors=rep.mean_neighbor_count,
            mean_same_class_weight=rep.mean_same_class_weight,
            rank_score=rep.loo_risk,
        )
        for rep in reports
    ]

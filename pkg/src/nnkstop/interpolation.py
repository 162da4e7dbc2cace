"""Label interpolation over NNK neighborhoods and leave-one-out risk.

The class estimate at a node is the convex combination of its neighbors'
one-hot labels, weighted by the normalized NNK coefficients. Scoring each
training node against a neighborhood built on all *other* nodes gives the
leave-one-out 0/1 risk — per channel, or for the concatenated full layer.
Diagnostics (support sizes, same-class weight, activation zero fraction)
fall out of the same sweep at no extra solver cost.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .kernels import kernel_matrix, resolve_sigma
from .nnk import (
    DegenerateNeighborhoodError,
    NnkConfig,
    NnkNeighborhood,
    _neighborhood_from_kernel,
    _top_candidates,
)

# Sentinel channel id for reports computed on the whole concatenated layer.
FULL_LAYER = -1

DEFAULT_ZERO_TOL = 1e-7


@dataclass(frozen=True)
class LabelSet:
    """Integer class labels for the training pool."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", arr)
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("labels must be a non-empty 1-D sequence")
        if arr.min() < 0 or arr.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")
        present = np.unique(arr)
        if present.size < self.num_classes:
            missing = sorted(set(range(self.num_classes)) - set(present.tolist()))
            warnings.warn(f"classes {missing} absent from label set", stacklevel=2)

    def __len__(self) -> int:
        return int(self.labels.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelSet):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class ChannelLooReport:
    """Per-channel LOO risk and neighborhood diagnostics for one sweep.

    ``per_node_correct`` is a boolean mask over the evaluated nodes in
    ascending node order. ``failed_nodes`` lists nodes whose solve was
    degenerate; they count as misclassified but contribute nothing to the
    neighborhood means.
    """

    channel: int
    loo_risk: float
    per_node_correct: np.ndarray
    mean_neighbor_count: float
    mean_same_class_weight: float
    zero_fraction: float
    evaluated_nodes: int
    failed_nodes: tuple[int, ...] = ()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChannelLooReport):
            return NotImplemented
        return (
            self.channel == other.channel
            and self.loo_risk == other.loo_risk
            and np.array_equal(self.per_node_correct, other.per_node_correct)
            and self.mean_neighbor_count == other.mean_neighbor_count
            and self.mean_same_class_weight == other.mean_same_class_weight
            and self.zero_fraction == other.zero_fraction
            and self.evaluated_nodes == other.evaluated_nodes
            and self.failed_nodes == other.failed_nodes
        )


@dataclass(frozen=True)
class EvalOptions:
    """Evaluation-step options: channel subset, node subsampling, seed.

    The node subsample is drawn deterministically from (seed, step), so a
    replayed run re-evaluates exactly the same nodes. ``zero_tol`` is the
    magnitude below which an activation entry counts as zero.
    """

    channel_subset: Optional[tuple[int, ...]] = None
    subsample: Optional[int] = None
    seed: int = 0
    zero_tol: float = DEFAULT_ZERO_TOL

    def node_subset_for(self, n: int, step: int) -> Optional[np.ndarray]:
        if self.subsample is None or self.subsample >= n:
            return None
        rng = np.random.default_rng([self.seed, step])
        return np.sort(rng.choice(n, size=self.subsample, replace=False))


def nnk_interpolate(nbhd: NnkNeighborhood, labels: LabelSet) -> np.ndarray:
    """Class-probability vector: normalized neighbor weights on one-hot labels."""
    total = float(nbhd.weights.sum())
    probs = np.bincount(
        labels.labels[nbhd.neighbor_indices],
        weights=nbhd.weights,
        minlength=labels.num_classes,
    )
    return probs / total


def classify(probs) -> int:
    """Argmax class; ties resolve to the lowest class id."""
    return int(np.argmax(probs))


def empirical_risk(predictions, labels: LabelSet) -> float:
    """Mean 0/1 error of predictions against the label set."""
    preds = np.asarray(predictions, dtype=np.int64)
    if preds.size != len(labels):
        raise ValueError(f"{preds.size} predictions for {len(labels)} labels")
    return float(np.mean(preds != labels.labels))


def same_class_weight(nbhd: NnkNeighborhood, labels: LabelSet) -> float:
    """Total normalized weight of neighbors sharing the query's label."""
    same = labels.labels[nbhd.neighbor_indices] == labels.labels[nbhd.query_index]
    return float(nbhd.weights[same].sum() / nbhd.weights.sum())


def zero_fraction_of(features, zero_tol: float = DEFAULT_ZERO_TOL) -> float:
    """Fraction of entries with magnitude <= zero_tol, over the whole matrix."""
    if zero_tol < 0.0:
        raise ValueError("zero_tol must be >= 0")
    return float(np.mean(np.abs(np.asarray(features)) <= zero_tol))


def loo_risk_channel(
    features_c,
    labels: LabelSet,
    config: NnkConfig,
    node_subset=None,
    *,
    channel: int = 0,
    zero_tol: float = DEFAULT_ZERO_TOL,
) -> ChannelLooReport:
    """Leave-one-out interpolation risk of one channel's feature matrix.

    Each evaluated node gets an NNK neighborhood on the pool excluding it,
    an interpolated class estimate and a 0/1 score against its own label.
    A node whose solve degenerates is counted as misclassified and flagged;
    the sweep never aborts.
    """
    X = np.asarray(features_c, dtype=np.float64)
    n = X.shape[0]
    if n < config.K + 2:
        raise ValueError(f"need N >= K+2 nodes for LOO, got N={n}, K={config.K}")
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} feature rows")
    if node_subset is None:
        nodes = list(range(n))
    else:
        nodes = sorted(int(i) for i in node_subset)
        if len(set(nodes)) != len(nodes):
            raise ValueError("node_subset contains duplicates")
        if nodes and (nodes[0] < 0 or nodes[-1] >= n):
            raise ValueError("node_subset contains out-of-range node ids")
        if not nodes:
            raise ValueError("node_subset must be non-empty")

    spec = resolve_sigma(config.kernel, X, config.K)
    M = kernel_matrix(X, spec)
    y = labels.labels

    correct = np.zeros(len(nodes), dtype=bool)
    sizes: list[int] = []
    same_w: list[float] = []
    failed: list[int] = []
    for pos, i in enumerate(nodes):
        cand = _top_candidates(M[i], i, config.K)
        try:
            nbhd = _neighborhood_from_kernel(i, cand, M[np.ix_(cand, cand)], M[i][cand], config)
        except DegenerateNeighborhoodError:
            failed.append(i)
            continue
        probs = nnk_interpolate(nbhd, labels)
        correct[pos] = classify(probs) == y[i]
        sizes.append(nbhd.size)
        same_w.append(same_class_weight(nbhd, labels))

    evaluated = len(nodes)
    return ChannelLooReport(
        channel=channel,
        loo_risk=1.0 - float(np.count_nonzero(correct)) / evaluated,
        per_node_correct=correct,
        mean_neighbor_count=float(np.mean(sizes)) if sizes else 0.0,
        mean_same_class_weight=float(np.mean(same_w)) if same_w else 0.0,
        zero_fraction=zero_fraction_of(X, zero_tol),
        evaluated_nodes=evaluated,
        failed_nodes=tuple(failed),
    )


def loo_risk_all_channels(snapshot, config: NnkConfig, options: EvalOptions = EvalOptions()) -> list[ChannelLooReport]:
    """One ChannelLooReport per requested channel of a feature snapshot.

    The Gaussian bandwidth is re-estimated per channel under the median-KNN
    policy; all channels share one node subsample so risks are comparable.
    """
    C = len(snapshot.channels)
    if options.channel_subset is None:
        chans: Sequence[int] = range(C)
    else:
        chans = sorted(int(c) for c in options.channel_subset)
        if any(c < 0 or c >= C for c in chans):
            raise ValueError(f"channel subset {chans} outside 0..{C - 1}")
    subset = options.node_subset_for(len(snapshot.labels), snapshot.step)
    return [
        loo_risk_channel(
            snapshot.channels[c],
            snapshot.labels,
            config,
            node_subset=subset,
            channel=c,
            zero_tol=options.zero_tol,
        )
        for c in chans
    ]


def loo_risk_full_layer(snapshot, config: NnkConfig, options: EvalOptions = EvalOptions()) -> ChannelLooReport:
    """LOO risk on the concatenation of all channel subvectors."""
    full = np.concatenate([np.asarray(ch, dtype=np.float64) for ch in snapshot.channels], axis=1)
    subset = options.node_subset_for(len(snapshot.labels), snapshot.step)
    return loo_risk_channel(
        full,
        snapshot.labels,
        config,
        node_subset=subset,
        channel=FULL_LAYER,
        zero_tol=options.zero_tol,
    )

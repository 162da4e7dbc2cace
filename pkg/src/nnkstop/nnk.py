"""Sparse non-negative neighborhoods over KNN candidate sets.

A query's neighborhood is found in two stages: K nearest candidates by
kernel similarity, then a nonnegativity-constrained kernel-space
regression over those candidates,

    min_{theta >= 0}  1/2 theta' K_SS theta - theta' k_Sq

solved with a Lawson-Hanson style active-set method on the K x K system.
Candidates that lie further away along a direction already covered by a
selected neighbor come out at weight zero, so the surviving support is
typically much smaller than K. ``objective_residual`` is the attained
objective plus 1/2, i.e. the kernel-space reconstruction half-error:
zero means the query is reproduced exactly by its neighbors.

All functions are pure; graphs over many nodes can be built from any
number of workers with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import KernelSpec, kernel_cross, kernel_matrix, resolve_sigma


class DegenerateNeighborhoodError(ValueError):
    """Raised when every candidate weight is pruned to zero for a query."""

    def __init__(self, query_index: int, detail: str = ""):
        self.query_index = query_index
        msg = f"degenerate neighborhood for query node {query_index}"
        super().__init__(msg + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class NnkConfig:
    """Neighborhood construction parameters.

    K initial neighbors, the similarity kernel, a diagonal regularizer
    for the candidate kernel matrix (duplicate training points make it
    singular), the threshold below which weights are dropped from the
    support, and the residual growth factor rho that triggers a rebuild
    of a cached neighborhood.
    """

    K: int
    kernel: KernelSpec = field(default_factory=KernelSpec)
    jitter: float = 1e-8
    nnls_tolerance: float = 1e-8
    cache_rebuild_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.jitter < 0.0:
            raise ValueError("jitter must be >= 0")
        if not self.nnls_tolerance > 0.0:
            raise ValueError("nnls_tolerance must be > 0")
        if not self.cache_rebuild_factor > 1.0:
            raise ValueError("cache_rebuild_factor must be > 1")


@dataclass(frozen=True, eq=False)
class NnkNeighborhood:
    """Positive-weight neighbor set for one query node.

    Weights are the raw regression coefficients theta (unnormalized;
    label interpolation normalizes them explicitly). ``neighbor_indices``
    is always a subset of the KNN candidate set used for initialization
    and never contains the query itself.
    """

    query_index: int
    neighbor_indices: np.ndarray
    weights: np.ndarray
    objective_residual: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "neighbor_indices", np.asarray(self.neighbor_indices, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if self.neighbor_indices.size != self.weights.size or self.neighbor_indices.size < 1:
            raise ValueError("neighborhood needs matching, non-empty indices and weights")
        if np.any(self.weights <= 0.0):
            raise ValueError("neighborhood weights must be strictly positive")
        if self.query_index in self.neighbor_indices:
            raise ValueError("query node cannot be its own neighbor")

    @property
    def size(self) -> int:
        return int(self.neighbor_indices.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NnkNeighborhood):
            return NotImplemented
        return (
            self.query_index == other.query_index
            and np.array_equal(self.neighbor_indices, other.neighbor_indices)
            and np.array_equal(self.weights, other.weights)
            and self.objective_residual == other.objective_residual
        )


def knn_candidates(query: int, features, K: int, kernel: KernelSpec) -> np.ndarray:
    """The K nodes most similar to ``query``, descending, ties to lower id."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if n <= K:
        raise ValueError(f"need N >= K+1 nodes, got N={n}, K={K}")
    if not 0 <= query < n:
        raise ValueError(f"query index {query} out of range for N={n}")
    sims = kernel_cross(X[query : query + 1], X, kernel)[0]
    return _top_candidates(sims, query, K)


def _top_candidates(sims: np.ndarray, query: int, K: int) -> np.ndarray:
    sims = sims.copy()
    sims[query] = -np.inf
    # lexsort: primary key descending similarity, secondary ascending id
    order = np.lexsort((np.arange(sims.size), -sims))
    return order[:K].astype(np.int64)


def _solve_spd(Q: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(Q, b)
    except np.linalg.LinAlgError:
        # jitter = 0 with duplicate candidates: fall back to the
        # minimum-norm solution, which splits weight across duplicates
        return np.linalg.lstsq(Q, b, rcond=None)[0]


def _nnls_active_set(Q: np.ndarray, b: np.ndarray) -> np.ndarray:
    """min 1/2 x'Qx - x'b s.t. x >= 0 for symmetric PSD Q (Lawson-Hanson).

    The dual tolerance is machine-eps scaled, not user-visible: support
    pruning happens afterwards against ``nnls_tolerance``, and a coarse
    dual tolerance here would merge duplicate candidates incorrectly.
    """
    m = b.size
    x = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    w = b.copy()  # negative gradient b - Qx
    eps = np.finfo(float).eps
    dual_tol = 10.0 * eps * m * max(1.0, float(np.abs(b).max(initial=0.0)))
    outer = 0
    max_outer = 3 * m + 10
    while outer < max_outer and not passive.all() and np.any(w[~passive] > dual_tol):
        outer += 1
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        inner = 0
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(m)
            z[idx] = _solve_spd(Q[np.ix_(idx, idx)], b[idx])
            if np.all(z[idx] > 0.0):
                x = z
                break
            inner += 1
            if inner > 3 * m + 10:
                x = np.maximum(z, 0.0)
                break
            shrink = passive & (z <= 0.0)
            denom = x[shrink] - z[shrink]
            ratio = np.where(denom > np.finfo(float).tiny, x[shrink] / denom, np.inf)
            alpha = float(np.min(ratio, initial=np.inf))
            if not np.isfinite(alpha):
                # degenerate: the offending coordinates cannot move, drop them
                passive[shrink] = False
                if not passive.any():
                    x = np.zeros(m)
                    break
                continue
            x = x + alpha * (z - x)
            x[~passive] = 0.0
            passive &= x > 10.0 * eps
        w = b - Q @ x
    return x


def _neighborhood_from_kernel(
    query: int,
    candidates: np.ndarray,
    K_ss: np.ndarray,
    k_sq: np.ndarray,
    config: NnkConfig,
) -> NnkNeighborhood:
    """Solve the candidate QP given precomputed kernel blocks."""
    Q = K_ss + config.jitter * np.eye(len(candidates))
    theta = _nnls_active_set(Q, k_sq)
    keep = theta >= config.nnls_tolerance
    if not np.any(keep):
        raise DegenerateNeighborhoodError(query, "all candidate weights below tolerance")
    th = theta[keep]
    Qk = Q[np.ix_(keep.nonzero()[0], keep.nonzero()[0])]
    objective = 0.5 * float(th @ Qk @ th) - float(th @ k_sq[keep])
    residual = max(0.0, objective + 0.5)
    return NnkNeighborhood(query, candidates[keep], th, residual)


def nnk_solve(query: int, candidates, features, config: NnkConfig) -> NnkNeighborhood:
    """Non-negative kernel regression weights for ``query`` over ``candidates``."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.size < 1:
        raise ValueError("candidate set must be non-empty")
    if query in cand:
        raise ValueError("candidate set must exclude the query node")
    X = np.asarray(features, dtype=np.float64)
    spec = resolve_sigma(config.kernel, X, config.K)
    K_ss = kernel_matrix(X[cand], spec)
    k_sq = kernel_cross(X[query : query + 1], X[cand], spec)[0]
    return _neighborhood_from_kernel(query, cand, K_ss, k_sq, config)


def build_channel_graph(features, config: NnkConfig, node_subset=None) -> dict[int, NnkNeighborhood]:
    """One NnkNeighborhood per requested node, each on the pool without it.

    Every node's candidate set is drawn from all *other* nodes, so the
    resulting graph is exactly the leave-one-out geometry the LOO risk
    needs. Keys are the requested nodes (all nodes when ``node_subset``
    is None).
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if n < config.K + 1:
        raise ValueError(f"need N >= K+1 nodes, got N={n}, K={config.K}")
    if node_subset is None:
        nodes = range(n)
    else:
        nodes = sorted(int(i) for i in node_subset)
        if any(i < 0 or i >= n for i in nodes):
            raise ValueError("node_subset contains out-of-range node ids")
    spec = resolve_sigma(config.kernel, X, config.K)
    M = kernel_matrix(X, spec)
    graph: dict[int, NnkNeighborhood] = {}
    for i in nodes:
        cand = _top_candidates(M[i], i, config.K)
        graph[i] = _neighborhood_from_kernel(i, cand, M[np.ix_(cand, cand)], M[i][cand], config)
    return graph


def refresh_cached_neighborhood(
    prev: NnkNeighborhood, features, config: NnkConfig
) -> tuple[NnkNeighborhood, bool]:
    """Re-weight a cached neighborhood; rebuild it if its error jumped.

    The cached support is re-solved against the current features. When the
    new residual exceeds rho times the previous one (or the previous
    residual was ~0 and the new one is above ``nnls_tolerance``), a fresh
    KNN + NNK construction replaces it. Returns the neighborhood and
    whether a rebuild happened. ``rho = inf`` never rebuilds.
    """
    X = np.asarray(features, dtype=np.float64)
    rho = config.cache_rebuild_factor
    cfg = replace(config, kernel=resolve_sigma(config.kernel, X, config.K))
    try:
        refreshed = nnk_solve(prev.query_index, prev.neighbor_indices, X, cfg)
    except DegenerateNeighborhoodError:
        if math.isinf(rho):
            raise
        return _rebuild(prev.query_index, X, cfg), True

    if math.isinf(rho):
        rebuild = False
    elif prev.objective_residual <= 1e-12:
        rebuild = refreshed.objective_residual > config.nnls_tolerance
    else:
        rebuild = refreshed.objective_residual > rho * prev.objective_residual
    if rebuild:
        return _rebuild(prev.query_index, X, cfg), True
    return refreshed, False


def _rebuild(query: int, X: np.ndarray, config: NnkConfig) -> NnkNeighborhood:
    cand = knn_candidates(query, X, config.K, config.kernel)
    return nnk_solve(query, cand, X, config)

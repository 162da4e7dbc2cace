"""Similarity kernels on feature vectors and kernel matrix assembly.

Two kernels are supported, both mapping into [0, 1]:

* ``gaussian``: exp(-||a - b||^2 / (2 sigma^2))
* ``cosine``:   1/2 + <a, b> / (2 ||a|| ||b||)  (range-normalized)

Values are clamped to [0, 1] after evaluation so that downstream
non-negative solvers always see a valid similarity range. A cosine
argument with near-zero norm evaluates to 0.5 (the orthogonal-vector
value) instead of failing; ReLU channels routinely emit all-zero
activation rows and the pipeline must survive them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GAUSSIAN = "gaussian"
COSINE = "cosine"
SIGMA_FIXED = "fixed"
SIGMA_MEDIAN_KNN = "median_knn_distance"

# Norms below this are treated as zero vectors by the cosine kernel.
ZERO_NORM_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus bandwidth policy.

    ``sigma`` is the Gaussian bandwidth in feature units; it is ignored by
    the cosine kernel. With ``sigma_policy == "median_knn_distance"`` the
    effective bandwidth is re-estimated from the feature matrix at hand
    (see :func:`resolve_sigma`), because channel feature scales drift
    across training and a fixed sigma goes stale.
    """

    kind: str = COSINE
    sigma: float = 1.0
    sigma_policy: str = SIGMA_MEDIAN_KNN

    def __post_init__(self) -> None:
        if self.kind not in (GAUSSIAN, COSINE):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.sigma_policy not in (SIGMA_FIXED, SIGMA_MEDIAN_KNN):
            raise ValueError(f"unknown sigma policy {self.sigma_policy!r}")
        if self.kind == GAUSSIAN and self.sigma_policy == SIGMA_FIXED:
            if not self.sigma > 0.0:
                raise ValueError("gaussian kernel with fixed policy needs sigma > 0")


def kernel_value(a, b, spec: KernelSpec) -> float:
    """Similarity of two feature vectors under ``spec``, in [0, 1].

    Symmetric in (a, b). Uses ``spec.sigma`` as-is; bandwidth policies are
    resolved by the caller (see :func:`resolve_sigma`).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    if a.size < 1:
        raise ValueError("feature vectors must have dimension >= 1")
    if spec.kind == GAUSSIAN:
        d2 = float(np.sum((a - b) ** 2))
        val = np.exp(-d2 / (2.0 * spec.sigma**2))
    else:
        na = float(np.linalg.norm(a))
        nb = float(np.linalg.norm(b))
        if na < ZERO_NORM_TOL or nb < ZERO_NORM_TOL:
            return 0.5
        val = 0.5 + float(a @ b) / (2.0 * na * nb)
    return float(min(1.0, max(0.0, val)))


def kernel_cross(A, B, spec: KernelSpec) -> np.ndarray:
    """Pairwise similarities between the rows of A (n x d) and B (m x d)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError(f"incompatible feature shapes {A.shape} and {B.shape}")
    inner = A @ B.T
    if spec.kind == GAUSSIAN:
        sq_a = np.einsum("ij,ij->i", A, A)
        sq_b = np.einsum("ij,ij->i", B, B)
        d2 = np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * inner, 0.0)
        M = np.exp(-d2 / (2.0 * spec.sigma**2))
    else:
        na = np.linalg.norm(A, axis=1)
        nb = np.linalg.norm(B, axis=1)
        denom = 2.0 * np.outer(na, nb)
        with np.errstate(divide="ignore", invalid="ignore"):
            M = 0.5 + inner / denom
        zero = (na[:, None] < ZERO_NORM_TOL) | (nb[None, :] < ZERO_NORM_TOL)
        M[zero] = 0.5
    return np.clip(M, 0.0, 1.0)


def kernel_matrix(X, spec: KernelSpec) -> np.ndarray:
    """Symmetric N x N similarity matrix over the rows of X, unit diagonal."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected a non-empty N x D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite entries")
    M = kernel_cross(X, X, spec)
    np.fill_diagonal(M, 1.0)
    return M


def pairwise_distances(X) -> np.ndarray:
    """Euclidean distance matrix over the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    return np.sqrt(d2)

def estimate_sigma(X, K: int) -> float:
    """Median over nodes of the distance to each node's K-th nearest neighbor.

    Falls back to 1.0 when that median is below 1e-12 (e.g. all points
    identical), so the result is always a usable positive bandwidth.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if K < 1:
        raise ValueError("K must be >= 1")
    if n <= K:
        raise ValueError(f"need more than K={K} points, got N={n}")
    d = pairwise_distances(X)
    np.fill_diagonal(d, np.inf)
    kth = np.partition(d, K - 1, axis=1)[:, K - 1]
    med = float(np.median(kth))
    return med if med >= 1e-12 else 1.0


def resolve_sigma(spec: KernelSpec, X, K: int) -> KernelSpec:
    """Return a spec with a concrete bandwidth for the given features.

    No-op for the cosine kernel and for fixed-sigma specs.
    """
    if spec.kind == GAUSSIAN and spec.sigma_policy == SIGMA_MEDIAN_KNN:
        return replace(spec, sigma=estimate_sigma(X, K), sigma_policy=SIGMA_FIXED)
    return spec

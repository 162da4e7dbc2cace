"""Kernels and sparse non-negative neighborhoods on toy 2-D points.

Shows the two similarity kernels, then contrasts a plain KNN candidate
set with the NNK weights solved over it: candidates that sit behind an
already-chosen neighbor (same direction, further away) get weight zero,
so the surviving support wraps around the query instead of piling up on
one side.

Run: python3 demos/01_kernels_and_neighborhoods.py
"""

import numpy as np

from nnkstop import KernelSpec, NnkConfig, kernel_value, knn_candidates, nnk_solve

gauss = KernelSpec(kind="gaussian", sigma=1.0, sigma_policy="fixed")
cosine = KernelSpec(kind="cosine")

print("== kernel values ==")
a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
print(f"gaussian(a, a)      = {kernel_value(a, a, gauss):.4f}   (identical points)")
print(f"gaussian(a, b)      = {kernel_value(a, b, gauss):.4f}   (distance sqrt(2), sigma 1)")
print(f"cosine(a, b)        = {kernel_value(a, b, cosine):.4f}   (orthogonal -> 0.5)")
print(f"cosine(a, -a)       = {kernel_value(a, -a, cosine):.4f}   (opposite -> 0.0)")
print(f"cosine(a, 100*a)    = {kernel_value(a, 100 * a, cosine):.4f}   (scale-invariant -> 1.0)")

# A query at the origin, one candidate on each side, and a third candidate
# collinear with (and beyond) the first. KNN keeps all three; NNK prunes
# the redundant one.
print("\n== KNN initialization vs NNK weights ==")
X = np.array([
    [0.0, 0.0],   # node 0: the query
    [1.0, 0.0],   # node 1: right
    [-1.0, 0.1],  # node 2: left
    [2.0, 0.0],   # node 3: right again, further out than node 1
])
cand = knn_candidates(0, X, K=3, kernel=gauss)
print(f"KNN candidates of node 0 (by similarity): {cand.tolist()}")

nbhd = nnk_solve(0, cand, X, NnkConfig(K=3, kernel=gauss))
print(f"NNK support:  {nbhd.neighbor_indices.tolist()}")
print(f"NNK weights:  {np.round(nbhd.weights, 4).tolist()}")
print(f"residual:     {nbhd.objective_residual:.4f}  (kernel-space reconstruction half-error)")
print("node 3 is dropped: it lies behind node 1 in the same direction.")

print("\n== supports shrink as candidates become redundant ==")
rng = np.random.default_rng(0)
ring = np.vstack([[0.0, 0.0], rng.normal(size=(30, 2))])
for K in (3, 10, 20):
    nb = nnk_solve(0, knn_candidates(0, ring, K, gauss), ring, NnkConfig(K=K, kernel=gauss))
    print(f"K = {K:2d}  ->  NNK support size {nb.size}")

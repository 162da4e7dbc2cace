import numpy as np
import pytest

from nnkstop.kernels import (
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

GAUSS1 = KernelSpec(kind=GAUSSIAN, sigma=1.0, sigma_policy=SIGMA_FIXED)
COS = KernelSpec(kind=COSINE)


def test_gaussian_identical_vectors_is_one():
    for sigma in (0.1, 1.0, 7.3):
        spec = KernelSpec(kind=GAUSSIAN, sigma=sigma, sigma_policy=SIGMA_FIXED)
        assert kernel_value([1.0, -2.0, 3.0], [1.0, -2.0, 3.0], spec) == 1.0


def test_cosine_range_endpoints():
    assert kernel_value([1.0, 2.0], [-1.0, -2.0], COS) == pytest.approx(0.0, abs=1e-12)
    assert kernel_value([1.0, 2.0], [1.0, 2.0], COS) == pytest.approx(1.0, abs=1e-12)


def test_gaussian_direct_evaluation():
    # exp(-|0-2|^2 / 2) = exp(-2)
    assert kernel_value([0.0], [2.0], GAUSS1) == pytest.approx(np.exp(-2.0), rel=1e-12)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        kernel_value([1.0, 2.0], [1.0], GAUSS1)


def test_cosine_zero_vector_gives_orthogonal_value():
    assert kernel_value([0.0, 0.0], [1.0, 0.0], COS) == 0.5
    assert kernel_value([0.0, 0.0], [0.0, 0.0], COS) == 0.5


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(kind="triangle")
    with pytest.raises(ValueError):
        KernelSpec(kind=GAUSSIAN, sigma=0.0, sigma_policy=SIGMA_FIXED)
    with pytest.raises(ValueError):
        KernelSpec(sigma_policy="grid-search")
    # median policy tolerates a placeholder sigma
    KernelSpec(kind=GAUSSIAN, sigma=1.0, sigma_policy=SIGMA_MEDIAN_KNN)


def test_kernel_matrix_single_row_and_duplicates():
    assert np.array_equal(kernel_matrix([[3.0, 4.0]], GAUSS1), [[1.0]])
    M = kernel_matrix([[1.0, 2.0], [1.0, 2.0]], GAUSS1)
    assert np.array_equal(M, np.ones((2, 2)))


def test_kernel_matrix_symmetry_and_agreement():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(10, 4))
    for spec in (GAUSS1, COS):
        M = kernel_matrix(X, spec)
        assert np.max(np.abs(M - M.T)) <= 1e-12
        assert np.all((M >= 0.0) & (M <= 1.0))
        assert np.array_equal(np.diag(M), np.ones(10))
        for i in range(10):
            for j in range(10):
                if i != j:
                    assert M[i, j] == pytest.approx(kernel_value(X[i], X[j], spec), abs=1e-9)


def test_kernel_matrix_rejects_non_finite():
    X = np.ones((3, 2))
    X[1, 1] = np.nan
    with pytest.raises(ValueError):
        kernel_matrix(X, COS)


def test_kernel_range_and_symmetry_property():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.normal(scale=rng.uniform(0.01, 100.0), size=6)
        b = rng.normal(scale=rng.uniform(0.01, 100.0), size=6)
        for spec in (GAUSS1, COS, KernelSpec(kind=GAUSSIAN, sigma=0.03, sigma_policy=SIGMA_FIXED)):
            v = kernel_value(a, b, spec)
            assert 0.0 <= v <= 1.0
            assert v == kernel_value(b, a, spec)


def test_gaussian_strictly_decreasing_in_distance():
    base = np.zeros(3)
    values = [kernel_value(base, np.array([d, 0.0, 0.0]), GAUSS1) for d in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_cosine_scale_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=(2, 5))
        c = rng.uniform(0.01, 100.0)
        assert kernel_value(c * a, b, COS) == pytest.approx(kernel_value(a, b, COS), abs=1e-12)


def test_estimate_sigma_unit_line():
    X = np.array([[0.0], [1.0], [2.0]])
    assert estimate_sigma(X, 1) == pytest.approx(1.0)


def test_estimate_sigma_identical_points_fallback():
    X = np.ones((5, 3))
    assert estimate_sigma(X, 2) == 1.0


def test_estimate_sigma_two_tight_clusters():
    rng = np.random.default_rng(5)
    a = rng.normal(scale=0.1, size=(20, 2))
    b = rng.normal(scale=0.1, size=(20, 2)) + np.array([10.0, 0.0])
    X = np.vstack([a, b])
    sigma = estimate_sigma(X, 1)
    # brute-force nearest-neighbor distances
    d = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    assert sigma == pytest.approx(float(np.median(d.min(axis=1))))
    assert sigma < 1.0  # within-cluster scale, not the 10.0 gap


def test_estimate_sigma_preconditions():
    with pytest.raises(ValueError):
        estimate_sigma(np.ones((3, 2)), 3)
    with pytest.raises(ValueError):
        estimate_sigma(np.ones((3, 2)), 0)


def test_resolve_sigma_policies():
    X = np.array([[0.0], [1.0], [2.0]])
    median = KernelSpec(kind=GAUSSIAN, sigma_policy=SIGMA_MEDIAN_KNN)
    resolved = resolve_sigma(median, X, 1)
    assert resolved.sigma == pytest.approx(1.0)
    assert resolved.sigma_policy == SIGMA_FIXED
    assert resolve_sigma(GAUSS1, X, 1) is GAUSS1
    assert resolve_sigma(COS, X, 1) is COS

import itertools
import math

import numpy as np
import pytest
import scipy.stats

from slerpevo.errors import ArgumentError, DegenerateInputError
from slerpevo.metrics import (PROXY_METRIC, diversity_score, fit_pca, get_metric,
                              midranks, pca_fit_project, permutation_rho_distribution,
                              proxy_distance, register_metric, spearman)


def _image(rng, shape=(1, 32, 32), scale=0.8):
    return (rng.uniform(-1.0, 1.0, size=shape) * scale).astype(np.float32)


# ---------------------------------------------------------------------------
# proxy distance

def test_identity_distance_is_zero():
    rng = np.random.default_rng(0)
    x = _image(rng)
    assert proxy_distance(x, x) == 0.0


def test_negation_of_nonconstant_image_is_positive():
    rng = np.random.default_rng(1)
    x = _image(rng)
    assert proxy_distance(x, -x) > 0.0


def test_symmetry_over_random_pairs():
    rng = np.random.default_rng(2)
    for _ in range(100):
        x, y = _image(rng), _image(rng)
        assert proxy_distance(x, y) == proxy_distance(y, x)


def test_non_negativity():
    rng = np.random.default_rng(3)
    for _ in range(50):
        assert proxy_distance(_image(rng), _image(rng)) >= 0.0


def test_constant_offset_invariance():
    rng = np.random.default_rng(4)
    x = _image(rng, scale=0.7).astype(np.float64)
    y = _image(rng, scale=0.7).astype(np.float64)
    base = proxy_distance(x, y)
    for offset in (0.1, -0.1):
        shifted = proxy_distance(x + offset, y + offset)
        assert shifted == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_shape_mismatch_rejected():
    with pytest.raises(ArgumentError):
        proxy_distance(np.zeros((1, 32, 32)), np.zeros((1, 16, 16)))


def test_two_dim_inputs_promoted():
    rng = np.random.default_rng(5)
    x, y = _image(rng)[0], _image(rng)[0]
    assert proxy_distance(x, y) == proxy_distance(x[None], y[None])


def test_too_small_image_rejected():
    with pytest.raises(ArgumentError):
        proxy_distance(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)))


def test_metric_registry():
    assert get_metric("proxy") is PROXY_METRIC
    m = register_metric("l2-test", lambda a, b: float(np.linalg.norm(
        np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))
    assert get_metric("l2-test") is m
    with pytest.raises(ArgumentError):
        get_metric("no-such-metric")


# ---------------------------------------------------------------------------
# diversity

def test_diversity_of_identical_images_is_zero():
    x = _image(np.random.default_rng(6))
    assert diversity_score([x, x.copy(), x.copy()]) == 0.0


def test_diversity_of_two_images_is_their_distance():
    rng = np.random.default_rng(7)
    x, y = _image(rng), _image(rng)
    assert diversity_score([x, y]) == pytest.approx(proxy_distance(x, y))


def test_diversity_matches_pair_enumeration_oracle():
    rng = np.random.default_rng(8)
    images = [_image(rng) for _ in range(4)]
    total, pairs = 0.0, 0
    for i in range(4):
        for j in range(i + 1, 4):
            total += proxy_distance(images[i], images[j])
            pairs += 1
    assert pairs == 6
    assert diversity_score(images) == pytest.approx(total / pairs, rel=1e-12)


def test_diversity_needs_two_images():
    with pytest.raises(ArgumentError):
        diversity_score([_image(np.random.default_rng(9))])


# ---------------------------------------------------------------------------
# PCA

def test_rank_one_data_concentrates_variance_on_pc1():
    rng = np.random.default_rng(10)
    direction = rng.standard_normal(10)
    t = rng.standard_normal(50)
    points = np.outer(t, direction)
    projections, ev = pca_fit_project(points, k=2)
    assert ev[0] / ev.sum() >= 0.999
    assert projections.shape == (50, 2)


def test_explained_variance_matches_projection_variance():
    rng = np.random.default_rng(11)
    points = rng.standard_normal((40, 12))
    transform = fit_pca(points, k=3)
    projections = transform.project(points)
    observed = projections.var(axis=0, ddof=1)
    np.testing.assert_allclose(observed, transform.explained_variance, rtol=1e-6)
    # non-increasing variance, centered projections
    assert np.all(np.diff(transform.explained_variance) <= 1e-12)
    np.testing.assert_allclose(projections.mean(axis=0), 0.0, atol=1e-8)


def test_held_out_point_on_fitted_line_has_zero_pc2():
    rng = np.random.default_rng(12)
    direction = rng.standard_normal(8)
    base = rng.standard_normal(8)
    t = np.linspace(-2, 2, 30)
    points = base + np.outer(t, direction)
    transform = fit_pca(points, k=2)
    held_out = base + 3.7 * direction
    coords = transform.project(held_out)
    assert abs(coords[0, 1]) < 1e-6


def test_pca_matches_svd_oracle():
    """Independent route: explained variance equals eigenvalues of the
    covariance of the normalized data (computed via numpy.cov)."""
    rng = np.random.default_rng(13)
    points = rng.standard_normal((25, 6)) * np.array([3, 1, 1, 0.5, 0.2, 0.1])
    transform = fit_pca(points, k=6)
    normed = (points - points.mean(axis=0)) / (points - points.mean(axis=0)).std()
    eigvals = np.sort(np.linalg.eigvalsh(np.cov(normed, rowvar=False)))[::-1]
    np.testing.assert_allclose(transform.explained_variance, eigvals, rtol=1e-9)


def test_pca_argument_validation():
    rng = np.random.default_rng(14)
    points = rng.standard_normal((5, 3))
    for k in (0, 4):
        with pytest.raises(ArgumentError):
            fit_pca(points, k)
    with pytest.raises(ArgumentError):
        fit_pca(points[:1], 1)
    with pytest.raises(ArgumentError):
        fit_pca(np.ones((4, 3)), 1)


# ---------------------------------------------------------------------------
# Spearman

def _oracle_rho(x, y):
    """Independent route: scipy midranks + plain Pearson formula."""
    rx = scipy.stats.rankdata(x, method="average")
    ry = scipy.stats.rankdata(y, method="average")
    return float(np.corrcoef(rx, ry)[0, 1])


def test_rho_matches_midrank_pearson_oracle():
    rng = np.random.default_rng(15)
    for i in range(100):
        n = int(rng.integers(3, 40))
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        if i % 2 == 0:  # inject ties
            x = np.round(x, 1)
            y = np.round(y, 1)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        report = spearman(x, y)
        assert report.rho == pytest.approx(_oracle_rho(x, y), abs=1e-12)
        assert -1.0 <= report.rho <= 1.0
        assert 0.0 < report.p_value <= 1.0


def test_exact_p_for_n3_perfect_monotone():
    report = spearman([1, 2, 3], [10, 20, 30])
    assert report.rho == pytest.approx(1.0)
    assert report.method == "exact-permutation"
    assert report.p_value == pytest.approx(2 / 6)


def test_perfect_antimonotone_n9():
    x = np.arange(9, dtype=float)
    report = spearman(x, x[::-1] * 3 - 1)
    assert report.rho == pytest.approx(-1.0)
    assert report.p_value == pytest.approx(2 / math.factorial(9))


def test_exact_p_matches_brute_force_enumeration():
    rng = np.random.default_rng(16)
    x = rng.standard_normal(6)
    y = rng.standard_normal(6)
    report = spearman(x, y)
    # independent enumeration in the test
    rx = scipy.stats.rankdata(x, method="average")
    ry = scipy.stats.rankdata(y, method="average")
    obs = abs(np.corrcoef(rx, ry)[0, 1])
    hits = 0
    total = 0
    for perm in itertools.permutations(range(6)):
        rho = np.corrcoef(rx, ry[list(perm)])[0, 1]
        hits += abs(rho) >= obs - 1e-12
        total += 1
    assert report.p_value == pytest.approx(hits / total, abs=1e-15)


def test_permutation_distribution_properties():
    rng = np.random.default_rng(17)
    rhos, total = permutation_rho_distribution(rng.standard_normal(4),
                                               rng.standard_normal(4))
    assert total == 24 and len(rhos) == 24
    # distinct values give centered ranks symmetric about zero, so the
    # permutation distribution is symmetric too
    ordered = np.sort(rhos)
    np.testing.assert_allclose(ordered, -ordered[::-1], atol=1e-12)
    # probability mass over the support sums to 1
    _, counts = np.unique(np.round(rhos, 12), return_counts=True)
    assert (counts / total).sum() == pytest.approx(1.0, abs=1e-15)
    # the weakest possible observation is never significant
    weakest = float(np.min(np.abs(rhos)))
    p = np.count_nonzero(np.abs(rhos) >= weakest - 1e-12) / total
    assert p == 1.0


def test_symmetry_and_monotone_invariance():
    rng = np.random.default_rng(18)
    x = rng.standard_normal(12)
    y = rng.standard_normal(12)
    a = spearman(x, y)
    assert spearman(y, x).rho == pytest.approx(a.rho, abs=1e-15)
    transformed = spearman(np.exp(x), 3.0 * y + 2.0)
    assert transformed.rho == pytest.approx(a.rho, abs=1e-12)


def test_t_approximation_matches_scipy():
    rng = np.random.default_rng(19)
    x = rng.standard_normal(30)
    y = 0.5 * x + rng.standard_normal(30)
    report = spearman(x, y)
    assert report.method == "t-approximation"
    oracle = scipy.stats.spearmanr(x, y)
    assert report.rho == pytest.approx(oracle.statistic, abs=1e-12)
    assert report.p_value == pytest.approx(oracle.pvalue, rel=1e-9)


def test_degenerate_inputs_rejected():
    with pytest.raises(DegenerateInputError):
        spearman([1, 2], [3, 4])
    with pytest.raises(DegenerateInputError):
        spearman([1, 1, 1], [1, 2, 3])


def test_midranks_tie_handling():
    np.testing.assert_array_equal(midranks([10, 20, 20, 30]), [1.0, 2.5, 2.5, 4.0])
    np.testing.assert_array_equal(midranks([5, 5, 5]), [2.0, 2.0, 2.0])

import numpy as np
import pytest
import scipy.stats

from calikd.errors import DegenerateSeriesError, InvalidInputError
from calikd.stats import pearson, r_squared, spearman


def test_perfect_line_has_unit_r_squared():
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    assert r_squared(x, 2 * x + 3) == pytest.approx(1.0, abs=1e-12)


def test_independent_series_have_tiny_r_squared():
    rng = np.random.default_rng(11)
    x = rng.normal(size=1000)
    y = rng.normal(size=1000)
    assert r_squared(x, y) < 0.05


def test_four_point_hand_ols():
    x = [0.0, 1.0, 2.0, 3.0]
    y = [0.0, 1.0, 2.0, 2.0]
    assert r_squared(x, y) == pytest.approx(49 / 55, abs=1e-12)


def test_constant_series_degenerate():
    with pytest.raises(DegenerateSeriesError):
        r_squared([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(DegenerateSeriesError):
        r_squared([0.0, 1.0, 2.0], [5.0, 5.0, 5.0])
    with pytest.raises(DegenerateSeriesError):
        pearson([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(DegenerateSeriesError):
        spearman([2.0, 2.0, 2.0], [0.0, 1.0, 2.0])


def test_too_short_series_rejected():
    with pytest.raises(InvalidInputError):
        pearson([1.0, 2.0], [1.0, 2.0])


def test_antiperfect_pearson():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)


def test_monotone_spearman_is_one():
    x = np.array([1.0, 4.0, 9.0, 16.0])
    y = np.array([0.1, 0.2, 5.0, 5.5])
    assert spearman(x, y) == pytest.approx(1.0, abs=1e-12)


def test_spearman_tie_hand_case():
    # ranks of x are (1.5, 1.5, 3) with average-rank ties
    assert spearman([1.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == pytest.approx(
        0.8660254037844387, abs=1e-3)


def test_r_squared_equals_pearson_squared(rng):
    for _ in range(200):
        n = int(rng.integers(3, 40))
        x = rng.normal(size=n)
        y = rng.normal(size=n) + 0.3 * x
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        assert abs(r_squared(x, y) - pearson(x, y) ** 2) <= 1e-12


def test_matches_scipy_oracles(rng):
    for _ in range(50):
        n = int(rng.integers(5, 60))
        x = rng.normal(size=n)
        y = 0.7 * x + rng.normal(size=n)
        assert pearson(x, y) == pytest.approx(scipy.stats.pearsonr(x, y).statistic, abs=1e-12)
        assert spearman(x, y) == pytest.approx(scipy.stats.spearmanr(x, y).statistic, abs=1e-12)
        slope, intercept, r_value, _, _ = scipy.stats.linregress(x, y)
        assert r_squared(x, y) == pytest.approx(r_value ** 2, abs=1e-12)


def test_affine_invariance(rng):
    x = rng.normal(size=25)
    y = rng.normal(size=25) + x
    assert pearson(3.0 * x + 1.0, y) == pytest.approx(pearson(x, y), abs=1e-12)
    assert spearman(np.exp(x), y) == pytest.approx(spearman(x, y), abs=1e-12)
    assert r_squared(2.0 * x - 5.0, y) == pytest.approx(r_squared(x, y), abs=1e-12)

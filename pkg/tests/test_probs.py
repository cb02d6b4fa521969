import numpy as np
import pytest
from scipy.special import softmax as scipy_softmax

from calikd.errors import InvalidInputError, InvalidTemperatureError, ShapeError
from calikd.probs import (
    accuracy,
    log_tempered_softmax,
    one_hot,
    tempered_softmax,
    validate_probs,
)


def test_symmetric_logits_give_uniform():
    out = tempered_softmax([[0.0, 0.0]], 1.0)
    np.testing.assert_array_equal(out, [[0.5, 0.5]])


def test_unit_temperature_matches_standard_softmax(rng):
    logits = rng.normal(size=(50, 7)) * 3
    np.testing.assert_allclose(tempered_softmax(logits, 1.0),
                               scipy_softmax(logits, axis=1), atol=1e-12)


def test_halved_logits_hand_value():
    out = tempered_softmax([[2.0, 0.0]], 2.0)
    np.testing.assert_allclose(out, [[0.7310585786300049, 0.2689414213699951]], atol=1e-12)


def test_rejects_bad_inputs():
    with pytest.raises(InvalidInputError):
        tempered_softmax([[np.nan, 0.0]], 1.0)
    with pytest.raises(InvalidTemperatureError):
        tempered_softmax([[1.0, 0.0]], 0.0)
    with pytest.raises(InvalidTemperatureError):
        tempered_softmax([[1.0, 0.0]], -2.0)
    with pytest.raises(ShapeError):
        tempered_softmax([1.0, 0.0], 1.0)
    with pytest.raises(ShapeError):
        tempered_softmax(np.zeros((3, 1)), 1.0)


def test_log_softmax_of_uniform_row():
    out = log_tempered_softmax([[0.0, 0.0]], 1.0)
    np.testing.assert_allclose(out, [[np.log(0.5), np.log(0.5)]], atol=1e-15)


def test_log_softmax_exponentiates_to_softmax(rng):
    for _ in range(100):
        logits = rng.normal(size=(rng.integers(1, 8), rng.integers(2, 9))) * 10
        t = float(rng.uniform(0.2, 5.0))
        np.testing.assert_allclose(np.exp(log_tempered_softmax(logits, t)),
                                   tempered_softmax(logits, t), atol=1e-12)


def test_log_softmax_stays_finite_for_extreme_logits():
    out = log_tempered_softmax([[1000.0, 0.0]], 1.0)
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out[0, 0], 0.0, atol=1e-12)
    np.testing.assert_allclose(out[0, 1], -1000.0, atol=1e-12)


def test_accuracy_perfect_and_zero_and_fraction():
    probs = one_hot(np.array([0, 1, 2]), 3)
    assert accuracy(probs, [0, 1, 2]) == 1.0
    assert accuracy(probs, [1, 2, 0]) == 0.0
    probs4 = one_hot(np.array([0, 1, 2, 0]), 3)
    assert accuracy(probs4, [0, 1, 2, 1]) == 0.75


def test_accuracy_shape_mismatch():
    with pytest.raises(ShapeError):
        accuracy(one_hot(np.array([0, 1]), 3), [0, 1, 2])


def test_prob_matrix_rejects_bad_row_sums():
    bad = np.array([[0.6, 0.6], [0.5, 0.5]])
    with pytest.raises(InvalidInputError):
        validate_probs(bad)
    ok = np.array([[0.5 + 5e-10, 0.5], [0.25, 0.75]])
    validate_probs(ok)


def test_prob_matrix_rejects_out_of_range_entries():
    with pytest.raises(InvalidInputError):
        validate_probs(np.array([[1.2, -0.2]]))


def test_argmax_invariant_under_temperature(rng):
    for _ in range(50):
        logits = rng.normal(size=(20, 6)) * rng.uniform(0.1, 20)
        base = np.argmax(tempered_softmax(logits, 1.0), axis=1)
        for t in (0.5, 1.5, 2.0, 4.0, 10.0):
            np.testing.assert_array_equal(
                np.argmax(tempered_softmax(logits, t), axis=1), base)
            assert accuracy(tempered_softmax(logits, t), base) == 1.0


def test_higher_temperature_flattens_rows(rng):
    logits = rng.normal(size=(30, 5)) * 4
    prev = tempered_softmax(logits, 0.5).max(axis=1)
    for t in (1.0, 2.0, 4.0, 16.0):
        cur = tempered_softmax(logits, t).max(axis=1)
        assert (cur <= prev + 1e-12).all()
        prev = cur


def test_infinite_temperature_limit_is_uniform(rng):
    logits = rng.normal(size=(10, 8)) * 5
    out = tempered_softmax(logits, 1e6)
    np.testing.assert_allclose(out, np.full((10, 8), 1.0 / 8), atol=1e-4)


def test_rows_stay_stochastic(rng):
    logits = rng.normal(size=(40, 9)) * 50
    for t in (0.3, 1.0, 7.0):
        out = tempered_softmax(logits, t)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        assert (out >= 0).all()

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from mmcl.metrics import (TaskPerformanceMatrix, build_report, expected_calibration_error,
                          stability_curve, stability_plasticity, task_probability_mass)

NAN = math.nan


def test_two_task_fixture():
    S, P, tr = stability_plasticity(TaskPerformanceMatrix.from_array([[80, NAN], [60, 70]]))
    assert (S, P) == (60, 75)
    assert tr == pytest.approx(2 * 60 * 75 / 135, abs=1e-12)
    assert tr == pytest.approx(66.67, abs=0.01)


def test_perfect_retention():
    assert stability_plasticity(np.full((4, 4), 100.0)) == (100, 100, 100)


def test_zero_matrix_tradeoff():
    assert stability_plasticity(np.zeros((3, 3)))[2] == 0.0


def test_single_task_raises():
    with pytest.raises(ValueError):
        stability_plasticity(np.array([[50.0]]))


lower = arrays(np.float64, (4, 4), elements=st.floats(0, 100))


@given(lower, arrays(np.float64, (4, 4), elements=st.floats(-1e6, 1e6)))
def test_upper_triangle_ignored(m, junk):
    mixed = np.tril(m) + np.triu(junk, 1)
    assert stability_plasticity(mixed) == stability_plasticity(np.tril(m))


@given(lower)
def test_harmonic_identity(m):
    S, P, tr = stability_plasticity(m)
    assert tr * (S + P) == pytest.approx(2 * S * P, rel=1e-12, abs=1e-9)
    assert 0 <= tr <= 100


def test_stability_curve_ends_at_final_step():
    m = np.array([[90, NAN, NAN], [40, 80, NAN], [30, 50, 70]])
    assert stability_curve(m) == [40, 40]
    assert stability_curve(m)[-1] == stability_plasticity(m)[0]


def test_matrix_structure():
    m = TaskPerformanceMatrix(3)
    m.set(1, 0, 50)
    with pytest.raises(IndexError):
        m.set(0, 1, 50)
    with pytest.raises(ValueError):
        m.set(2, 2, 101)
    assert not m.is_complete()
    assert "after_task,task_0,task_1,task_2" in m.to_csv()


def test_uniform_mass():
    probs = np.full((7, 10), 0.1)
    np.testing.assert_allclose(task_probability_mass(probs, [range(5), range(5, 10)]), [0.5, 0.5])


def test_degenerate_last_task_mass():
    probs = np.zeros((4, 6))
    probs[:, 4] = 0.5
    probs[:, 5] = 0.5
    mass = task_probability_mass(probs, [[0, 1], [2, 3], [4, 5]])
    assert mass[-1] == pytest.approx(1.0)


@given(arrays(np.float64, (5, 6), elements=st.floats(0, 1)).filter(lambda a: (a.sum(1) > 0).all()))
def test_mass_is_probability_vector(raw):
    probs = raw / raw.sum(1, keepdims=True)
    mass = task_probability_mass(probs, [[0, 3], [1, 2, 5], [4]])
    assert (mass >= 0).all() and abs(mass.sum() - 1) <= 1e-6


def test_overlapping_groups_rejected():
    with pytest.raises(ValueError):
        task_probability_mass(np.full((1, 3), 1 / 3), [[0, 1], [1, 2]])


def test_ece_perfectly_calibrated():
    # confidence 0.75 with exactly 75% accuracy
    probs = np.tile([0.75, 0.25], (8, 1))
    labels = np.array([0] * 6 + [1] * 2)
    assert expected_calibration_error(probs, labels) == pytest.approx(0.0, abs=1e-12)


def test_ece_confident_and_wrong():
    probs = np.tile([1.0, 0.0], (5, 1))
    assert expected_calibration_error(probs, np.ones(5, int)) == pytest.approx(1.0)


def test_ece_two_bin_fixture():
    # bin (0.5,0.6]: conf 0.55 x2, one correct -> |0.5-0.55| = 0.05, weight 0.5
    # bin (0.9,1.0]: conf 0.95 x2, both correct -> |1-0.95| = 0.05, weight 0.5
    probs = np.array([[0.55, 0.45], [0.55, 0.45], [0.95, 0.05], [0.05, 0.95]])
    labels = np.array([0, 1, 0, 1])
    assert expected_calibration_error(probs, labels) == pytest.approx(0.05, abs=1e-12)


@given(st.integers(0, 10_000))
def test_ece_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    raw = rng.random((30, 4)) ** 3
    probs = raw / raw.sum(1, keepdims=True)
    y = rng.integers(0, 4, 30)
    assert expected_calibration_error(probs, y) == pytest.approx(
        oracles.ece(probs.tolist(), y.tolist()), abs=1e-12)


def test_ece_empty():
    with pytest.raises(ValueError):
        expected_calibration_error(np.zeros((0, 3)), np.zeros(0))


def test_report():
    r = build_report(TaskPerformanceMatrix.from_array([[80, NAN], [60, 70]]), [0.3, 0.7], 0.1)
    assert r.final_mean_accuracy == 65 and r.recency_gap == pytest.approx(0.4)
    d = r.to_dict()
    assert d["stability"] == 60 and d["plasticity"] == 75 and d["ece"] == 0.1

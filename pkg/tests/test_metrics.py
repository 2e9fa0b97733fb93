import numpy as np
import pytest

from mesofrac.errors import ConfigError
from mesofrac.metrics import (
    binarize,
    curve_metrics,
    damage_threshold,
    evaluate_damage_maps,
    f1_score,
)
from mesofrac.postproc import StressStrainCurve


# -- damage_threshold ----------------------------------------------------------


def test_threshold_constant_map():
    assert damage_threshold(np.full((5, 5), 0.37)) == 0.37


def test_threshold_values_1_to_100():
    values = np.arange(1, 101, dtype=float)
    assert damage_threshold(values) == pytest.approx(99.99, abs=1e-12)


def test_threshold_permutation_invariant(rng):
    values = rng.uniform(0, 1, size=400)
    shuffled = values.copy()
    rng.shuffle(shuffled)
    assert damage_threshold(values) == damage_threshold(shuffled)


def test_threshold_scaling_equivariant(rng):
    values = rng.uniform(0, 1, size=400)
    t = damage_threshold(values)
    assert damage_threshold(3.5 * values) == pytest.approx(3.5 * t, rel=1e-12)


def test_threshold_nearest_rank():
    values = np.arange(1, 101, dtype=float)
    assert damage_threshold(values, method="nearest_rank") == 99.0


def test_threshold_unknown_method():
    with pytest.raises(ConfigError):
        damage_threshold(np.ones(4), method="median")


# -- binarize --------------------------------------------------------------------


def test_binarize_all_below():
    assert binarize(np.zeros((3, 3)), 0.5).sum() == 0


def test_binarize_all_above():
    assert binarize(np.ones((3, 3)), 0.5).sum() == 9


def test_binarize_strict_ties_fall_below():
    arr = np.array([[0.5, 0.6], [0.4, 0.5]])
    out = binarize(arr, 0.5)
    assert out.tolist() == [[0, 1], [0, 0]]


def test_binarize_crafted_3x3():
    arr = np.array([[0.1, 0.9, 0.5], [0.95, 0.2, 0.91], [0.5, 0.89, 0.99]])
    out = binarize(arr, 0.9)
    assert out.sum() == 3  # hand count: 0.95, 0.91, 0.99


# -- f1_score ---------------------------------------------------------------------


def test_f1_identical_masks():
    mask = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    report = f1_score(mask, mask)
    assert report.f1 == 1.0
    assert report.precision == 1.0 and report.recall == 1.0


def test_f1_disjoint_masks():
    a = np.array([[1, 0], [0, 0]], dtype=np.uint8)
    b = np.array([[0, 1], [0, 0]], dtype=np.uint8)
    assert f1_score(a, b).f1 == 0.0


def test_f1_hand_enumerated_fixture():
    # truth has 6 positives, prediction 4, overlap 3:
    # TP = 3, FP = 1, FN = 3 -> P = 0.75, R = 0.5, F1 = 0.6
    truth = np.zeros((3, 3), dtype=np.uint8)
    truth.ravel()[[0, 1, 2, 3, 4, 5]] = 1
    pred = np.zeros((3, 3), dtype=np.uint8)
    pred.ravel()[[0, 1, 2, 8]] = 1
    report = f1_score(truth, pred)
    assert report.true_positives == 3
    assert report.false_positives == 1
    assert report.false_negatives == 3
    assert report.precision == pytest.approx(0.75)
    assert report.recall == pytest.approx(0.5)
    assert report.f1 == pytest.approx(0.6)


def test_f1_swap_identity(rng):
    # swapping the masks swaps FP and FN; F1 = 2TP/(2TP + FP + FN) is symmetric
    a = (rng.uniform(size=(20, 20)) > 0.7).astype(np.uint8)
    b = (rng.uniform(size=(20, 20)) > 0.6).astype(np.uint8)
    r1 = f1_score(a, b)
    r2 = f1_score(b, a)
    assert r1.false_positives == r2.false_negatives
    assert r1.false_negatives == r2.false_positives
    tp, fp, fn = r1.true_positives, r1.false_positives, r1.false_negatives
    expected = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    assert r1.f1 == pytest.approx(expected)
    assert r2.f1 == pytest.approx(expected)


def test_f1_empty_positives_scores_zero():
    zero = np.zeros((4, 4), dtype=np.uint8)
    report = f1_score(zero, zero)
    assert report.f1 == 0.0
    assert report.precision == 0.0 and report.recall == 0.0


def test_f1_bounds(rng):
    for _ in range(20):
        a = (rng.uniform(size=(10, 10)) > 0.5).astype(np.uint8)
        b = (rng.uniform(size=(10, 10)) > 0.5).astype(np.uint8)
        assert 0.0 <= f1_score(a, b).f1 <= 1.0


def test_f1_shape_mismatch():
    with pytest.raises(ConfigError, match="shape"):
        f1_score(np.zeros((2, 2)), np.zeros((3, 3)))


def test_full_protocol_threshold_from_truth():
    rng = np.random.default_rng(7)
    truth = rng.uniform(0, 1, size=(50, 50))
    pred = truth + rng.normal(0, 0.01, size=truth.shape)
    report = evaluate_damage_maps(truth, pred)
    assert report.threshold == pytest.approx(damage_threshold(truth))
    assert report.f1 > 0.5


def test_full_protocol_self_comparison_is_one():
    rng = np.random.default_rng(8)
    truth = rng.uniform(0, 1, size=(30, 30))
    assert evaluate_damage_maps(truth, truth).f1 == 1.0


# -- curve metrics ------------------------------------------------------------------


def make_curve(scale=1.0):
    strain = np.linspace(0.0, 1e-3, 11)
    stress = scale * np.sin(strain / 1e-3 * np.pi) * 4.0
    stress[0] = 0.0
    return StressStrainCurve(strain=strain, stress=stress)


def test_curve_metrics_identical():
    peak, energy = curve_metrics(make_curve(), make_curve())
    assert peak == 0.0
    assert energy == 0.0


def test_curve_metrics_scaled_by_1_1():
    peak, energy = curve_metrics(make_curve(), make_curve(scale=1.1))
    assert peak == pytest.approx(0.1, rel=1e-9)
    assert energy == pytest.approx(0.1, rel=1e-9)


def test_curve_metrics_resampled_grid():
    truth = make_curve()
    strain = np.linspace(0.0, 1e-3, 101)
    # piecewise-linear resample of the same curve
    stress = np.interp(strain, truth.strain, truth.stress)
    pred = StressStrainCurve(strain=strain, stress=stress)
    peak, _ = curve_metrics(truth, pred)
    assert peak < 1e-12


def test_curve_metrics_zero_truth_raises():
    flat = StressStrainCurve(strain=np.array([0.0, 1e-3]), stress=np.array([0.0, 0.0]))
    with pytest.raises(ConfigError):
        curve_metrics(flat, make_curve())

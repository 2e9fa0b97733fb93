"""Damage-map comparison metrics: thresholded F1 plus curve errors.

A damage threshold is taken as the 99th percentile of the ground-truth map
and applied to both maps; the binarized maps are then compared cell-wise.
Empty-positive edge cases (early-loading frames) score 0 instead of
raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .postproc import StressStrainCurve, fracture_energy


@dataclass
class F1Report:
    threshold: float
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    false_negatives: int


def damage_threshold(truth: np.ndarray, percentile: float = 99.0, method: str = "linear") -> float:
    """Percentile of the truth map.

    ``linear`` interpolates between order statistics at the (m + 1) * p
    plotting position; ``nearest_rank`` returns the ceil(m * p)-th order
    statistic.
    """
    values = np.sort(np.asarray(truth, dtype=float).ravel())
    m = values.size
    if m == 0:
        raise ConfigError("empty damage map")
    q = percentile / 100.0
    if method == "linear":
        h = (m + 1) * q
        if h <= 1.0:
            return float(values[0])
        if h >= m:
            return float(values[-1])
        k = int(np.floor(h))
        frac = h - k
        return float(values[k - 1] + frac * (values[k] - values[k - 1]))
    if method == "nearest_rank":
        k = max(int(np.ceil(m * q)), 1)
        return float(values[k - 1])
    raise ConfigError(f"unknown percentile method '{method}'")


def binarize(damage_map: np.ndarray, threshold: float) -> np.ndarray:
    """1 where strictly above the threshold; ties fall below."""
    return (np.asarray(damage_map) > threshold).astype(np.uint8)


def f1_score(truth_bin: np.ndarray, pred_bin: np.ndarray, threshold: float = float("nan")) -> F1Report:
    """Precision/recall/F1 from cell-wise TP, FP, FN counts."""
    truth_bin = np.asarray(truth_bin)
    pred_bin = np.asarray(pred_bin)
    if truth_bin.shape != pred_bin.shape:
        raise ConfigError(
            f"shape mismatch: truth {truth_bin.shape} vs prediction {pred_bin.shape}"
        )
    t = truth_bin != 0
    p = pred_bin != 0
    tp = int(np.count_nonzero(t & p))
    fp = int(np.count_nonzero(~t & p))
    fn = int(np.count_nonzero(t & ~p))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return F1Report(
        threshold=threshold,
        precision=precision,
        recall=recall,
        f1=f1,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
    )


def evaluate_damage_maps(truth: np.ndarray, pred: np.ndarray, percentile: float = 99.0) -> F1Report:
    """Full protocol: threshold from the truth map, applied to both maps."""
    thr = damage_threshold(truth, percentile)
    return f1_score(binarize(truth, thr), binarize(pred, thr), threshold=thr)


def curve_metrics(truth: StressStrainCurve, pred: StressStrainCurve) -> tuple[float, float]:
    """Relative errors of peak stress and of dissipated energy."""
    truth.validate()
    pred.validate()
    peak_truth = float(np.max(truth.stress))
    w_truth = fracture_energy(truth)
    if peak_truth == 0.0:
        raise ConfigError("truth curve has zero peak stress")
    if w_truth == 0.0:
        raise ConfigError("truth curve has zero dissipated energy")
    peak_err = abs(float(np.max(pred.stress)) - peak_truth) / peak_truth
    energy_err = abs(fracture_energy(pred) - w_truth) / w_truth
    return peak_err, energy_err

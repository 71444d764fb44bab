"""Prediction-quality metrics pooled over bits.

Both metrics treat their inputs as flat collections of (probability,
target) pairs: every bit of every frame of every sequence counts once,
so long sequences weigh more than short ones.
"""
from __future__ import annotations

import numpy as np


def cross_entropy_per_bit(pred, actual) -> float:
    """Mean ``-[v log p + (1-v) log(1-p)]`` in nats over all entries.

    Predictions must lie strictly inside (0, 1); the model side of this
    package guarantees that.  Targets may be fractional (stacked layers
    train against activations), in which case this is the usual
    cross-entropy between two Bernoulli distributions per bit.
    """
    p = np.asarray(pred, dtype=np.float64)
    v = np.asarray(actual, dtype=np.float64)
    if p.shape != v.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {v.shape}")
    if p.size == 0:
        raise ValueError("no entries to score")
    return float(np.mean(-(v * np.log(p) + (1.0 - v) * np.log1p(-p))))


def fraction_correct(pred, actual) -> float:
    """Share of bits where thresholding the prediction at 1/2 recovers the
    target; a prediction of exactly 1/2 rounds to 0."""
    p = np.asarray(pred, dtype=np.float64)
    v = np.asarray(actual, dtype=np.float64)
    if p.shape != v.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {v.shape}")
    if p.size == 0:
        raise ValueError("no entries to score")
    return float(np.mean((p > 0.5) == (v > 0.5)))


class PooledMetrics:
    """Accumulates (prediction, target) blocks and reports pooled scores."""

    def __init__(self):
        self._preds = []
        self._actuals = []

    def add(self, pred, actual):
        pred = np.asarray(pred, dtype=np.float64)
        actual = np.asarray(actual, dtype=np.float64)
        if pred.shape != actual.shape:
            raise ValueError(f"shape mismatch: {pred.shape} vs {actual.shape}")
        if pred.size:
            self._preds.append(pred.reshape(-1))
            self._actuals.append(actual.reshape(-1))

    @property
    def empty(self) -> bool:
        return not self._preds

    def cross_entropy(self) -> float:
        return cross_entropy_per_bit(np.concatenate(self._preds),
                                     np.concatenate(self._actuals))

    def correct_ratio(self) -> float:
        return fraction_correct(np.concatenate(self._preds),
                                np.concatenate(self._actuals))

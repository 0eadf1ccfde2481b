"""Map-quality and mission metrics: confidence histograms, the derived
low-confidence threshold, the low-confidence region ratio and exploration
curves."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

BIN_EDGES = np.linspace(0.0, 1.0, 11)


class ConfidenceHistogram:
    """Counts over ten bins of width 0.1. Bin k holds (k/10, (k+1)/10];
    confidence 0 goes into the first bin."""

    def __init__(self, counts=None):
        self.counts = np.zeros(10, dtype=np.int64) if counts is None else np.asarray(counts, dtype=np.int64).copy()
        if self.counts.shape != (10,):
            raise ValueError("histogram needs 10 bins")

    @staticmethod
    def bin_of(values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        return np.clip(np.searchsorted(BIN_EDGES, v, side="left") - 1, 0, 9)

    def add(self, values) -> None:
        v = np.asarray(values, dtype=np.float64).ravel()
        v = v[np.isfinite(v)]
        if v.size:
            self.counts += np.bincount(self.bin_of(v), minlength=10)

    def merge(self, other: "ConfidenceHistogram") -> "ConfidenceHistogram":
        return ConfidenceHistogram(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def derive_threshold(hist: ConfidenceHistogram, tail: float) -> float:
    """Largest bin edge whose share of observations at or below it is at
    most `tail`."""
    if not 0.0 < tail < 1.0:
        raise ValueError("tail must lie in (0, 1)")
    total = hist.total
    if total == 0:
        raise ValueError("empty histogram")
    cum = np.concatenate([[0], np.cumsum(hist.counts)])
    best = 0
    for k in range(11):
        if cum[k] / total <= tail:
            best = k
    return best / 10


def low_confidence_ratio(confidences, threshold: float) -> float | None:
    """Percentage of observed cells with confidence <= threshold. Accepts a
    GlobalConfidenceMap or an array of observed confidences."""
    values = confidences.observed() if hasattr(confidences, "observed") else np.asarray(confidences, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return None
    return 100.0 * np.count_nonzero(values <= threshold) / values.size


def exploration_curve(rows: Sequence[dict], sample_dt: float, horizon: float) -> np.ndarray:
    """Explored volume held piecewise constant at t = 0, dt, ..., horizon.
    Values after the last row repeat it."""
    if not rows:
        raise ValueError("empty record")
    t = np.array([r["t"] for r in rows], dtype=np.float64)
    v = np.array([r["explored_volume"] for r in rows], dtype=np.float64)
    samples = np.arange(0.0, horizon + 0.5 * sample_dt, sample_dt)
    idx = np.searchsorted(t, samples, side="right") - 1
    vol = v[np.clip(idx, 0, len(v) - 1)]
    vol = np.where(idx < 0, v[0], vol)
    return np.column_stack([samples, vol])


def mean_curve(curves: Sequence[np.ndarray]) -> np.ndarray:
    stack = np.stack([c[:, 1] for c in curves])
    return np.column_stack([curves[0][:, 0], stack.mean(axis=0)])


def mean_or_none(values) -> float | None:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else None

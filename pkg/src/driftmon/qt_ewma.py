"""Online EWMA monitoring of QuantTree bin frequencies.

The detector keeps one exponentially weighted frequency Z_k per bin,
updates them as each sample arrives, and compares the Pearson-like
divergence of Z from the target bin probabilities against a calibrated,
time-varying threshold.
"""

from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from .errors import ConfigError
from .quanttree import QuantTreeHistogram, locate_bin
from .thresholds import ThresholdTable

DEFAULT_LAMBDA = 0.03


class QtEwmaDetector:
    """Sequential detector; one instance per stream.

    State: Z (length-K vector of EWMA bin frequencies), sample counter t,
    and the last computed statistic. After a detection the detector
    freezes; restart by constructing a new instance.
    """

    def __init__(self, hist: QuantTreeHistogram, lam: float, thresholds: ThresholdTable):
        if not 0.0 < lam < 1.0:
            raise ConfigError(f"lambda must be in (0, 1), got {lam}")
        if thresholds.n_bins != hist.n_bins:
            raise ConfigError(
                f"threshold table n_bins={thresholds.n_bins} does not match "
                f"histogram n_bins={hist.n_bins}"
            )
        if thresholds.lam != lam:
            raise ConfigError(
                f"threshold table lambda={thresholds.lam} does not match lambda={lam}"
            )
        if thresholds.train_size != hist.train_size:
            raise ConfigError(
                f"threshold table train_size={thresholds.train_size} does not match "
                f"histogram train_size={hist.train_size}"
            )
        self.hist = hist
        self.lam = float(lam)
        self.thresholds = thresholds
        self.z = hist.target_probs.copy()
        self.t = 0
        self.last_statistic = 0.0
        self.detected = False
        self.detection_time: Optional[int] = None

    def update_from_bin(self, bin_index: int) -> tuple[float, bool]:
        """Advance the statistic with a precomputed bin index."""
        if self.detected:
            return self.last_statistic, True
        self.t += 1
        self.z *= 1.0 - self.lam
        self.z[bin_index] += self.lam
        pi = self.hist.target_probs
        stat = float(((self.z - pi) ** 2 / pi).sum())
        self.last_statistic = stat
        if stat > self.thresholds.at(self.t):
            self.detected = True
            self.detection_time = self.t
        return stat, self.detected

    def update(self, x) -> tuple[float, bool]:
        """Process one sample; returns (statistic, detected)."""
        if self.detected:
            return self.last_statistic, True
        return self.update_from_bin(locate_bin(self.hist, x))


def new_detector(hist: QuantTreeHistogram, lam: float, thresholds: ThresholdTable) -> QtEwmaDetector:
    return QtEwmaDetector(hist, lam, thresholds)


def run_stream(detector: QtEwmaDetector, data, trace_path=None) -> Optional[int]:
    """Feed rows of ``data`` through the detector until it fires.

    Returns the 1-based detection time, or None if the stream ends first.
    With ``trace_path`` set, writes one CSV row (t, bin, statistic,
    threshold, detected) per processed sample.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    trace_fh = open(trace_path, "w", newline="", encoding="utf-8") if trace_path else None
    try:
        writer = None
        if trace_fh is not None:
            writer = csv.writer(trace_fh)
            writer.writerow(["t", "bin", "statistic", "threshold", "detected"])
        for row in data:
            if detector.detected:
                break
            k = locate_bin(detector.hist, row)
            stat, detected = detector.update_from_bin(k)
            if writer is not None:
                writer.writerow(
                    [detector.t, k, repr(stat), repr(detector.thresholds.at(detector.t)), int(detected)]
                )
            if detected:
                return detector.detection_time
    finally:
        if trace_fh is not None:
            trace_fh.close()
    return detector.detection_time

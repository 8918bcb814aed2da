"""Calibrated threshold tables for the EWMA bin-frequency detector.

A table holds the time-varying detection thresholds h_1..h_t_max and the
metadata identifying the Monte Carlo simulation that produced it; beyond
t_max the last threshold is held constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .seeding import RNG_ALGORITHM

TABLE_FORMAT_VERSION = 1
TAIL_CONSTANT = "constant"


@dataclass(frozen=True)
class ThresholdTable:
    n_bins: int
    lam: float
    arl0_target: float
    train_size: int
    t_max: int
    replicates: int
    seed: int
    thresholds: np.ndarray = field(repr=False)
    tail_rule: str = TAIL_CONSTANT

    def __post_init__(self):
        h = np.asarray(self.thresholds, dtype=float)
        if h.shape != (self.t_max,):
            raise FormatError(
                f"threshold vector has length {h.size}, expected t_max={self.t_max}"
            )
        if not np.all(h > 0.0):
            raise FormatError("thresholds must be strictly positive")
        if self.tail_rule != TAIL_CONSTANT:
            raise FormatError(f"unknown tail rule {self.tail_rule!r}")
        object.__setattr__(self, "thresholds", h)

    @property
    def alpha(self) -> float:
        return 1.0 / self.arl0_target

    def at(self, t: int) -> float:
        """Threshold for the t-th sample (1-based); constant beyond t_max."""
        if t < 1:
            raise InputError(f"threshold index must be >= 1, got {t}")
        return float(self.thresholds[min(t, self.t_max) - 1])

    def head(self, horizon: int) -> np.ndarray:
        """Thresholds for t = 1..horizon as an array, tail rule applied."""
        idx = np.minimum(np.arange(1, horizon + 1), self.t_max) - 1
        return self.thresholds[idx]


def table_to_dict(table: ThresholdTable) -> dict:
    return {
        "format_version": TABLE_FORMAT_VERSION,
        "kind": "qt-ewma-thresholds",
        "rng": RNG_ALGORITHM,
        "n_bins": table.n_bins,
        "lambda": table.lam,
        "arl0_target": table.arl0_target,
        "train_size": table.train_size,
        "t_max": table.t_max,
        "replicates": table.replicates,
        "seed": table.seed,
        "tail_rule": table.tail_rule,
        "thresholds": [float(h) for h in table.thresholds],
    }


def table_from_dict(payload: dict) -> ThresholdTable:
    try:
        if payload["format_version"] != TABLE_FORMAT_VERSION:
            raise FormatError(
                f"unsupported table format_version {payload['format_version']!r}"
            )
        return ThresholdTable(
            n_bins=int(payload["n_bins"]),
            lam=float(payload["lambda"]),
            arl0_target=float(payload["arl0_target"]),
            train_size=int(payload["train_size"]),
            t_max=int(payload["t_max"]),
            replicates=int(payload["replicates"]),
            seed=int(payload["seed"]),
            thresholds=np.asarray(payload["thresholds"], dtype=float),
            tail_rule=str(payload["tail_rule"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed threshold table: {exc}") from exc


def save_table(table: ThresholdTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_to_dict(table), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_table(path) -> ThresholdTable:
    # missing file raises OSError, distinct from FormatError on bad content
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"corrupt threshold table {path}: {exc}") from exc
    return table_from_dict(payload)

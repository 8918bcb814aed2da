"""Experiment harness: empirical ARL0, detection delay, grid experiments.

Every replicate draws its own training set and stream from seeds derived
from (master seed, replicate index), so reports are reproducible and
independent of execution order. The default engine prepares replicates
sequentially and then steps their detection recursions in lockstep with
numpy; the "sequential" engine runs the plain online monitors and is
used to validate the batch path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import ecdd as ecdd_mod
from .cdm import CdmMonitor, fit_class_histograms
from .datastreams import (
    GaussianMixtureConfig,
    generate_stream,
    sample_mixture,
    sample_training,
    skl_gaussian,
)
from .engine import batch_first_exceed, ecdd_first_exceed
from .errors import ConfigError, DriftmonError
from .qt_ewma import QtEwmaDetector
from .quanttree import locate_bins
from .seeding import derive_seed
from .thresholds import ThresholdTable


@dataclass
class CdmMethod:
    """Per-class monitoring (or the pooled single-histogram baseline)."""

    table: ThresholdTable
    n_bins: int = 16
    lam: float = 0.03
    train_per_class: int = 256
    pooled: bool = False  # merge all labels: monitor the overall distribution
    name: str = "cdm"


@dataclass
class EcddMethod:
    """Error-rate chart over a fixed classifier."""

    limit: float
    classifier: str = "lda"
    knn_k: int = 9
    r: float = ecdd_mod.DEFAULT_R
    prior_weight: float = ecdd_mod.DEFAULT_PRIOR_WEIGHT
    train_per_class: int = 256
    cv_folds: int = 5
    name: str = "ecdd"


@dataclass
class ExperimentReport:
    method: str
    scenario: str
    metric: str                 # "arl0" or "delay"
    replicates: int
    mean: Optional[float]
    stderr: Optional[float]
    detections: int
    false_alarms: int
    censored: int
    tau: int
    horizon: int
    seed: int
    config_hash: str
    t_star: np.ndarray = field(repr=False)
    m_star: Optional[np.ndarray] = field(repr=False, default=None)
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "scenario": self.scenario,
            "metric": self.metric,
            "replicates": self.replicates,
            "mean": self.mean,
            "stderr": self.stderr,
            "detections": self.detections,
            "false_alarms": self.false_alarms,
            "censored": self.censored,
            "tau": self.tau,
            "horizon": self.horizon,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "degenerate": self.degenerate,
        }


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, default=_jsonable)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, ThresholdTable):
        return {
            "n_bins": obj.n_bins, "lambda": obj.lam, "arl0": obj.arl0_target,
            "train_size": obj.train_size, "seed": obj.seed,
        }
    if hasattr(obj, "__dict__"):
        return {k: v for k, v in vars(obj).items()}
    raise TypeError(f"not hashable for config: {type(obj)}")


def stationary(cfg: GaussianMixtureConfig) -> GaussianMixtureConfig:
    """The pre-change distribution of ``cfg`` with no change point."""
    return GaussianMixtureConfig(
        means=cfg.means.copy(), covs=cfg.covs.copy(), priors=cfg.priors.copy(), tau=0
    )


# ---------------------------------------------------------------------------
# replicate runners


def _cdm_rows(method: CdmMethod, cfg: GaussianMixtureConfig, length: int,
              rep_seed: int):
    """Per-class bin sequences and global positions for one replicate."""
    tx, ty = sample_training(cfg, method.train_per_class, derive_seed(rep_seed, 0))
    if method.pooled:
        ty = np.ones_like(ty)
    hists = fit_class_histograms(tx, ty, method.n_bins, derive_seed(rep_seed, 1))
    stream = generate_stream(cfg, length, derive_seed(rep_seed, 2))
    labels = np.ones(len(stream), dtype=np.int64) if method.pooled else stream.y
    rows = []
    for m, hist in hists.items():
        pos = np.flatnonzero(labels == m) + 1  # 1-based global positions
        rows.append((m, locate_bins(hist, stream.x[pos - 1]), pos))
    return rows


def _run_cdm_batch(method: CdmMethod, cfg: GaussianMixtureConfig, replicates: int,
                   length: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    all_rows = []
    owners = []
    for i in range(replicates):
        for m, bins, pos in _cdm_rows(method, cfg, length, derive_seed(seed, i)):
            all_rows.append((bins, pos))
            owners.append((i, m))
    lengths = np.array([len(bins) for bins, _ in all_rows], dtype=np.int64)
    t_pad = int(lengths.max(initial=0))
    packed = np.zeros((len(all_rows), t_pad), dtype=np.int16)
    for r, (bins, _) in enumerate(all_rows):
        packed[r, : len(bins)] = bins
    steps = batch_first_exceed(
        packed, lengths, method.n_bins, method.lam, method.table.head(t_pad)
    )
    t_star = np.zeros(replicates, dtype=np.int64)
    m_star = np.zeros(replicates, dtype=np.int64)
    for r, step in enumerate(steps):
        if step == 0:
            continue
        i, m = owners[r]
        global_t = int(all_rows[r][1][step - 1])
        if t_star[i] == 0 or global_t < t_star[i]:
            t_star[i] = global_t
            m_star[i] = m
    return t_star, m_star


def _run_cdm_sequential(method: CdmMethod, cfg: GaussianMixtureConfig, replicates: int,
                        length: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    t_star = np.zeros(replicates, dtype=np.int64)
    m_star = np.zeros(replicates, dtype=np.int64)
    for i in range(replicates):
        rep_seed = derive_seed(seed, i)
        tx, ty = sample_training(cfg, method.train_per_class, derive_seed(rep_seed, 0))
        if method.pooled:
            ty = np.ones_like(ty)
        hists = fit_class_histograms(tx, ty, method.n_bins, derive_seed(rep_seed, 1))
        detectors = {m: QtEwmaDetector(h, method.lam, method.table)
                     for m, h in hists.items()}
        monitor = CdmMonitor(detectors)
        stream = generate_stream(cfg, length, derive_seed(rep_seed, 2))
        for j in range(len(stream)):
            y = 1 if method.pooled else int(stream.y[j])
            detection = monitor.process(stream.x[j], y)
            if detection is not None:
                t_star[i] = detection.t_star
                m_star[i] = detection.m_star
                break
    return t_star, m_star


def _run_ecdd(method: EcddMethod, cfg: GaussianMixtureConfig, replicates: int,
              length: int, seed: int) -> tuple[np.ndarray, None]:
    errors = np.empty((replicates, length), dtype=np.uint8)
    p0 = np.empty(replicates)
    for i in range(replicates):
        rep_seed = derive_seed(seed, i)
        tx, ty = sample_training(cfg, method.train_per_class, derive_seed(rep_seed, 0))
        clf = ecdd_mod.fit_classifier(method.classifier, tx, ty, k=method.knn_k)
        p0[i] = ecdd_mod.cross_val_error(
            method.classifier, tx, ty, n_folds=method.cv_folds,
            seed=derive_seed(rep_seed, 1), k=method.knn_k,
        )
        stream = generate_stream(cfg, length, derive_seed(rep_seed, 2))
        errors[i] = clf.predict(stream.x) != stream.y
    t_star = ecdd_first_exceed(errors, p0, method.prior_weight, method.r, method.limit)
    return t_star, None


def _run_ecdd_sequential(method: EcddMethod, cfg: GaussianMixtureConfig,
                         replicates: int, length: int, seed: int):
    t_star = np.zeros(replicates, dtype=np.int64)
    for i in range(replicates):
        rep_seed = derive_seed(seed, i)
        tx, ty = sample_training(cfg, method.train_per_class, derive_seed(rep_seed, 0))
        clf = ecdd_mod.fit_classifier(method.classifier, tx, ty, k=method.knn_k)
        p0 = ecdd_mod.cross_val_error(
            method.classifier, tx, ty, n_folds=method.cv_folds,
            seed=derive_seed(rep_seed, 1), k=method.knn_k,
        )
        stream = generate_stream(cfg, length, derive_seed(rep_seed, 2))
        state = ecdd_mod.ecdd_init(p0, method.r, method.limit, method.prior_weight)
        report = ecdd_mod.ecdd_monitor_stream(clf, iter(stream), state)
        if report["detected"]:
            t_star[i] = report["t_star"]
    return t_star, None


def _dispatch(method, cfg, replicates, length, seed, engine):
    if isinstance(method, CdmMethod):
        per_hist = method.train_per_class * (len(cfg.means) if method.pooled else 1)
        if per_hist != method.table.train_size:
            raise ConfigError(
                f"training size per histogram {per_hist} does not match "
                f"the threshold table's train_size {method.table.train_size}"
            )
        if method.n_bins != method.table.n_bins:
            raise ConfigError(
                f"n_bins {method.n_bins} does not match the threshold "
                f"table's n_bins {method.table.n_bins}"
            )
        runner = _run_cdm_batch if engine == "batch" else _run_cdm_sequential
    elif isinstance(method, EcddMethod):
        runner = _run_ecdd if engine == "batch" else _run_ecdd_sequential
    else:
        raise ConfigError(f"unknown method type {type(method).__name__}")
    return runner(method, cfg, replicates, length, seed)


# ---------------------------------------------------------------------------
# figures of merit


def estimate_arl0(method, cfg: GaussianMixtureConfig, replicates: int, horizon: int,
                  seed: int, engine: str = "batch") -> ExperimentReport:
    """Empirical ARL0: mean detection time on stationary streams.

    Runs that reach the horizon without detecting are censored and
    counted separately rather than folded into the mean.
    """
    if isinstance(method, CdmMethod) and horizon < 10 * method.table.arl0_target:
        raise ConfigError(
            f"horizon {horizon} < 10 x target ARL0 {method.table.arl0_target}"
        )
    cfg0 = stationary(cfg)
    t_star, m_star = _dispatch(method, cfg0, replicates, horizon, seed, engine)
    detected = t_star > 0
    times = t_star[detected].astype(float)
    mean = float(times.mean()) if times.size else None
    stderr = float(times.std(ddof=1) / np.sqrt(times.size)) if times.size > 1 else None
    return ExperimentReport(
        method=method.name, scenario="stationary", metric="arl0",
        replicates=replicates, mean=mean, stderr=stderr,
        detections=int(detected.sum()), false_alarms=int(detected.sum()),
        censored=int(replicates - detected.sum()), tau=0, horizon=horizon,
        seed=seed, config_hash=config_hash({"method": vars(method), "cfg": vars(cfg0),
                                            "replicates": replicates,
                                            "horizon": horizon, "seed": seed}),
        t_star=t_star, m_star=m_star, degenerate=not times.size,
    )


def estimate_delay(method, cfg: GaussianMixtureConfig, replicates: int, seed: int,
                   post_length: int = 7000, engine: str = "batch") -> ExperimentReport:
    """Mean detection delay t* - tau over runs with no false alarm.

    Detections at or before tau count as false alarms and are excluded
    from the delay mean; undetected runs are censored at the horizon.
    """
    if cfg.tau <= 0:
        raise ConfigError("delay estimation needs a change point tau > 0")
    horizon = cfg.tau + post_length
    t_star, m_star = _dispatch(method, cfg, replicates, horizon, seed, engine)
    valid = t_star > cfg.tau
    delays = (t_star[valid] - cfg.tau).astype(float)
    false_alarms = int(((t_star > 0) & (t_star <= cfg.tau)).sum())
    censored = int((t_star == 0).sum())
    mean = float(delays.mean()) if delays.size else None
    stderr = float(delays.std(ddof=1) / np.sqrt(delays.size)) if delays.size > 1 else None
    return ExperimentReport(
        method=method.name, scenario=f"drift@tau={cfg.tau}", metric="delay",
        replicates=replicates, mean=mean, stderr=stderr,
        detections=int(valid.sum()), false_alarms=false_alarms, censored=censored,
        tau=cfg.tau, horizon=horizon, seed=seed,
        config_hash=config_hash({"method": vars(method), "cfg": vars(cfg),
                                 "replicates": replicates, "horizon": horizon,
                                 "seed": seed}),
        t_star=t_star, m_star=m_star, degenerate=not delays.size,
    )


def estimate_error_rate(classifier, cfg: GaussianMixtureConfig, samples: int,
                        seed: int, post: bool = False) -> float:
    """Monte Carlo misclassification rate under the pre/post mixture."""
    x, y = sample_mixture(cfg, samples, seed, post=post)
    return float((classifier.predict(x) != y).mean())


def grid_cells(center, x_offsets=(-1.5, 0.5), y_offsets=(-1.0, 1.0),
               nx: int = 9, ny: int = 9) -> list[tuple[float, float]]:
    """Lattice of post-change means around ``center`` (row-major)."""
    xs = np.linspace(center[0] + x_offsets[0], center[0] + x_offsets[1], nx)
    ys = np.linspace(center[1] + y_offsets[0], center[1] + y_offsets[1], ny)
    return [(float(x), float(y)) for x in xs for y in ys]


def run_grid_experiment(cfg_base: GaussianMixtureConfig, methods: dict,
                        replicates: int, seed: int,
                        cells: Optional[list[tuple[float, float]]] = None,
                        drift_class: int = 2, post_length: int = 7000,
                        error_samples: int = 200_000,
                        error_train_per_class: int = 4096) -> list[dict]:
    """Mean detection delay per (cell, method) plus (p1 - p0, sKL) per cell.

    Each cell translates the drifted class's post-change mean to the cell
    coordinates. A single LDA classifier fitted on the stationary mixture
    supplies the error-rate contours. Failed cells are marked and the run
    continues.
    """
    if cells is None:
        cells = grid_cells(cfg_base.means[drift_class - 1])
    if not cells:
        raise ConfigError("grid is empty")
    if cfg_base.tau <= 0:
        raise ConfigError("grid experiment needs a change point tau > 0")
    cfg0 = stationary(cfg_base)
    etx, ety = sample_training(cfg0, error_train_per_class, derive_seed(seed, 900_000))
    err_clf = ecdd_mod.fit_classifier("lda", etx, ety)
    p0 = estimate_error_rate(err_clf, cfg0, error_samples, derive_seed(seed, 900_001))

    rows = []
    cov = cfg_base.covs[drift_class - 1]
    for ci, (cx, cy) in enumerate(cells):
        post_means = cfg_base.post_means.copy()
        post_means[drift_class - 1] = (cx, cy)
        cfg_cell = GaussianMixtureConfig(
            means=cfg_base.means.copy(), covs=cfg_base.covs.copy(),
            priors=cfg_base.priors.copy(), post_means=post_means,
            post_covs=cfg_base.post_covs.copy(), tau=cfg_base.tau,
        )
        skl = skl_gaussian(cfg_base.means[drift_class - 1], cov, (cx, cy), cov)
        p1 = estimate_error_rate(err_clf, cfg_cell, error_samples,
                                 derive_seed(seed, 900_002 + ci), post=True)
        for mi, (name, method) in enumerate(sorted(methods.items())):
            base = {
                "mu_x": cx, "mu_y": cy, "method": name,
                "skl": skl, "p1_minus_p0": p1 - p0,
            }
            try:
                rep = estimate_delay(method, cfg_cell, replicates,
                                     derive_seed(seed, ci * 100 + mi),
                                     post_length=post_length)
            except DriftmonError as exc:
                rows.append({**base, "mean_delay": None, "failed": str(exc)})
                continue
            rows.append({
                **base,
                "mean_delay": rep.mean,
                "stderr": rep.stderr,
                "detections": rep.detections,
                "false_alarms": rep.false_alarms,
                "censored": rep.censored,
                "failed": "",
            })
    return rows


def average_ranks(delays: dict[str, "list[float]"]) -> dict[str, float]:
    """Average per-scenario rank of each method (1 = fastest, ties share)."""
    methods = list(delays)
    if not methods:
        raise ConfigError("no methods to rank")
    n_scenarios = len(delays[methods[0]])
    table = np.empty((len(methods), n_scenarios))
    for i, m in enumerate(methods):
        vals = np.asarray(delays[m], dtype=float)
        if vals.shape != (n_scenarios,) or not np.all(np.isfinite(vals)):
            raise ConfigError(f"method {m!r} is missing delays for some scenarios")
        table[i] = vals
    rank_sum = np.zeros(len(methods))
    for s in range(n_scenarios):
        rank_sum += _tied_ranks(table[:, s])
    return {m: float(rank_sum[i] / n_scenarios) for i, m in enumerate(methods)}


def _tied_ranks(vals: np.ndarray) -> np.ndarray:
    order = np.argsort(vals, kind="stable")
    ranks = np.empty(len(vals))
    i = 0
    while i < len(vals):
        j = i
        while j < len(vals) and vals[order[j]] == vals[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    return ranks

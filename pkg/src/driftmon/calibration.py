"""Monte Carlo calibration of detection thresholds.

Because the EWMA bin statistic depends only on the sequence of bin
indices, thresholds can be calibrated on cheap 1-D uniform surrogates:
each replicate builds a fresh histogram on uniform training data and
streams fresh uniforms through the recursion. The peeling quantile
scheme then sets h_t so that the conditional exceedance probability is
a constant alpha at every step.
"""

from __future__ import annotations

import numpy as np

from .ecdd import DEFAULT_PRIOR_WEIGHT
from .engine import ecdd_required_limit, ewma_statistics
from .errors import CalibrationError, ConfigError
from .quanttree import _bin_allocation, build_quanttree, locate_bins, uniform_probs
from .seeding import derive_seed, rng_from
from .thresholds import ThresholdTable

DEFAULT_T_MAX = 500
DEFAULT_REPLICATES = 100_000
SURVIVOR_FLOOR = 1000


def simulate_stationary_trajectory(train_size: int, n_bins: int, lam: float,
                                   horizon: int, seed: int) -> np.ndarray:
    """Statistic trajectory T_1..T_horizon on a fresh stationary stream.

    Builds a histogram on 1-D uniform training data and streams uniform
    samples through the recursion with no thresholds applied.
    """
    if train_size < n_bins:
        raise ConfigError(f"train_size {train_size} < n_bins {n_bins}")
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    training = rng_from(derive_seed(seed, 0)).random((train_size, 1))
    hist = build_quanttree(training, uniform_probs(n_bins), derive_seed(seed, 1))
    stream = rng_from(derive_seed(seed, 2)).random((horizon, 1))
    return ewma_statistics(locate_bins(hist, stream), hist.target_probs, lam)


def _uniform_tree_batch(n_train: int, n_bins: int, n_rep: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized 1-D histogram construction on uniform training data.

    Returns (edges, perm): ``edges`` holds the K-1 interval boundaries
    sorted left to right, ``perm`` maps the i-th interval from the left
    to its bin index. Equivalent in distribution to building each tree
    with the generic constructor on 1-D data.
    """
    pi = uniform_probs(n_bins)
    x = np.sort(rng.random((n_rep, n_train)), axis=1)
    rows = np.arange(n_rep)
    lo = np.zeros(n_rep, dtype=np.int64)
    hi = np.full(n_rep, n_train, dtype=np.int64)
    li = np.zeros(n_rep, dtype=np.int64)          # next interval slot from the left
    ri = np.full(n_rep, n_bins - 1, dtype=np.int64)  # next slot from the right
    edges = np.empty((n_rep, n_bins - 1))
    perm = np.empty((n_rep, n_bins), dtype=np.int64)
    n_rem = n_train
    for k in range(n_bins - 1):
        count = _bin_allocation(n_rem, pi, k)
        lower = rng.random(n_rep) < 0.5
        thr_low = 0.5 * (x[rows, lo + count - 1] + x[rows, lo + count])
        thr_up = 0.5 * (x[rows, hi - count - 1] + x[rows, hi - count])
        edges[rows, np.where(lower, li, ri - 1)] = np.where(lower, thr_low, thr_up)
        perm[rows, np.where(lower, li, ri)] = k
        lo += np.where(lower, count, 0)
        hi -= np.where(lower, 0, count)
        li += lower
        ri -= ~lower
        n_rem -= count
    perm[rows, li] = n_bins - 1
    return edges, perm


def _draw_bins(edges: np.ndarray, perm: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[:, None] > edges).sum(axis=1)
    return perm[np.arange(len(u)), idx]


def calibrate_thresholds(train_size: int, n_bins: int, lam: float, arl0_target: float,
                         t_max: int = DEFAULT_T_MAX,
                         replicates: int = DEFAULT_REPLICATES,
                         seed: int = 0,
                         survivor_floor: int = SURVIVOR_FLOOR,
                         tree_chunk: int = 20_000) -> ThresholdTable:
    """Peeling quantile calibration of the threshold sequence h_1..h_t_max.

    At each step the empirical (1 - alpha) nearest-rank quantile of the
    statistic among surviving replicates becomes h_t, and exceeding
    replicates are removed; beyond t_max the last threshold is reused.
    """
    if replicates < 10_000:
        raise ConfigError(f"replicates must be >= 10000, got {replicates}")
    if not 0.0 < lam < 1.0:
        raise ConfigError(f"lambda must be in (0, 1), got {lam}")
    if t_max < 5.0 / lam:
        raise ConfigError(f"t_max must be >= 5/lambda = {5.0 / lam:.0f}, got {t_max}")
    if arl0_target < 2.0:
        raise ConfigError(f"arl0_target must be >= 2, got {arl0_target}")
    if train_size < n_bins:
        raise ConfigError(f"train_size {train_size} < n_bins {n_bins}")

    alpha = 1.0 / arl0_target
    rng = rng_from(seed)
    edge_parts, perm_parts = [], []
    for start in range(0, replicates, tree_chunk):
        n = min(tree_chunk, replicates - start)
        e, p = _uniform_tree_batch(train_size, n_bins, n, rng)
        edge_parts.append(e)
        perm_parts.append(p)
    edges = np.vstack(edge_parts)
    perm = np.vstack(perm_parts)

    pi = 1.0 / n_bins
    z = np.full((replicates, n_bins), pi)
    h = np.empty(t_max)
    for t in range(1, t_max + 1):
        n_alive = edges.shape[0]
        if n_alive < survivor_floor:
            raise CalibrationError(
                f"only {n_alive} surviving replicates at step {t}; "
                f"increase replicates or reduce t_max"
            )
        b = _draw_bins(edges, perm, rng.random(n_alive))
        z *= 1.0 - lam
        z[np.arange(n_alive), b] += lam
        stat = ((z - pi) ** 2 / pi).sum(axis=1)
        rank = int(np.ceil((1.0 - alpha) * n_alive)) - 1
        h_t = float(np.partition(stat, rank)[rank])
        h[t - 1] = h_t
        keep = stat <= h_t
        edges, perm, z = edges[keep], perm[keep], z[keep]

    return ThresholdTable(
        n_bins=n_bins,
        lam=float(lam),
        arl0_target=float(arl0_target),
        train_size=int(train_size),
        t_max=int(t_max),
        replicates=int(replicates),
        seed=int(seed),
        thresholds=h,
    )


def replay_exceedance(table: ThresholdTable, replicates: int, seed: int,
                      horizon: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Held-out replay of a calibrated table on fresh stationary replicates.

    Returns (exceedances, at_risk) per step t = 1..horizon: how many of
    the still-surviving replicates crossed h_t, and how many were at
    risk. exceedances/at_risk estimates the conditional exceedance
    probability, which calibration targets at alpha.
    """
    horizon = table.t_max if horizon is None else horizon
    rng = rng_from(seed)
    edges, perm = _uniform_tree_batch(table.train_size, table.n_bins, replicates, rng)
    pi = 1.0 / table.n_bins
    z = np.full((replicates, table.n_bins), pi)
    h = table.head(horizon)
    exceed = np.zeros(horizon, dtype=np.int64)
    at_risk = np.zeros(horizon, dtype=np.int64)
    for t in range(1, horizon + 1):
        n_alive = edges.shape[0]
        if n_alive == 0:
            break
        at_risk[t - 1] = n_alive
        b = _draw_bins(edges, perm, rng.random(n_alive))
        z *= 1.0 - table.lam
        z[np.arange(n_alive), b] += table.lam
        stat = ((z - pi) ** 2 / pi).sum(axis=1)
        over = stat > h[t - 1]
        exceed[t - 1] = int(over.sum())
        keep = ~over
        edges, perm, z = edges[keep], perm[keep], z[keep]
    return exceed, at_risk


def calibrate_ecdd_limit(p0: float, r: float, arl0_target: float,
                         replicates: int = 5000, seed: int = 0,
                         prior_weight: float = DEFAULT_PRIOR_WEIGHT,
                         horizon: int | None = None,
                         tol: float = 0.02,
                         max_iter: int = 60) -> float:
    """Binary search for the EWMA error-chart control limit L.

    Simulates Bernoulli(p0) error streams through the chart recursion and
    returns the L whose mean detection time is within ``tol`` (relative)
    of ``arl0_target``. Runs that never fire count at the horizon.
    """
    if not 0.0 < p0 < 1.0:
        raise ConfigError(f"p0 must be in (0, 1), got {p0}")
    if not 0.0 < r < 1.0:
        raise ConfigError(f"r must be in (0, 1), got {r}")
    if arl0_target < 2.0:
        raise ConfigError(f"arl0_target must be >= 2, got {arl0_target}")
    horizon = int(20 * arl0_target) if horizon is None else int(horizon)

    rng = rng_from(seed)
    errors = (rng.random((replicates, horizon)) < p0).astype(np.uint8)
    ratio = ecdd_required_limit(errors, np.full(replicates, p0), prior_weight, r)
    run_max = np.maximum.accumulate(ratio, axis=1)

    def mean_detection_time(limit: float) -> float:
        exceed = run_max > limit
        hit = exceed.any(axis=1)
        times = np.where(hit, exceed.argmax(axis=1) + 1, horizon)
        return float(times.mean())

    lo, hi = 0.0, 4.0
    while mean_detection_time(hi) < arl0_target:
        hi *= 2.0
        if hi > 1e4:
            raise CalibrationError("control limit search diverged")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        mean = mean_detection_time(mid)
        if abs(mean - arl0_target) <= tol * arl0_target:
            return mid
        if mean < arl0_target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"control limit search did not converge within {max_iter} iterations"
    )

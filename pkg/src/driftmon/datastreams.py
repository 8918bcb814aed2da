"""Labeled datastream generation and ingestion.

Synthetic streams are Gaussian mixtures with one component per class and
an optional change point tau after which some class-conditionals switch
to their post-change variants. Real streams are read from CSV with a
constant-memory row iterator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .seeding import rng_from


@dataclass
class GaussianMixtureConfig:
    """Pre/post-change class-conditional Gaussians with class priors."""

    means: np.ndarray                      # (M, d) pre-change means
    covs: Optional[np.ndarray] = None      # (M, d, d); None = identity
    priors: Optional[np.ndarray] = None    # (M,); None = uniform
    post_means: Optional[np.ndarray] = None
    post_covs: Optional[np.ndarray] = None
    tau: int = 0

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        m, d = self.means.shape
        if self.priors is None:
            self.priors = np.full(m, 1.0 / m)
        else:
            self.priors = np.asarray(self.priors, dtype=float)
            if self.priors.shape != (m,) or np.any(self.priors < 0):
                raise ConfigError("priors must be a non-negative vector, one per class")
            if abs(self.priors.sum() - 1.0) > 1e-9:
                raise ConfigError("priors must sum to 1")
        self.covs = self._check_covs(self.covs, m, d)
        if self.post_means is None:
            self.post_means = self.means.copy()
        else:
            self.post_means = np.atleast_2d(np.asarray(self.post_means, dtype=float))
            if self.post_means.shape != (m, d):
                raise ConfigError("post_means must match the shape of means")
        self.post_covs = self.covs if self.post_covs is None else self._check_covs(
            self.post_covs, m, d
        )
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")

    @staticmethod
    def _check_covs(covs, m: int, d: int) -> np.ndarray:
        if covs is None:
            return np.broadcast_to(np.eye(d), (m, d, d)).copy()
        covs = np.asarray(covs, dtype=float)
        if covs.shape != (m, d, d):
            raise ConfigError(f"covariances must have shape ({m}, {d}, {d})")
        for c in covs:
            if not np.allclose(c, c.T):
                raise ConfigError("covariances must be symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError as exc:
                raise ConfigError("covariances must be positive definite") from exc
        return covs

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def two_gaussian_config(delta: float = 2.0, class2_shift=(0.0, 0.0), tau: int = 0) -> GaussianMixtureConfig:
    """Default synthetic setting: two identity-covariance Gaussians in 2-D.

    Class 1 sits at the origin, class 2 at [delta, 0]; the post-change
    distribution translates class 2 by ``class2_shift``.
    """
    means = np.array([[0.0, 0.0], [float(delta), 0.0]])
    post = means.copy()
    post[1] += np.asarray(class2_shift, dtype=float)
    return GaussianMixtureConfig(means=means, post_means=post, tau=tau)


@dataclass
class LabeledStream:
    x: np.ndarray                 # (T, d)
    y: np.ndarray                 # (T,) labels in 1..M (value ignored if unlabeled)
    labeled: np.ndarray           # (T,) bool
    tau: Optional[int] = None
    seed: Optional[int] = None
    source: str = "synthetic"

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=np.int64)
        self.labeled = np.asarray(self.labeled, dtype=bool)
        if not (len(self.x) == len(self.y) == len(self.labeled)):
            raise InputError("stream arrays must have equal length")

    def __len__(self) -> int:
        return len(self.x)

    def __iter__(self) -> Iterator[tuple[np.ndarray, Optional[int]]]:
        for i in range(len(self.x)):
            yield self.x[i], int(self.y[i]) if self.labeled[i] else None


def _mixture_draw(cfg: GaussianMixtureConfig, labels: np.ndarray, post: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Transform standard normals into class-conditional draws in stream order."""
    n = len(labels)
    z = rng.standard_normal((n, cfg.dim))
    x = np.empty_like(z)
    for m in range(1, cfg.n_classes + 1):
        for is_post in (False, True):
            mask = (labels == m) & (post == is_post)
            if not mask.any():
                continue
            mean = (cfg.post_means if is_post else cfg.means)[m - 1]
            cov = (cfg.post_covs if is_post else cfg.covs)[m - 1]
            chol = np.linalg.cholesky(cov)
            x[mask] = mean + z[mask] @ chol.T
    return x


def generate_stream(cfg: GaussianMixtureConfig, length: int, seed: int) -> LabeledStream:
    """Draw a labeled stream: pre-change for t <= tau, post-change after."""
    if length < 1:
        raise ConfigError("stream length must be >= 1")
    if cfg.tau > length:
        raise ConfigError(f"tau={cfg.tau} exceeds stream length {length}")
    rng = rng_from(seed)
    labels = rng.choice(cfg.n_classes, size=length, p=cfg.priors) + 1
    post = np.arange(1, length + 1) > cfg.tau
    x = _mixture_draw(cfg, labels, post, rng)
    return LabeledStream(x=x, y=labels, labeled=np.ones(length, dtype=bool),
                         tau=cfg.tau, seed=int(seed))


def sample_mixture(cfg: GaussianMixtureConfig, n: int, seed: int,
                   post: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Draw n labeled points from the pre- or post-change mixture."""
    rng = rng_from(seed)
    labels = rng.choice(cfg.n_classes, size=n, p=cfg.priors) + 1
    x = _mixture_draw(cfg, labels, np.full(n, post), rng)
    return x, labels


def sample_training(cfg: GaussianMixtureConfig, per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Exactly ``per_class`` pre-change draws from every class-conditional."""
    rng = rng_from(seed)
    blocks, labels = [], []
    for m in range(1, cfg.n_classes + 1):
        lab = np.full(per_class, m)
        blocks.append(_mixture_draw(cfg, lab, np.zeros(per_class, bool), rng))
        labels.append(lab)
    return np.vstack(blocks), np.concatenate(labels)


def skl_gaussian(mean0, cov0, mean1, cov1) -> float:
    """Symmetrized Kullback-Leibler divergence between two Gaussians.

    Computed as the average of the two closed-form directed divergences.
    For identity covariances this is half the squared mean distance.
    """
    mean0 = np.asarray(mean0, dtype=float).ravel()
    mean1 = np.asarray(mean1, dtype=float).ravel()
    cov0 = np.asarray(cov0, dtype=float)
    cov1 = np.asarray(cov1, dtype=float)

    def directed(mp, cp, mq, cq):
        d = mp.size
        try:
            cq_inv = np.linalg.inv(cq)
            _, logdet_p = np.linalg.slogdet(cp)
            _, logdet_q = np.linalg.slogdet(cq)
        except np.linalg.LinAlgError as exc:
            raise InputError("covariances must be invertible") from exc
        delta = mq - mp
        return 0.5 * (
            np.trace(cq_inv @ cp) + delta @ cq_inv @ delta - d + logdet_q - logdet_p
        )

    for c in (cov0, cov1):
        try:
            np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise InputError("covariances must be positive definite") from exc
    return float(0.5 * (directed(mean0, cov0, mean1, cov1)
                        + directed(mean1, cov1, mean0, cov0)))


def splice_streams(pre: LabeledStream, post: LabeledStream, tau: int) -> LabeledStream:
    """First tau samples from ``pre`` followed by all of ``post``."""
    if pre.x.shape[1] != post.x.shape[1]:
        raise InputError("streams have different dimensions")
    if tau < 0 or tau > len(pre):
        raise InputError(f"tau={tau} out of range for the pre-change stream")
    return LabeledStream(
        x=np.vstack([pre.x[:tau], post.x]),
        y=np.concatenate([pre.y[:tau], post.y]),
        labeled=np.concatenate([pre.labeled[:tau], post.labeled]),
        tau=tau,
        seed=pre.seed,
        source=f"splice({pre.source},{post.source})",
    )


def subsample_without_replacement(x, y, per_class: int, seed: int):
    """Split (x, y) into a per-class training draw and the remainder."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    rng = rng_from(seed)
    train_idx = []
    for m in np.unique(y):
        idx = np.flatnonzero(y == m)
        if len(idx) < per_class:
            raise InputError(
                f"class {m} has only {len(idx)} samples, need {per_class}"
            )
        train_idx.append(rng.choice(idx, size=per_class, replace=False))
    train_idx = np.sort(np.concatenate(train_idx))
    rest_mask = np.ones(len(y), dtype=bool)
    rest_mask[train_idx] = False
    return (x[train_idx], y[train_idx]), (x[rest_mask], y[rest_mask])


# ---------------------------------------------------------------------------
# CSV ingestion / emission


@dataclass
class CsvSchema:
    """Column layout of a labeled stream CSV.

    By default the last column is the label and all the others are
    features. An empty label field marks an unlabeled sample; label
    tokens may be mapped to integers via ``label_map``.
    """

    label_col: int = -1
    feature_cols: Optional[list[int]] = None
    label_map: Optional[dict[str, int]] = None
    lenient: bool = False


def _parse_label(token: str, schema: CsvSchema, row_number: int) -> Optional[int]:
    token = token.strip()
    if token == "":
        return None
    if schema.label_map is not None:
        if token in schema.label_map:
            return int(schema.label_map[token])
        if schema.lenient:
            return None
        raise FormatError(f"row {row_number}: unknown label token {token!r}")
    try:
        return int(token)
    except ValueError:
        if schema.lenient:
            return None
        raise FormatError(f"row {row_number}: unknown label token {token!r}") from None


def iter_csv_stream(path, schema: CsvSchema | None = None):
    """Yield (features, label-or-None) per CSV row in constant memory.

    A non-numeric first row (in the feature columns) is treated as a
    header and skipped. Malformed rows raise FormatError with the
    1-based row number.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = True
        for row_number, row in enumerate(reader, start=1):
            if not row:
                continue
            label_col = schema.label_col if schema.label_col >= 0 else len(row) + schema.label_col
            feature_cols = schema.feature_cols
            if feature_cols is None:
                feature_cols = [i for i in range(len(row)) if i != label_col]
            if first:
                first = False
                try:
                    [float(row[i]) for i in feature_cols]
                except (ValueError, IndexError):
                    continue  # header row
            try:
                features = np.array([float(row[i]) for i in feature_cols])
            except ValueError as exc:
                raise FormatError(f"row {row_number}: {exc}") from exc
            except IndexError:
                raise FormatError(
                    f"row {row_number}: expected at least {max(feature_cols) + 1} columns"
                ) from None
            if label_col >= len(row) or label_col < 0:
                raise FormatError(f"row {row_number}: missing label column")
            yield features, _parse_label(row[label_col], schema, row_number)


def read_csv_stream(path, schema: CsvSchema | None = None,
                    tau: Optional[int] = None) -> LabeledStream:
    """Materialize a CSV stream (convenience wrapper over the iterator)."""
    xs, ys, labeled = [], [], []
    dim = None
    for features, label in iter_csv_stream(path, schema):
        if dim is None:
            dim = features.size
        elif features.size != dim:
            raise FormatError(f"row {len(xs) + 1}: inconsistent feature count")
        xs.append(features)
        ys.append(0 if label is None else label)
        labeled.append(label is not None)
    if not xs:
        raise FormatError(f"{path}: no data rows")
    return LabeledStream(x=np.array(xs), y=np.array(ys), labeled=np.array(labeled),
                         tau=tau, source=str(path))


def write_csv_stream(stream: LabeledStream, path) -> None:
    """Write features plus a trailing label column (blank if unlabeled)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for i in range(len(stream)):
            row = [repr(float(v)) for v in stream.x[i]]
            row.append(str(int(stream.y[i])) if stream.labeled[i] else "")
            writer.writerow(row)

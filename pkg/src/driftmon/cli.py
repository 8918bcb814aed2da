"""Command-line interface: calibrate, monitor, bench.

All outputs are JSON (single detection reports) or CSV (benchmark rows).
Exit codes: 0 success, 1 configuration/calibration error, 2 I/O or
format error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import bench
from .calibration import calibrate_ecdd_limit, calibrate_thresholds
from .cdm import fit_cdm, run_labeled_stream
from .datastreams import (
    CsvSchema,
    GaussianMixtureConfig,
    iter_csv_stream,
    read_csv_stream,
)
from .ecdd import cross_val_error, ecdd_init, ecdd_monitor_stream, fit_classifier
from .errors import CalibrationError, ConfigError, DriftmonError, FormatError, InputError
from .thresholds import load_table, save_table

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftmon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", help="calibrate a threshold table")
    cal.add_argument("--k", dest="bins", type=int, default=16, help="histogram bins K")
    cal.add_argument("--lambda", dest="lam", type=float, default=0.03)
    cal.add_argument("--arl0", type=float, default=375.0)
    cal.add_argument("--train-size", type=int, required=True)
    cal.add_argument("--t-max", type=int, default=500)
    cal.add_argument("--replicates", type=int, default=100_000)
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--out", required=True)

    mon = sub.add_parser("monitor", help="monitor a CSV stream, print a JSON report")
    mon.add_argument("--method", choices=["cdm", "qtewma", "ecdd"], required=True)
    mon.add_argument("--train", required=True, help="labeled training CSV")
    mon.add_argument("--stream", required=True, help="stream CSV (labels optional)")
    mon.add_argument("--thresholds", help="threshold table (cdm/qtewma)")
    mon.add_argument("--k", dest="bins", type=int, default=16, help="histogram bins K")
    mon.add_argument("--lambda", dest="lam", type=float, default=0.03)
    mon.add_argument("--seed", type=int, default=0)
    mon.add_argument("--lenient-labels", action="store_true")
    mon.add_argument("--classifier", choices=["knn", "lda"], default="knn")
    mon.add_argument("--knn-k", type=int, default=9)
    mon.add_argument("--ecdd-r", type=float, default=0.2)
    mon.add_argument("--ecdd-limit", type=float, help="control limit L (ecdd)")
    mon.add_argument("--arl0", type=float, help="calibrate the ecdd limit for this target")
    mon.add_argument("--prior-weight", type=float, default=100.0)

    ben = sub.add_parser("bench", help="run a benchmark experiment from a config file")
    ben.add_argument("experiment", choices=["arl0", "delay", "grid"])
    ben.add_argument("--config", required=True)
    ben.add_argument("--out", required=True)

    return parser


def cmd_calibrate(args) -> int:
    table = calibrate_thresholds(
        train_size=args.train_size, n_bins=args.bins, lam=args.lam,
        arl0_target=args.arl0, t_max=args.t_max, replicates=args.replicates,
        seed=args.seed,
    )
    save_table(table, args.out)
    print(f"wrote threshold table: {args.out}")
    return EXIT_OK


def cmd_monitor(args) -> int:
    schema = CsvSchema(lenient=args.lenient_labels)
    train = read_csv_stream(args.train, schema)
    if not train.labeled.all():
        raise ConfigError(f"--train {args.train}: every training row needs a label")
    stream = iter_csv_stream(args.stream, schema)

    if args.method in ("cdm", "qtewma"):
        if not args.thresholds:
            raise ConfigError("--thresholds is required for cdm/qtewma")
        table = load_table(args.thresholds)
        train_y = train.y if args.method == "cdm" else np.ones_like(train.y)
        monitor = fit_cdm(train.x, train_y, table, n_bins=args.bins, lam=args.lam,
                          seed=args.seed, lenient_labels=args.lenient_labels)
        if args.method == "qtewma":
            stream = ((x, 1) for x, _y in stream)  # pooled: labels ignored
        run_labeled_stream(monitor, stream)
        report = monitor.report()
        report["method"] = args.method
    else:
        clf = fit_classifier(args.classifier, train.x, train.y, k=args.knn_k)
        p0 = cross_val_error(args.classifier, train.x, train.y, seed=args.seed,
                             k=args.knn_k)
        limit = args.ecdd_limit
        if limit is None:
            if args.arl0 is None:
                raise ConfigError("ecdd needs --ecdd-limit or --arl0")
            p0_sim = min(max(p0, 1e-3), 1.0 - 1e-3)
            limit = calibrate_ecdd_limit(p0_sim, args.ecdd_r, args.arl0,
                                         seed=args.seed,
                                         prior_weight=args.prior_weight)
        state = ecdd_init(p0, args.ecdd_r, limit, prior_weight=args.prior_weight)
        report = ecdd_monitor_stream(clf, stream, state)
        report["method"] = "ecdd"
        report["p0_estimate"] = p0
        report["limit"] = limit

    json.dump(report, sys.stdout, indent=2, default=_coerce)
    print()
    return EXIT_OK


def _coerce(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path}: {exc}") from exc
    if cfg.get("format_version") != 1:
        raise ConfigError(f"config {path}: unsupported format_version "
                          f"{cfg.get('format_version')!r}")
    return cfg


def _mixture_from_config(raw: dict) -> GaussianMixtureConfig:
    try:
        return GaussianMixtureConfig(
            means=np.asarray(raw["means"], dtype=float),
            covs=None if raw.get("covs") is None else np.asarray(raw["covs"], float),
            priors=None if raw.get("priors") is None else np.asarray(raw["priors"], float),
            post_means=None if raw.get("post_means") is None
            else np.asarray(raw["post_means"], float),
            post_covs=None if raw.get("post_covs") is None
            else np.asarray(raw["post_covs"], float),
            tau=int(raw.get("tau", 0)),
        )
    except KeyError as exc:
        raise ConfigError(f"mixture config is missing field {exc}") from exc


def _method_from_config(raw: dict, mixture: GaussianMixtureConfig, seed: int):
    kind = raw.get("kind")
    if kind in ("cdm", "qtewma"):
        if "table" not in raw:
            raise ConfigError(f"method {kind}: missing 'table' path")
        return bench.CdmMethod(
            table=load_table(raw["table"]),
            n_bins=int(raw.get("bins", 16)),
            lam=float(raw.get("lambda", 0.03)),
            train_per_class=int(raw.get("train_per_class", 256)),
            pooled=(kind == "qtewma"),
            name=raw.get("name", kind),
        )
    if kind == "ecdd":
        limit = raw.get("limit")
        if limit is None:
            if "arl0" not in raw or "p0" not in raw:
                raise ConfigError("method ecdd: provide 'limit' or both 'arl0' and 'p0'")
            limit = calibrate_ecdd_limit(
                float(raw["p0"]), float(raw.get("r", 0.2)), float(raw["arl0"]),
                seed=seed, prior_weight=float(raw.get("prior_weight", 100.0)),
            )
        return bench.EcddMethod(
            limit=float(limit),
            classifier=raw.get("classifier", "lda"),
            knn_k=int(raw.get("knn_k", 9)),
            r=float(raw.get("r", 0.2)),
            prior_weight=float(raw.get("prior_weight", 100.0)),
            train_per_class=int(raw.get("train_per_class", 256)),
            name=raw.get("name", "ecdd"),
        )
    raise ConfigError(f"unknown method kind {kind!r}")


def _write_rows(rows: list[dict], path) -> None:
    if not rows:
        raise ConfigError("nothing to write: no result rows")
    fields = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    mixture = _mixture_from_config(cfg.get("mixture") or {})
    seed = int(cfg.get("seed", 0))
    replicates = int(cfg.get("replicates", 1000))
    raw_methods = cfg.get("methods")
    if not raw_methods:
        raise ConfigError("config: 'methods' must be a non-empty list")
    methods = {}
    for raw in raw_methods:
        method = _method_from_config(raw, mixture, seed)
        methods[method.name] = method

    if args.experiment == "grid":
        grid_raw = cfg.get("grid") or {}
        drift_class = int(grid_raw.get("drift_class", 2))
        cells = bench.grid_cells(
            mixture.means[drift_class - 1],
            x_offsets=tuple(grid_raw.get("x_offsets", (-1.5, 0.5))),
            y_offsets=tuple(grid_raw.get("y_offsets", (-1.0, 1.0))),
            nx=int(grid_raw.get("nx", 9)),
            ny=int(grid_raw.get("ny", 9)),
        )
        rows = bench.run_grid_experiment(
            mixture, methods, replicates, seed, cells=cells,
            drift_class=drift_class,
            post_length=int(cfg.get("post_length", 7000)),
        )
        _write_rows(rows, args.out)
        print(f"wrote {len(rows)} grid rows: {args.out}")
        return EXIT_OK

    rows = []
    for name, method in sorted(methods.items()):
        if args.experiment == "arl0":
            report = bench.estimate_arl0(
                method, mixture, replicates, int(cfg.get("horizon", 8000)), seed
            )
        else:
            report = bench.estimate_delay(
                method, mixture, replicates, seed,
                post_length=int(cfg.get("post_length", 7000)),
            )
        rows.append(report.to_dict())
    _write_rows(rows, args.out)
    print(f"wrote {len(rows)} report rows: {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "calibrate":
            return cmd_calibrate(args)
        if args.command == "monitor":
            return cmd_monitor(args)
        return cmd_bench(args)
    except (ConfigError, InputError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DriftmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: ``vinedep {fit,simulate,gof,dynamics,report}``.

Exit codes: 0 success, 2 data or configuration error, 3 fit failure or an
unreliable goodness-of-fit test.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import dynamics, gof, rvine
from .bicop.families import get_family
from .dependence import TAU_MODES, tau_matrix
from .errors import (
    AllCandidatesFailed,
    ConvergenceFailure,
    DataError,
    EdgeFitError,
    InvalidParameter,
    TestUnreliable,
    VineDepError,
)
from .marginals import pit_transform

EXIT_OK, EXIT_DATA, EXIT_FIT = 0, 2, 3


class ConfigError(DataError):
    pass


def read_table(path, columns=None):
    """Numeric columns of a CSV as ``(matrix, names)``; errors name the bad cells."""
    import pandas as pd

    try:
        df = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file is empty") from exc
    if columns:
        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise DataError(f"{path}: unknown columns {missing}")
        df = df[list(columns)]
        bad = [c for c in df.columns if not pd.api.types.is_numeric_dtype(df[c])]
        if bad:
            raise DataError(f"{path}: non-numeric columns {bad}")
    else:
        df = df.select_dtypes(include="number")
    if df.shape[1] < 2:
        raise DataError(f"{path}: need at least 2 numeric columns, found {df.shape[1]}")
    if df.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    na = df.isna()
    if na.any().any():
        col = na.any().idxmax()
        rows = (np.flatnonzero(na[col].to_numpy()) + 2).tolist()[:5]
        raise DataError(f"{path}: column {col!r} has missing values at line(s) {rows}")
    return df.to_numpy(dtype=float), tuple(str(c) for c in df.columns)


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _families(arg):
    if not arg:
        return None
    names = []
    for raw in arg.split(","):
        try:
            names.append(get_family(raw.strip()).name)
        except InvalidParameter as exc:
            raise ConfigError(str(exc)) from exc
    return tuple(names)


def _outdir(args):
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args):
    if args.truncate is not None and args.truncate < 0:
        raise ConfigError("--truncate must be >= 0")
    config = rvine.VineConfig(_families(args.families), args.tau_mode, args.truncate)
    raw, names = read_table(args.input, args.columns.split(",") if args.columns else None)
    u = pit_transform(raw, names)
    vine = rvine.fit_sequential(u, config)
    out = _outdir(args)
    rvine.vine_to_json(vine, out / "model.json")
    rvine.report_csv(vine, out / "report.csv")
    _write(out / "report.md", rvine.report_markdown(vine))
    tau_matrix(u, mode=args.tau_mode).to_csv(out / "tau_matrix.csv")
    for t in vine.structure.trees:
        _write(out / f"tree_{t.level}.dot", rvine.tree_to_dot(vine, t.level))
    print(f"fitted {vine.d}-variable vine on {vine.n_obs} rows; loglik {vine.total_loglik:.4f}")
    return EXIT_OK


def cmd_simulate(args):
    if args.n < 0:
        raise ConfigError("--n must be >= 0")
    vine = rvine.vine_from_json(args.model)
    sim = rvine.vine_simulate(vine, args.n, args.seed)
    out = _outdir(args)
    path = out / "simulated.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(vine.names)
        writer.writerows([repr(float(x)) for x in row] for row in sim)
    print(f"wrote {args.n} rows to {path}")
    return EXIT_OK


def cmd_gof(args):
    if args.bootstrap < gof.MIN_BOOTSTRAP:
        raise ConfigError(f"--bootstrap must be >= {gof.MIN_BOOTSTRAP}")
    vine = rvine.vine_from_json(args.model)
    raw, names = read_table(args.input, list(vine.names))
    u = pit_transform(raw, names)
    result = gof.white_test(vine, u, args.bootstrap, args.seed)
    out = _outdir(args)
    result.to_json(out / "gof.json")
    print(f"White test statistic {result.statistic:.6g}, p-value {result.p_value:.4f}")
    return EXIT_OK


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, float):
        return "" if np.isnan(x) else f"{x:.6g}"
    return str(x)


def cmd_dynamics(args):
    config = dynamics.DynamicsConfig(
        n_s=args.lags_s,
        n_v=args.lags_v,
        confidence=args.confidence,
        views_mode=args.views_mode,
        exclude_daily_uploaders=args.exclude_daily_uploaders,
    )
    channels = dynamics.read_channels(args.input)
    rows = []
    for cid, series in channels.items():
        if isinstance(series, Exception):
            row = dict.fromkeys(dynamics.BATCH_HEADER, "")
            row.update(channel_id=cid, error=str(series))
        else:
            row = dynamics.analyze_channel(series, config)
        rows.append(row)
    out = _outdir(args)
    with open(out / "dynamics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dynamics.BATCH_HEADER)
        for row in rows:
            writer.writerow([_cell(row[k]) for k in dynamics.BATCH_HEADER])
    print(f"analyzed {len(rows)} channels")
    return EXIT_OK


def cmd_report(args):
    vine = rvine.vine_from_json(args.model)
    text = rvine.report_markdown(vine) if args.format == "md" else rvine.report_csv(vine)
    if args.output_dir:
        _write(_outdir(args) / f"report.{args.format}", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vinedep", description="Vine copula dependence analysis")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output_default="out"):
        sp.add_argument("--output-dir", default=output_default)
        sp.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("fit", help="fit a vine to a numeric CSV")
    f.add_argument("--input", required=True)
    f.add_argument("--columns", help="comma-separated subset of columns")
    f.add_argument("--families", help="comma-separated candidate families")
    f.add_argument("--tau-mode", choices=TAU_MODES, default="tau-b")
    f.add_argument("--truncate", type=int, help="Independence above this tree level")
    common(f)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="sample pseudo-observations from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, required=True)
    common(s)
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gof", help="White information-matrix test")
    g.add_argument("--model", required=True)
    g.add_argument("--input", required=True)
    g.add_argument("--bootstrap", type=int, default=100)
    common(g)
    g.set_defaults(func=cmd_gof)

    d = sub.add_parser("dynamics", help="Granger and upload-schedule batch analysis")
    d.add_argument("--input", required=True)
    d.add_argument("--lags-s", type=int, default=dynamics.DEFAULT_LAGS)
    d.add_argument("--lags-v", type=int, default=dynamics.DEFAULT_LAGS)
    d.add_argument("--confidence", type=float, default=0.95)
    d.add_argument("--views-mode", choices=dynamics.VIEW_MODES, default="daily")
    d.add_argument("--exclude-daily-uploaders", action="store_true")
    common(d)
    d.set_defaults(func=cmd_dynamics)

    r = sub.add_parser("report", help="print the per-edge report of a model")
    r.add_argument("--model", required=True)
    r.add_argument("--format", choices=("csv", "md"), default="csv")
    r.add_argument("--output-dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EdgeFitError, AllCandidatesFailed, ConvergenceFailure, TestUnreliable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (DataError, VineDepError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``sparsecox <command> [options]``.

Exit status: 0 success, 1 input error, 2 non-convergence, 3 certification
failure.  Floats are written with ``repr`` (shortest round-trip form), so
coefficient files re-read by ``check`` reproduce the fitted vector exactly.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .kkt import check_local_max
from .optimizer import FitConfig, _as_penalty, default_grid, fit_ica, fit_path, lambda_max
from .penalties import KIND_CODES, Penalty
from .selection import make_folds, select_lambda
from .simulate import SimConfig, run_experiment
from .survival import Dataset, SurvivalDataError, breslow_baseline, ingest_csv, nelson_aalen

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("sparsecox")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_KKT = 0, 1, 2, 3
DEFAULT_SEED = 0


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 (exit 2 is reserved for non-convergence)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return str(v)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_kv(path: Path, items: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_fmt(v)}\n")


def _load(args) -> Dataset:
    if args.input is None:
        raise InputError("--input is required")
    features = args.features.split(",") if args.features else None
    return ingest_csv(args.input, args.time_col, args.status_col, features)


def _names(data: Dataset) -> list[str]:
    return list(data.feature_names) if data.feature_names else [f"x{j + 1}" for j in range(data.p)]


def write_coefficients(path: Path, data: Dataset, beta) -> None:
    _write_rows(path, ["index", "name", "value"],
                [(j, name, float(b)) for j, (name, b) in enumerate(zip(_names(data), beta))])


def read_coefficients(path, p: int) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"index", "value"} <= set(reader.fieldnames):
            raise InputError(f"{path}: coefficient file needs 'index' and 'value' columns")
        beta = np.zeros(p)
        for lineno, row in enumerate(reader, start=2):
            try:
                j, v = int(row["index"]), float(row["value"])
            except (TypeError, ValueError) as exc:
                raise InputError(f"{path}: row {lineno}: {exc}") from None
            if not 0 <= j < p:
                raise InputError(f"{path}: row {lineno}: index {j} out of range for p={p}")
            beta[j] = v
    return beta


def _penalty(args, lam: float | None) -> Penalty:
    if lam is None:
        raise InputError("--lambda is required")
    return Penalty(args.penalty, lam, args.a)


def _fit_config(args, lam: float) -> FitConfig:
    return FitConfig(_penalty(args, lam), tol=args.tol, max_sweeps=args.max_sweeps,
                     standardize=args.standardize)


def _grid(args, data: Dataset) -> np.ndarray:
    if args.lambdas:
        return np.array([float(v) for v in args.lambdas.split(",")])
    kind = _penalty(args, 1.0)
    return default_grid(data, kind, args.n_lambdas, args.ratio)


def cmd_fit(args, out: Path) -> int:
    data = _load(args)
    cfg = _fit_config(args, args.lam)
    res = fit_ica(data, cfg)
    write_coefficients(out / "coefficients.csv", data, res.beta)
    _write_kv(out / "fit_summary.txt", {
        "penalty": cfg.penalty.kind, "lambda": cfg.penalty.lam, "objective": res.objective,
        "sweeps": res.sweeps, "converged": res.converged, "nnz": res.nnz,
        "lambda_max": lambda_max(data) if cfg.penalty.kind != "sica" else float("nan"),
    })
    rep = check_local_max(data, res.beta, cfg.penalty, args.kkt_tol)
    _write_kv(out / "kkt.txt", rep.as_dict())
    print(f"objective={res.objective!r} sweeps={res.sweeps} converged={res.converged} "
          f"nnz={res.nnz} kkt_passed={rep.passed}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_path(args, out: Path) -> int:
    data = _load(args)
    grid = _grid(args, data)
    path = fit_path(data, _penalty(args, grid[0]), grid, _fit_config(args, grid[0]))
    _write_rows(out / "path.csv", ["lambda", "nnz", "objective", "sweeps", "converged", "saturated"],
                [(lam, f.nnz, f.objective, f.sweeps, f.converged, sat)
                 for lam, f, sat in zip(path.lambdas, path.fits, path.saturated)])
    _write_rows(out / "path_coefficients.csv", ["lambda", *_names(data)],
                [(lam, *f.beta) for lam, f in zip(path.lambdas, path.fits)])
    n_bad = sum(not f.converged for f in path.fits)
    _write_kv(out / "path_summary.txt", {"points": len(path.fits), "nonconverged": n_bad,
                                         "saturated": int(path.saturated.sum())})
    print(f"{len(path.fits)} points, {n_bad} non-converged")
    return EXIT_OK if n_bad == 0 else EXIT_NONCONVERGED


def cmd_cv(args, out: Path) -> int:
    data = _load(args)
    grid = _grid(args, data)
    plan = make_folds(data, args.folds, args.seed)
    cfg = _fit_config(args, grid[0])
    sel = select_lambda(data, plan, _penalty(args, grid[0]), grid, args.criterion, cfg)
    _write_rows(out / "cv.csv", ["lambda", "cv", "sgcv", "sparsity"],
                list(zip(sel.lambdas, sel.cv, sel.sgcv, sel.sparsity)))
    # final fit replays the warm-start chain down to the selected point
    init, res = None, None
    for lam in grid[: sel.index + 1]:
        res = fit_ica(data, dataclasses.replace(cfg, penalty=_as_penalty(cfg.penalty, lam), init=init))
        init = res.beta
    write_coefficients(out / "coefficients.csv", data, res.beta)
    _write_kv(out / "cv_summary.txt", {"criterion": sel.criterion, "lambda_hat": sel.lambda_hat,
                                       "index": sel.index, "s_hat": sel.s_hat, "n": data.n,
                                       "nnz": res.nnz, "converged": res.converged})
    print(f"lambda_hat={sel.lambda_hat!r} s_hat={sel.s_hat} nnz={res.nnz}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_check(args, out: Path) -> int:
    data = _load(args)
    if args.beta is None:
        raise InputError("--beta is required")
    beta = read_coefficients(args.beta, data.p)
    rep = check_local_max(data, beta, _penalty(args, args.lam), args.kkt_tol)
    _write_kv(out / "kkt.txt", rep.as_dict())
    print(rep.to_text())
    return EXIT_OK if rep.passed else EXIT_KKT


def cmd_baseline(args, out: Path) -> int:
    data = _load(args)
    if args.estimator == "nelson-aalen":
        sf = nelson_aalen(data)
    else:
        beta = read_coefficients(args.beta, data.p) if args.beta else np.zeros(data.p)
        sf = breslow_baseline(data, beta)
    _write_rows(out / "baseline.csv", ["time", "jump", "cumulative"],
                list(zip(sf.jump_times, sf.jump_sizes, sf.cumulative)))
    if sf.flag:
        print(f"warning: {sf.flag}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args, out: Path) -> int:
    table = dict(args.config_table.get("simulate", {}))
    if args.replications is not None:
        table["replications"] = args.replications
    if args.sim_seed is not None:
        table["seed"] = args.sim_seed
    if "penalties" in table:
        table["penalties"] = tuple(table["penalties"])
    cfg = SimConfig.from_mapping(table)
    report = run_experiment(cfg, threads=args.threads)
    (out / "replications.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "summary.csv").write_text(report.summary_csv(), encoding="utf-8")
    (out / "summary.txt").write_text(report.summary_text() + "\n", encoding="utf-8")
    print(report.summary_text())
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "path": cmd_path, "cv": cmd_cv, "check": cmd_check,
            "baseline": cmd_baseline, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsecox", description="Penalized Cox regression by coordinate ascent.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; keys of the [<command>] table set option defaults")
    common.add_argument("--output", "-o", default=".", help="output directory (created if needed)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for simulations (default: available cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", "-i", help="CSV with header; columns time, status, features")
    data.add_argument("--time-col", default="time")
    data.add_argument("--status-col", default="status")
    data.add_argument("--features", help="comma-separated feature columns (default: all others)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--penalty", default="scad", choices=tuple(KIND_CODES))
    model.add_argument("--a", type=float, default=None, help="shape parameter (SCAD 3.7, MCP 3 by default)")
    model.add_argument("--tol", type=float, default=1e-8, help="objective-gain stopping tolerance")
    model.add_argument("--max-sweeps", type=int, default=1000)
    model.add_argument("--standardize", action="store_true", help="fit on standardized covariates")
    model.add_argument("--kkt-tol", type=float, default=None, help="certificate tolerance (default 1e-6 n)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--lambdas", help="comma-separated strictly descending grid")
    grid.add_argument("--n-lambdas", type=int, default=100)
    grid.add_argument("--ratio", type=float, default=0.01, help="smallest/largest lambda in the default grid")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", parents=[common, data, model], help="fit at one lambda")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization parameter (required)")
    sub.add_parser("path", parents=[common, data, model, grid], help="warm-started regularization path")
    p = sub.add_parser("cv", parents=[common, data, model, grid], help="select lambda by CV or SGCV")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--criterion", choices=("cv", "sgcv"), default="sgcv")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"fold seed (default {DEFAULT_SEED})")
    p = sub.add_parser("check", parents=[common, data, model], help="certify a coefficient file")
    p.add_argument("--beta", help="coefficient CSV (index, name, value)")
    p.add_argument("--lambda", dest="lam", type=float, help="regularization parameter (required)")
    p = sub.add_parser("baseline", parents=[common, data], help="cumulative baseline hazard")
    p.add_argument("--estimator", choices=("nelson-aalen", "breslow"), default="nelson-aalen")
    p.add_argument("--beta", help="coefficient CSV for the Breslow estimator (default: zero)")
    p = sub.add_parser("simulate", parents=[common], help="run a simulation from a [simulate] config table")
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--seed", dest="sim_seed", type=int, default=None)
    return parser


_DEST = {"lambda": "lam"}


def _config_table(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help or a usage error
            return int(exc.code or 0)
        table = _config_table(args.config)
        if args.command != "simulate" and table.get(args.command):
            # config values become defaults; explicit flags still win
            sub = parser._subparsers._group_actions[0].choices[args.command]
            sub.set_defaults(**{_DEST.get(k, k.replace("-", "_")): v for k, v in table[args.command].items()})
            try:
                args = parser.parse_args(argv)
            except SystemExit as exc:
                return int(exc.code or 0)
        args.config_table = table
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except (InputError, SurvivalDataError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

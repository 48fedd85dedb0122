"""Command-line entry point: ``tsnn {simulate,complete,tune,intervals,study}``.

Every command writes a ``manifest.json`` next to its outputs. On failure the
process prints one line ``error[<category>]: <message>`` to stderr and exits
with the category's code.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, parse_config, read_config_json
from .core import Mechanism, Radii, validate
from .distances import estimated_col_distances, estimated_row_distances, table_to_rows
from .estimators import METHODS, apply_fallback, complete, complete_from_neighborhoods
from .experiments import run_coverage_study, run_decay_study, run_holdout_comparison
from .inference import confidence_intervals, estimate_noise_sd, within_neighborhood_sd_grid
from .io import (InputError, RunManifest, read_matrix_csv, write_dense_csv, write_intervals_csv, write_json,
                 write_mask_csv, write_matrix_csv, write_result_csv, write_rows_csv, write_table_csv)
from .neighborhoods import build_neighborhoods
from .synthesis import SimConfig, generate
from .tuning import LEAVE_OUT, PercentileSpec, make_folds, test_error, tune

log = logging.getLogger("tsnn")

EXIT_CODES = {"usage": 2, "config": 3, "input": 4, "compute": 5, "internal": 70}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _load(args):
    path = Path(args.input)
    if not path.is_file():
        raise CliError("input", f"{path}: no such file")
    matrix = read_matrix_csv(path, args.header)
    problems = validate(matrix)
    if problems:
        raise CliError("input", f"{path}: {problems[0]}")
    return matrix


def _radii(args) -> Radii:
    return Radii(args.eta_row_sq, args.eta_col_sq, args.cap_row, args.cap_col, not args.no_self)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---- simulate ---------------------------------------------------------------

def cmd_simulate(args):
    mech = Mechanism(args.mechanism, p=args.p)
    sim = SimConfig(args.n, args.m or args.n, args.lam, args.noise_sd, args.snr, mech, args.seed)
    truth, observed, model = generate(sim, args.replicate)
    out = _out_dir(args.out_dir)
    paths = {name: out / f"{name}.csv" for name in ("truth", "observed", "mask")}
    write_dense_csv(truth.theta, paths["truth"])
    write_matrix_csv(observed, paths["observed"])
    write_mask_csv(observed.mask, paths["mask"])
    meta = {"n": sim.n, "m": sim.m, "lam": sim.lam, "noise_sd": model.noise_sd, "mechanism": args.mechanism,
            "p": args.p, "seed": args.seed, "replicate": args.replicate,
            "observed_fraction": float(observed.mask.mean()),
            "u": model.u.ravel(), "v": model.v.ravel()}
    write_json(meta, out / "metadata.json")
    return [str(p) for p in paths.values()] + [str(out / "metadata.json")], []


# ---- complete ---------------------------------------------------------------

def cmd_complete(args):
    matrix = _load(args)
    if args.method not in ("allrow", "allcol") and (
            (args.method != "colnn" and args.eta_row_sq is None) or (args.method != "rownn" and args.eta_col_sq is None)):
        raise CliError("usage", f"--method {args.method} needs --eta-row-sq/--eta-col-sq")
    radii = None
    if args.method not in ("allrow", "allcol"):
        radii = Radii(args.eta_row_sq or 0.0, args.eta_col_sq or 0.0, args.cap_row, args.cap_col, not args.no_self)
    res = complete(matrix, args.method, radii, args.seed, exclude_target=args.exclude_target)
    if args.fallback_mean:
        res = apply_fallback(res, matrix.observed_mean())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    side = write_result_csv(res, out)
    outputs = [str(out), str(side)]
    if args.dump_distances:
        d = _out_dir(args.dump_distances)
        write_rows_csv(table_to_rows(estimated_row_distances(matrix)), d / "row_distances.csv")
        write_rows_csv(table_to_rows(estimated_col_distances(matrix)), d / "col_distances.csv")
        outputs += [str(d / "row_distances.csv"), str(d / "col_distances.csv")]
    log.info("%d undefined entries", int(res.undefined_mask.sum()))
    return outputs, [args.input]


# ---- tune -------------------------------------------------------------------

def cmd_tune(args):
    matrix = _load(args)
    kind = "blocked" if args.blocked else "random"
    plan = make_folds(matrix, kind, args.folds, args.holdout_cols if args.blocked else None, args.seed)
    spec = PercentileSpec.parse(args.grid_pcts) if args.grid_pcts else None
    folds = []
    first = None
    for k in range(args.folds):
        if not (plan.test_mask(k) & matrix.mask).any():
            continue
        tuned = tune(matrix, args.method, spec, plan, k, args.seed, cap_row=args.cap_row, cap_col=args.cap_col,
                     leave_out=args.leave_out)
        err = test_error(matrix, args.method, tuned.radii, plan, k, args.seed)
        folds.append({"fold": k, "eta_row_sq": tuned.radii.eta_row_sq, "eta_col_sq": tuned.radii.eta_col_sq,
                      "train_score": tuned.score, "test_error": err})
        if first is None:
            first = tuned
    if first is None:
        raise CliError("compute", "no fold has observed test entries")
    report = {
        "method": args.method,
        "radii": {"eta_row_sq": first.radii.eta_row_sq, "eta_col_sq": first.radii.eta_col_sq,
                  "row_percentile": first.row_percentile, "col_percentile": first.col_percentile},
        "cv_table": first.cv_table,
        "folds": folds,
        "mean_test_error": float(np.mean([f["test_error"] for f in folds])),
    }
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_json(report, args.out)
        return [args.out], [args.input]
    print(json.dumps(report, indent=2, sort_keys=True))
    return [], [args.input]


# ---- intervals --------------------------------------------------------------

def cmd_intervals(args):
    matrix = _load(args)
    if args.eta_row_sq is None or args.eta_col_sq is None:
        raise CliError("usage", "intervals needs --eta-row-sq and --eta-col-sq")
    radii = _radii(args)
    row_t, col_t = estimated_row_distances(matrix), estimated_col_distances(matrix)
    rs = build_neighborhoods(row_t, radii.eta_row_sq, radii.cap_row, radii.allow_self_neighbor, args.seed)
    cs = build_neighborhoods(col_t, radii.eta_col_sq, radii.cap_col, radii.allow_self_neighbor, args.seed)
    res = complete_from_neighborhoods(matrix, rs, cs)
    if args.sigma is not None:
        sd, mode = args.sigma, "oracle"
    else:
        loo = apply_fallback(complete_from_neighborhoods(matrix, rs, cs, exclude_target=True),
                             matrix.observed_mean())
        sd, mode = estimate_noise_sd(matrix, loo).sigma_hat, "estimated"
        log.info("sigma_hat = %.6g", sd)
    within = None if args.no_adjust else within_neighborhood_sd_grid(matrix, res, rs, cs)
    ci = confidence_intervals(res, sd, args.level, within, mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_intervals_csv(res, ci, out)
    return [str(out)], [args.input]


# ---- study ------------------------------------------------------------------

def run_study(kind: str, cfg, out: Path, workers: int = 1) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    if kind == "decay":
        res = run_decay_study(cfg, workers)
        write_table_csv(res["summary"], out / "results.csv", ["method", "n", "mean_mse", "sd_mse"])
        write_table_csv(res["slopes"], out / "slopes.csv", ["method", "slope", "intercept", "r_squared"])
        write_table_csv(res["replicates"], out / "long.csv")
        return [str(out / f) for f in ("results.csv", "slopes.csv", "long.csv")]
    if kind == "coverage":
        res = run_coverage_study(cfg, workers)
        write_table_csv(res["summary"], out / "coverage.csv")
        write_table_csv(res["replicates"], out / "long.csv")
        return [str(out / "coverage.csv"), str(out / "long.csv")]
    matrix = read_matrix_csv(cfg.input, cfg.header)
    plan = make_folds(matrix, "blocked", cfg.folds, cfg.holdout_cols, cfg.seed)
    res = run_holdout_comparison(matrix, plan, cfg.methods, cfg)
    write_table_csv(res["summary"], out / "results.csv")
    write_table_csv(res["residuals"], out / "long.csv")
    return [str(out / "results.csv"), str(out / "long.csv")]


def cmd_study(args):
    if (args.config is None) == (args.manifest is None):
        raise CliError("usage", "give exactly one of --config and --manifest")
    if args.manifest:
        man = RunManifest.read(args.manifest)
        if man.command != f"study {args.kind}":
            raise CliError("config", f"manifest records command {man.command!r}, not 'study {args.kind}'")
        cfg = parse_config(args.kind, man.config)
        source = args.manifest
    else:
        if not Path(args.config).is_file():
            raise CliError("input", f"{args.config}: no such file")
        cfg = read_config_json(args.config, args.kind)
        source = args.config
    args._config = cfg.model_dump(mode="json")
    args._seed = cfg.seed
    outputs = run_study(args.kind, cfg, Path(args.out_dir), args.workers)
    inputs = [source] + ([cfg.input] if args.kind == "holdout" else [])
    return outputs, inputs


# ---- parser -----------------------------------------------------------------

def _add_matrix_input(p):
    p.add_argument("input", help="matrix CSV (empty field or NA = missing)")
    p.add_argument("--header", action="store_true", help="skip one header line")


def _add_radii(p):
    p.add_argument("--eta-row-sq", type=float, default=None)
    p.add_argument("--eta-col-sq", type=float, default=None)
    p.add_argument("--cap-row", type=int, default=None)
    p.add_argument("--cap-col", type=int, default=None)
    p.add_argument("--no-self", action="store_true", help="keep a row/column out of its own neighborhood")


class _Parser(argparse.ArgumentParser):
    # usage errors go through the same one-line reporting as everything else
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tsnn", description="Nearest neighbor matrix completion.")
    ap.add_argument("--version", action="version",
                    version=f"tsnn {__version__} (config schema {SCHEMA_VERSION})")
    ap.add_argument("--threads", type=int, default=None, help="cap on numba worker threads")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic latent-factor instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=None, help="columns (default n)")
    p.add_argument("--lam", type=float, default=1.0)
    noise = p.add_mutually_exclusive_group(required=True)
    noise.add_argument("--snr", type=float)
    noise.add_argument("--noise-sd", type=float)
    p.add_argument("--mechanism", choices=("mcar", "mnar"), default="mcar")
    p.add_argument("--p", type=float, default=0.75, help="MCAR observation probability")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("complete", help="fill in a matrix with fixed radii")
    _add_matrix_input(p)
    p.add_argument("--method", choices=METHODS, default="tsnn")
    _add_radii(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fallback-mean", action="store_true", help="fill undefined entries with the observed mean")
    p.add_argument("--exclude-target", action="store_true", help="leave each cell out of its own average")
    p.add_argument("--dump-distances", metavar="DIR", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("tune", help="cross-validate the radii")
    _add_matrix_input(p)
    p.add_argument("--method", choices=("tsnn", "rownn", "colnn", "drnn"), default="tsnn")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-pcts", metavar="LO:HI:T", default=None)
    p.add_argument("--blocked", action="store_true", help="hold out trailing columns of row groups")
    p.add_argument("--holdout-cols", type=int, default=40)
    p.add_argument("--cap-row", type=int, default=None)
    p.add_argument("--cap-col", type=int, default=None)
    p.add_argument("--leave-out", choices=LEAVE_OUT, default="cross")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="JSON path (default: stdout)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("intervals", help="TS-NN estimates with normal confidence intervals")
    _add_matrix_input(p)
    _add_radii(p)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--sigma", type=float, default=None, help="known noise SD (default: estimate it)")
    p.add_argument("--no-adjust", action="store_true", help="skip the within-neighborhood SD term")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_intervals)

    p = sub.add_parser("study", help="run a simulation study from a JSON config")
    p.add_argument("kind", choices=("decay", "coverage", "holdout"))
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", default=None, help="replay the config recorded in a manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_study)
    return ap


def _manifest_dir(args, outputs) -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir)
    if getattr(args, "out", None):
        return Path(args.out).parent
    return Path(".")


def _fail(category: str, message: str) -> int:
    first = str(message).strip().splitlines()[0] if str(message).strip() else "unknown error"
    print(f"error[{category}]: {first}", file=sys.stderr)
    return EXIT_CODES[category]


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except CliError as err:
        return _fail(err.category, str(err))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    # numba reports an old TBB once per process; it falls back to another threading layer
    warnings.filterwarnings("ignore", message=".*TBB threading layer.*")
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        import numba

        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))
    start = time.time()
    command = args.command + (f" {args.kind}" if args.command == "study" else "")
    try:
        outputs, inputs = args.func(args)
    except CliError as err:
        return _fail(err.category, str(err))
    except ConfigError as err:
        return _fail("config", str(err))
    except (InputError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as err:
        return _fail("input", str(err))
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as err:
        return _fail("compute", str(err))
    except Exception as err:  # noqa: BLE001 - last resort, still one line
        return _fail("internal", f"{type(err).__name__}: {err}")
    flags = {k: v for k, v in vars(args).items() if k != "func" and not k.startswith("_")}
    manifest = RunManifest(command, argv, flags, getattr(args, "_seed", getattr(args, "seed", None)), __version__,
                           SCHEMA_VERSION, inputs, outputs, getattr(args, "_config", None),
                           round(time.time() - start, 3))
    mdir = _manifest_dir(args, outputs)
    mdir.mkdir(parents=True, exist_ok=True)
    manifest.write(mdir / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())

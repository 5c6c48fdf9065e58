"""Command-line entry point: ``cdnet <subcommand> [flags]``.

Exit codes: 0 success, 1 a check or criterion failed, 2 usage error,
3 I/O or data-format error.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DatasetFormatError, gen_synthetic, load_digits_csv, normalize,
                   split_deterministic)
from .diagnostics import model_condition_number, verify_condition_bound, verify_theorem1
from .gradcheck import DEFAULT_CONFIGS, run_grad_checks
from .network import ARCHITECTURES, Network
from .regularization import ALPHA_CD, FisherConfig, ShannonDropoutConfig
from .training import LOSSES, TrainingConfig, TrainingDivergedError, run_experiment, train_model

log = logging.getLogger("cdnet")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

THEOREM1_TOL = {"explicit": 1e-8, "finite_difference": 1e-4, "circulant": 1e-12}


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _layer_config(text):
    vals = _int_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected n_in,n_out,B, got {text!r}")
    n_in, n_out, b = vals
    if b < 1 or n_in % b or n_out % b:
        raise argparse.ArgumentTypeError(f"B={b} must divide n_in={n_in} and n_out={n_out}")
    return tuple(vals)


def _emit_json(obj, dest):
    if dest is None:
        return
    text = json.dumps(obj, indent=2)
    if dest == "-":
        print(text)
    else:
        Path(dest).parent.mkdir(parents=True, exist_ok=True)
        Path(dest).write_text(text + "\n")


def _add_training_flags(p):
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--loss", choices=sorted(LOSSES), default="cross_entropy")
    p.add_argument("--dropout-alpha", type=float, default=ALPHA_CD)
    p.add_argument("--fisher-lambda", type=float, default=1e-4)
    p.add_argument("--enable-dropout", action="store_true")
    p.add_argument("--enable-fisher", action="store_true")
    p.add_argument("--data", default="data/digits.csv")
    p.add_argument("--split-seed", type=int, default=0)


def _training_config(args, seeds):
    return TrainingConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seeds=tuple(seeds),
        dropout=ShannonDropoutConfig(rate=args.dropout_alpha, enabled=args.enable_dropout),
        fisher=FisherConfig(strength=args.fisher_lambda, enabled=args.enable_fisher),
        loss=args.loss,
    )


def cmd_grad_check(args):
    configs = list(DEFAULT_CONFIGS) + list(args.config or [])
    results = run_grad_checks(configs, args.tolerance, args.coords, args.seed)
    print(f"{'check':<22}{'config':<14}{'coords':>7}{'max rel err':>14}  status")
    for r in results:
        cfg = ",".join(map(str, r.config))
        status = "ok" if r.passed else f"FAIL at {r.worst_index}"
        print(f"{r.name:<22}{cfg:<14}{r.n_coords:>7}{r.max_rel_error:>14.3e}  {status}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed (tolerance {args.tolerance:g})")
    _emit_json({"tolerance": args.tolerance, "checks": [r.to_dict() for r in results],
                "passed": not failed}, args.json)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_verify_theorem1(args):
    worst = verify_theorem1(args.block_sizes, args.trials, args.seed)
    ok = all(worst[k] <= tol for k, tol in THEOREM1_TOL.items())
    print(f"block sizes {args.block_sizes}, {args.trials} trials each")
    for key, val in worst.items():
        tol = THEOREM1_TOL.get(key)
        suffix = f" (limit {tol:g})" if tol is not None else ""
        print(f"  max {key:<20} deviation {val:.3e}{suffix}")
    print("PASS" if ok else "FAIL")
    _emit_json({"block_sizes": args.block_sizes, "trials": args.trials,
                "max_deviation": worst, "limits": THEOREM1_TOL, "passed": ok}, args.json)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify_theorem2(args):
    rep = verify_condition_bound(args.block_size, args.sizes, args.trials, args.seed,
                                 args.constant, whiten=args.whiten)
    mode = "empirically whitened" if args.whiten else "unit-variance synthetic"
    print(f"B={rep.block_size}, {args.trials} trials per N, {mode} inputs, "
          f"bound 1 + {rep.constant:g} sqrt(B/N)")
    print(f"{'N':>7}{'sqrt(B/N)':>12}{'median k-1':>14}{'max k':>12}{'bound':>10}{'pass':>8}")
    ok = True
    for row in rep.rows():
        ok &= row["pass_fraction"] >= args.min_pass
        print(f"{row['N']:>7}{row['sqrt_B_over_N']:>12.4f}{row['median_kappa_minus_1']:>14.4e}"
              f"{row['max_kappa']:>12.5f}{row['bound']:>10.4f}{row['pass_fraction']:>8.2f}")
    print(f"population spectrum kappa = {rep.population_kappa!r}")
    ok &= rep.population_kappa == 1.0
    print("PASS" if ok else "FAIL")
    out = rep.to_dict()
    out["passed"] = bool(ok)
    _emit_json(out, args.json)
    return EXIT_OK if ok else EXIT_FAIL


def _load_dataset(path):
    try:
        return load_digits_csv(path)
    except FileNotFoundError:
        raise _CliIOError(f"dataset not found: {path} (run scripts/fetch_digits.py)")
    except DatasetFormatError as exc:
        raise _CliIOError(str(exc))


class _CliIOError(Exception):
    pass


def cmd_train(args):
    ds = _load_dataset(args.data)
    split = split_deterministic(ds, 1437, args.split_seed)
    split.train_x, split.test_x = normalize(split.train_x), normalize(split.test_x)
    cfg = _training_config(args, [args.seed])
    result = train_model(ARCHITECTURES[args.model](), split, cfg, args.seed, model_name=args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.model}_{args.seed}"
    (out / f"run_{stem}.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    (out / f"curves_{stem}.csv").write_text(result.curves_csv())
    result.network.save(out / f"model_{stem}.json")
    print(f"{args.model} seed {args.seed}: test accuracy {100 * result.final_test_accuracy:.2f}%, "
          f"final loss {result.final_train_loss:.4g}, mean kappa {result.mean_kappa:.3g}")
    print(f"wrote {out / f'run_{stem}.json'}, {out / f'model_{stem}.json'}")
    return EXIT_OK


def cmd_reproduce(args):
    ds = _load_dataset(args.data)
    cfg = _training_config(args, args.seeds)
    summary = run_experiment(ds, cfg, tuple(args.models), args.split_seed, args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    table = summary.table()
    (out / "table1.txt").write_text(table)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    for model, runs in summary.runs.items():
        for r in runs:
            (out / f"curves_{model}_{r.seed}.csv").write_text(r.curves_csv())
            r.network.save(models_dir / f"model_{model}_{r.seed}.json")
        (out / f"spectrum_{model}.csv").write_text(runs[0].spectrum.to_csv())
    print(table, end="")
    print(f"results written to {out}/")
    return EXIT_OK


def cmd_spectrum(args):
    try:
        net = Network.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise _CliIOError(f"cannot read model file {args.model}: {exc}")
    if args.synthetic:
        b = next((s.block_size for s in net.spec.layers if s.kind == "cdlinear"), 1)
        x = gen_synthetic(args.synthetic, args.n, net.spec.n_in, b, args.seed)
    else:
        ds = _load_dataset(args.data)
        split = split_deterministic(ds, 1437, args.split_seed)
        x = normalize(split.train_x)
    report = model_condition_number(net, x)
    csv_text = report.to_csv()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(csv_text)
    else:
        print(csv_text, end="")
    for s in report.layers:
        kappa = "inf" if math.isinf(s.kappa) else f"{s.kappa:.4g}"
        print(f"layer {s.layer} ({s.method}): {len(s.eigenvalues)} eigenvalues, kappa {kappa}",
              file=sys.stderr)
    _emit_json(report.to_dict(), args.json)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cdnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cdnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--config", type=_layer_config, action="append",
                   help="extra n_in,n_out,B configuration (repeatable)")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", metavar="PATH", help="write JSON report ('-' for stdout)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("verify-theorem1", help="closed-form vs brute-force Hessian spectra")
    p.add_argument("--block-sizes", type=_int_list, default=[2, 3, 4, 8])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_verify_theorem1)

    p = sub.add_parser("verify-theorem2", help="finite-sample condition-number bound")
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--sizes", type=_int_list, default=[100, 1000, 10000])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--constant", type=float, default=5.0)
    p.add_argument("--min-pass", type=float, default=0.95)
    p.add_argument("--whiten", action=argparse.BooleanOptionalAction, default=True,
                   help="whiten each synthetic batch empirically before measuring")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_verify_theorem2)

    p = sub.add_parser("train", help="train a single model on one seed")
    p.add_argument("--model", choices=sorted(ARCHITECTURES), default="cd_b4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reproduce", help="3 models x seeds experiment with JSON/CSV outputs")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--models", type=lambda s: s.split(","), default=list(ARCHITECTURES))
    p.add_argument("--out", default="results/")
    p.add_argument("--jobs", type=int, default=1)
    _add_training_flags(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("spectrum", help="per-layer Hessian eigenvalues of a saved model")
    p.add_argument("model", help="model JSON written by train/reproduce")
    p.add_argument("--data", default="data/digits.csv")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--synthetic", choices=["gaussian", "flat_spectrum"],
                   help="measure on a synthetic batch instead of the training set")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--json", metavar="PATH")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "models", None):
        unknown = set(args.models) - set(ARCHITECTURES)
        if unknown:
            parser.error(f"unknown model(s): {', '.join(sorted(unknown))}")
    try:
        return args.func(args)
    except _CliIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``robustnet {gen-data,train,eval,grid,report}``.

Result lines go to stdout, diagnostics to stderr. Exit codes: 0 success,
1 runtime or data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import nn
from .corruption import CorruptionError, CorruptionKind, CorruptionSpec, corrupt, derive_seed, variant_label
from .data import (DataError, SyntheticSpec, apply_standardizer, chronological_split,
                   fit_standardizer, generate_synthetic, load_csv, save_csv)
from .experiment import (GridError, GridSpec, read_grid_csv, report_lines, run_grid,
                         corrupt_raw, write_report)

log = logging.getLogger("robustnet")

SEED_ENV = "ROBUSTNET_SEED"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _kind(text: str) -> CorruptionKind:
    try:
        return CorruptionKind.parse(text)
    except CorruptionError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _kind_list(text: str) -> list[CorruptionKind]:
    return [_kind(t.strip()) for t in text.split(",") if t.strip()]


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=nn.TrainConfig.epochs)
    p.add_argument("--batch", type=int, default=nn.TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=nn.TrainConfig.learning_rate)
    p.add_argument("--optimizer", choices=[o.value for o in nn.Optimizer], default=nn.Optimizer.ADAM.value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustnet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON file of flag defaults; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic train/test CSVs")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=149)
    p.add_argument("--seed", type=int)
    p.add_argument("--priors", type=_float_list)
    p.add_argument("--train-fraction", type=float, default=0.7)

    p = sub.add_parser("train", help="train one model on a corrupted training set")
    p.add_argument("--train-csv", type=Path, required=True)
    p.add_argument("--kind", type=_kind, default=CorruptionKind.STUCK_AT_ZERO)
    p.add_argument("--alpha", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True, help="model .json file, or directory (created if needed) for <label>.json")
    _add_training_flags(p)

    p = sub.add_parser("eval", help="accuracy of a model on a corrupted test set")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--test-csv", type=Path, required=True)
    p.add_argument("--kind", type=_kind, default=CorruptionKind.STUCK_AT_ZERO)
    p.add_argument("--alpha", type=int, default=0)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("grid", help="train-level x test-variant accuracy grid")
    p.add_argument("--train-csv", type=Path, required=True)
    p.add_argument("--test-csv", type=Path, required=True)
    p.add_argument("--train-kind", type=_kind, default=CorruptionKind.STUCK_AT_ZERO)
    p.add_argument("--levels", type=_int_list, required=True)
    p.add_argument("--test-levels", type=_int_list, help="defaults to --levels")
    p.add_argument("--test-kinds", type=_kind_list, default=[CorruptionKind.STUCK_AT_ZERO])
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallel", type=int, default=1)
    _add_training_flags(p)

    p = sub.add_parser("report", help="summarize grid CSVs")
    p.add_argument("--grid-csv", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, help="also write the report to this file")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` act as defaults that explicit flags override."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config is None or command is None:
        return parser.parse_args(argv)
    try:
        doc = json.loads(known.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"unknown config key {key!r} for {command}")
        action = actions[dest]
        if isinstance(value, list) and action.nargs in ("+", "*"):
            convert = action.type or str
            defaults[dest] = [convert(str(v)) for v in value]
            action.required = False
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if action.type is not None and isinstance(value, str):
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        defaults[dest] = value
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _seed(value: int | None) -> int:
    if value is not None:
        if value < 0:
            raise UsageError("seeds must be non-negative")
        return value
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _train_config(args, seed: int) -> nn.TrainConfig:
    try:
        return nn.TrainConfig(args.epochs, args.batch, args.lr, nn.Optimizer(args.optimizer), seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_gen_data(args) -> int:
    seed = _seed(args.seed)
    kwargs = {"n": args.n, "d": args.d, "seed": seed}
    if args.priors:
        kwargs["class_priors"] = tuple(args.priors)
    try:
        spec = SyntheticSpec(**kwargs)
        spec.validate()
    except DataError as exc:
        raise UsageError(str(exc)) from None
    train, test = chronological_split(generate_synthetic(spec), args.train_fraction)
    args.out.mkdir(parents=True, exist_ok=True)
    save_csv(train, args.out / "train.csv")
    save_csv(test, args.out / "test.csv")
    print(f"train {train.n}")
    print(f"test {test.n}")
    return EXIT_OK


def cmd_train(args) -> int:
    seed = _seed(args.seed)
    tc = _train_config(args, seed)
    raw = load_csv(args.train_csv)
    if not 0 <= args.alpha <= raw.d:
        raise UsageError(f"--alpha {args.alpha} outside [0, {raw.d}]")
    stats = fit_standardizer(raw)
    z = apply_standardizer(stats, raw)
    label = variant_label(args.kind, args.alpha)
    if args.alpha:
        z = corrupt(z, CorruptionSpec(args.kind, args.alpha, derive_seed(seed, args.alpha)))
    config = nn.NetworkConfig.for_data(raw.d, raw.class_count)
    model = nn.train(z, config, tc, stats, label=label)
    out = args.out
    if out.is_dir() or out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{label}.json"
    nn.save_model(model, out)
    print(f"model {label} {out}")
    print(f"final_loss {model.final_loss:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    seed = _seed(args.seed)
    model = nn.load_model(args.model)
    raw = load_csv(args.test_csv)
    if raw.d != model.config.inputs:
        raise DataError(f"model expects {model.config.inputs} columns, {args.test_csv} has {raw.d}")
    if not 0 <= args.alpha <= raw.d:
        raise UsageError(f"--alpha {args.alpha} outside [0, {raw.d}]")
    variant = corrupt_raw(model.standardizer, raw,
                          CorruptionSpec(args.kind, args.alpha, derive_seed(seed, args.alpha)))
    print(f"{nn.accuracy(model, variant):.6f}")
    return EXIT_OK


def cmd_grid(args) -> int:
    seed = _seed(args.seed)
    tc = _train_config(args, seed)
    train = load_csv(args.train_csv)
    test = load_csv(args.test_csv)
    test_levels = args.test_levels if args.test_levels is not None else args.levels
    spec = GridSpec(args.train_kind, args.levels, [(k, test_levels) for k in args.test_kinds],
                    training=tc, data_seed=seed, output_dir=args.out_dir, parallelism=args.parallel)
    try:
        spec.validate(train.d)
    except GridError as exc:
        raise UsageError(str(exc)) from None
    grid = run_grid(spec, train, test)
    print(f"grid {len(grid.train_labels)}x{len(grid.test_labels)} {args.out_dir / 'grid.csv'}")
    return EXIT_OK


def cmd_report(args) -> int:
    grids = [read_grid_csv(path) for path in args.grid_csv]
    names = [str(p) for p in args.grid_csv]
    for grid, name in zip(grids, names):
        for line in report_lines(grid, name):
            print(line)
    if args.out:
        write_report(grids, args.out, names)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"robustnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"robustnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except nn.TrainingDivergedError as exc:
        print(f"robustnet: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, ValueError) as exc:
        print(f"robustnet: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``hypercf {prepare,train,evaluate,sweep,bench}``.

Settings come from three layers, later ones winning: built-in defaults, a
JSON file given with ``--config``, then explicit flags. The effective
hyperparameters (never file paths) are echoed into checkpoints, split files
and CSV reports, so the same inputs always give the same bytes.

Failures exit with status 1 (2 for usage errors) and print one line of the
form ``error[category]: message`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import FORMATS, MIN_INTERACTIONS, build_dataset, load_interactions, load_split, prepare_split, save_split
from .errors import ConfigError, HyperCFError
from .evaluation import CSV_COLUMNS, DEFAULT_KS, evaluate, write_csv
from .model import KINDS, init_model, load_checkpoint, save_checkpoint
from .training import TrainConfig, train

log = logging.getLogger("hypercf")

SWEEP_COLUMNS = CSV_COLUMNS[:2] + ("dim",) + CSV_COLUMNS[2:]
BENCH_COLUMNS = ("model", "dataset", "dim", "epochs", "users", "train_epoch_seconds", "test_seconds",
                 "runtime_seconds")

DEFAULTS = {
    "format": "tsv",
    "delimiter": None,
    "columns": None,
    "header": None,
    "no_timestamps": False,
    "min_interactions": MIN_INTERACTIONS,
    "name": None,
    "model": "qcf",
    "dim": 30,
    "lr": 0.001,
    "l2": 0.001,
    "neg_ratio": 4,
    "epochs": 30,
    "batch_size": 256,
    "optimizer": "adam",
    "seed": 0,
    "k_list": ",".join(map(str, DEFAULT_KS)),
    "d_values": "5,15,30",
    "record_timing": False,
    "validate": False,
    "quiet": False,
    "data": None,
    "split_file": None,
    "checkpoint": None,
    "report": None,
    "log": None,
}
COMMAND_DEFAULTS = {
    "sweep": {"models": "gmf,qcf"},
    "bench": {"models": "gmf,ccf,qcf", "epochs": 1},
}
# keys a --config file may also spell the way TrainConfig does
CONFIG_ALIASES = {"learning_rate": "lr", "l2_lambda": "l2", "kind": "model", "d": "dim"}


class UsageError(HyperCFError):
    category = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------- parsing


def _data_flags(p):
    g = p.add_argument_group("input data")
    g.add_argument("--data", help="interaction log")
    g.add_argument("--format", help=f"preset: {', '.join(FORMATS)} (default tsv)")
    g.add_argument("--delimiter", help="override the preset's field delimiter")
    g.add_argument("--columns", help="comma-separated column order, e.g. user,item,rating,timestamp")
    g.add_argument("--header", action=argparse.BooleanOptionalAction, help="first line is a header")
    g.add_argument("--no-timestamps", action="store_true", help="ignore time; hold out a random item")
    g.add_argument("--min-interactions", type=int, help="drop users below this count (default 5)")
    g.add_argument("--name", help="dataset name used in reports")


def _split_flags(p):
    p.add_argument("--split-file", help="split written by 'prepare' (or build one from --data)")
    _data_flags(p)


def _train_flags(p, with_model=True):
    g = p.add_argument_group("training")
    if with_model:
        g.add_argument("--model", help=f"one of {', '.join(KINDS)} (default qcf)")
    g.add_argument("--dim", type=int, help="embedding size d (default 30)")
    g.add_argument("--lr", type=float, help="learning rate (default 0.001)")
    g.add_argument("--l2", type=float, help="L2 strength (default 0.001)")
    g.add_argument("--neg-ratio", type=int, help="negatives per positive (default 4)")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int, help="default 256")
    g.add_argument("--optimizer", help="adam or sgd (default adam)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypercf", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="no progress output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file of settings; flags take precedence")
        p.add_argument("--quiet", action="store_true", help=argparse.SUPPRESS)
        return p

    p = command("prepare", "filter, split and sample evaluation negatives")
    _data_flags(p)
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--split-file", help="output path")

    p = command("train", "train one model and write a checkpoint")
    _split_flags(p)
    _train_flags(p)
    p.add_argument("--checkpoint", help="output path")
    p.add_argument("--log", help="per-epoch JSON-lines run log")
    p.add_argument("--validate", action="store_true", help="record held-out HR@10 in the run log")

    p = command("evaluate", "rank held-out items with a trained checkpoint")
    _split_flags(p)
    p.add_argument("--checkpoint", help="model to evaluate")
    p.add_argument("--model", help="expected model kind (checked against the checkpoint)")
    p.add_argument("--dim", type=int, help="expected d (checked against the checkpoint)")
    p.add_argument("--seed", type=int, help="seed for a split built from --data")
    p.add_argument("--report", help="CSV output path")
    p.add_argument("--k-list", help="cut-offs (default 5,10,20)")
    p.add_argument("--record-timing", action="store_true", help="fill the timing columns")

    p = command("sweep", "train and evaluate each model at several d")
    _split_flags(p)
    _train_flags(p, with_model=False)
    p.add_argument("--models", help="comma-separated kinds (default gmf,qcf)")
    p.add_argument("--d-values", help="comma-separated d list (default 5,15,30)")
    p.add_argument("--report", help="CSV output path")
    p.add_argument("--k-list", help="cut-offs (default 5,10,20)")
    p.add_argument("--record-timing", action="store_true", help="fill the timing columns")

    p = command("bench", "time one training epoch plus evaluation per model")
    _split_flags(p)
    _train_flags(p, with_model=False)
    p.add_argument("--models", help="comma-separated kinds (default gmf,ccf,qcf)")
    p.add_argument("--report", help="CSV output path")
    return parser


def _read_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return {CONFIG_ALIASES.get(k, k).replace("-", "_"): v for k, v in raw.items()}


def resolve(argv=None) -> argparse.Namespace:
    """Parse ``argv`` and merge defaults, the config file and flags.

    ``explicit`` on the result names the settings set by a flag or the file.
    """
    ns = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    if not flags.get("quiet"):
        flags.pop("quiet", None)
    settings = {**DEFAULTS, **COMMAND_DEFAULTS.get(ns.command, {})}
    from_file = _read_config(ns.config) if getattr(ns, "config", None) else {}
    unknown = sorted(set(from_file) - set(settings) - {"models"})
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    settings.update(from_file)
    settings.update(flags)
    return argparse.Namespace(command=ns.command, explicit=frozenset(from_file) | frozenset(flags), **settings)


# ----------------------------------------------------------------- helpers


def _int_list(text, what) -> list[int]:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).split(",") if t.strip()]
    try:
        values = [int(v) for v in items]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be comma-separated integers, got {text!r}") from exc
    if not values or min(values) < 1:
        raise ConfigError(f"{what} needs positive integers, got {text!r}")
    return values


def _kinds(text) -> list[str]:
    kinds = list(text) if isinstance(text, (list, tuple)) else [t.strip() for t in str(text).split(",") if t.strip()]
    for kind in kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")
    if not kinds:
        raise ConfigError("no models given")
    return kinds


def _require(args, name):
    if getattr(args, name, None) is None:
        raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")
    return getattr(args, name)


def _format_options(args):
    if args.format not in FORMATS:
        raise ConfigError(f"unknown format {args.format!r}; expected one of {', '.join(FORMATS)}")
    opts = FORMATS[args.format]
    changes = {}
    if args.delimiter is not None:
        changes["delimiter"] = args.delimiter.encode().decode("unicode_escape")
    if args.columns is not None:
        changes["columns"] = tuple(c.strip() for c in args.columns.split(","))
        if "timestamp" not in changes["columns"]:
            changes["timestamps"] = False
    if args.header is not None:
        changes["header"] = bool(args.header)
    if args.no_timestamps:
        changes["timestamps"] = False
    return replace(opts, **changes)


def _dataset_name(args) -> str:
    if args.name:
        return args.name
    if args.format not in ("tsv", "csv", "dat", "pairs"):
        return args.format
    return Path(args.data).stem


def _data_config(args) -> dict:
    opts = _format_options(args)
    return {"format": args.format, "delimiter": opts.delimiter, "columns": list(opts.columns),
            "header": opts.header, "timestamps": opts.timestamps,
            "min_interactions": args.min_interactions, "seed": args.seed}


def _build_split(args):
    opts = _format_options(args)
    if args.min_interactions < 1:
        raise ConfigError("min-interactions must be >= 1")
    stats = {}
    rows = load_interactions(args.data, opts, stats=stats)
    if stats.get("malformed"):
        log.warning("skipped %d malformed rows (first at %s)", stats["malformed"], stats["first_malformed"])
    dataset = build_dataset(rows, args.min_interactions, name=_dataset_name(args))
    return dataset, prepare_split(dataset, args.seed)


def _load_split(args):
    if args.split_file:
        return load_split(args.split_file)
    if args.data:
        return _build_split(args)[1]
    raise UsageError(f"{args.command} needs --split-file or --data")


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, l2_lambda=args.l2, batch_size=args.batch_size,
                       epochs=args.epochs, neg_ratio=args.neg_ratio, optimizer=args.optimizer,
                       seed=args.seed)


def _effective(kind, dim, cfg: TrainConfig) -> dict:
    return {"model": kind, "dim": dim, **cfg.to_dict()}


def _echo(config: dict) -> str:
    return "config: " + json.dumps(config, sort_keys=True)


def _fit(kind, dim, split, cfg, **kwargs):
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    model = init_model(kind, split.n_users, split.n_items, dim, cfg.seed)
    trace = train(model, split, cfg, **kwargs)
    model.meta["config"] = _effective(kind, dim, cfg)
    return model, trace


def _mean_epoch_seconds(trace):
    return float(np.mean([r.elapsed_seconds for r in trace])) if trace else None


# ---------------------------------------------------------------- commands


def cmd_prepare(args) -> int:
    _require(args, "data")
    out = _require(args, "split_file")
    dataset, split = _build_split(args)
    save_split(split, out, extra={"config": _data_config(args)})
    print(f"{dataset.name}: users={dataset.n_users} items={dataset.n_items} "
          f"actions={dataset.n_actions} density={dataset.density:.6f}")
    return 0


def cmd_train(args) -> int:
    out = _require(args, "checkpoint")
    split = _load_split(args)
    cfg = _train_config(args)
    model, trace = _fit(args.model, args.dim, split, cfg, validate=args.validate,
                        log_path=args.log)
    save_checkpoint(model, out)
    if trace:
        log.info("%s d=%d: final loss %.5f after %d epochs", args.model, args.dim,
                 trace[-1].mean_loss, len(trace))
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(_require(args, "checkpoint"))
    if "model" in args.explicit and args.model != model.kind:
        raise ConfigError(f"checkpoint holds a {model.kind} model, not {args.model}")
    if "dim" in args.explicit and args.dim != model.dim:
        raise ConfigError(f"checkpoint has d={model.dim}, not {args.dim}")
    split = _load_split(args)
    if (split.n_users, split.n_items) != (model.table.n_users, model.table.n_items):
        raise ConfigError(f"checkpoint is for {model.table.n_users} users x {model.table.n_items} items, "
                          f"split has {split.n_users} x {split.n_items}")
    report = evaluate(model, split, ks=_int_list(args.k_list, "k-list"))
    rows = report.rows(model.kind, split.name, timing=args.record_timing)
    if args.report:
        write_csv(rows, args.report, comment=_echo(model.meta.get("config", {})))
    print(report.table(model.kind))
    return 0


def cmd_sweep(args) -> int:
    split = _load_split(args)
    cfg = _train_config(args)
    ks = _int_list(args.k_list, "k-list")
    kinds = _kinds(args.models)
    dims = _int_list(args.d_values, "d-values")
    rows = []
    for dim in dims:
        for kind in kinds:
            model, trace = _fit(kind, dim, split, cfg)
            report = evaluate(model, split, ks=ks)
            report.train_epoch_seconds = _mean_epoch_seconds(trace)
            for row in report.rows(kind, split.name, timing=args.record_timing):
                rows.append({**row, "dim": dim})
            log.info("%s d=%d HR@%d %.4f", kind, dim, ks[0], report.hr[ks[0]])
    echo = {"models": kinds, "d_values": dims, **cfg.to_dict()}
    text = write_csv(rows, args.report, SWEEP_COLUMNS, comment=_echo(echo))
    if args.report is None:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    split = _load_split(args)
    cfg = _train_config(args)
    if cfg.epochs < 1:
        raise ConfigError("bench needs at least one epoch")
    rows = []
    for kind in _kinds(args.models):
        model, trace = _fit(kind, args.dim, split, cfg)
        report = evaluate(model, split)
        epoch = _mean_epoch_seconds(trace)
        rows.append({"model": kind, "dataset": split.name, "dim": args.dim, "epochs": cfg.epochs,
                     "users": report.users, "train_epoch_seconds": f"{epoch:.6f}",
                     "test_seconds": f"{report.test_seconds:.6f}",
                     "runtime_seconds": f"{epoch + report.test_seconds:.6f}"})
        log.info("%s: %.3fs per epoch, %.3fs test", kind, epoch, report.test_seconds)
    echo = {"dim": args.dim, **cfg.to_dict()}
    text = write_csv(rows, args.report, BENCH_COLUMNS, comment=_echo(echo))
    if args.report is None:
        sys.stdout.write(text)
    return 0


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "bench": cmd_bench}


def main(argv=None) -> int:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger("hypercf")
    root.handlers[:] = [handler]
    root.propagate = False
    try:
        args = resolve(argv)
        root.setLevel(logging.WARNING if args.quiet else logging.INFO)
        return COMMANDS[args.command](args)
    except HyperCFError as exc:
        print(f"error[{exc.category}]: {_one_line(exc)}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"error[io]: {where}{exc.strerror or exc}", file=sys.stderr)
        return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``m2rnet <command> [options]``.

Every command accepts ``--config FILE`` (``key = value`` lines) and any
number of ``--set key=value`` overrides, applied in that order, and writes
its outputs under ``--out DIR``.  Exit status: 0 on success, 1 on a
contract, configuration or codec error (including bad flags), 2 on an I/O
error.
"""

from __future__ import annotations

import argparse
import csv
import os
import shutil
import sys

import numpy as np

from . import checkpoint, netpbm
from .ablation import ablate, reference_path, write_table
from .config import dump_config, read_config_file, train_config_from_mapping
from .dataset import load_dataset, read_manifest, save_dataset, split_dataset
from .errors import CodecError, ConfigError, ContractError, DimensionError, TrainingDiverged
from .gradcheck import run_suite
from .metrics import evaluate_dataset, write_report
from .network import predict
from .training import evaluate_model, train, write_log

GRAD_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _load_config(args):
    values = read_config_file(args.config) if args.config else {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    return train_config_from_mapping(values)


def _splits(args, cfg):
    """(train, test) from ``--data`` when given, else generated from the config."""
    if getattr(args, "data", None):
        return load_dataset(args.data, "train"), load_dataset(args.data, "test")
    return split_dataset(cfg.n_train, cfg.n_test, cfg.encoder.resolution, cfg.seed, cfg.contrast)


def _write_config(cfg, out):
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(dump_config(cfg))


# -- commands -----------------------------------------------------------------

def cmd_gen_data(args):
    cfg = _load_config(args)
    train_set, test_set = _splits(args, cfg)
    save_dataset(args.out, train_set + test_set, ["train"] * len(train_set) + ["test"] * len(test_set))
    _write_config(cfg, args.out)
    print(f"wrote {len(train_set)} train + {len(test_set)} test samples to {args.out}")


def cmd_train(args):
    cfg = _load_config(args)
    train_set, test_set = _splits(args, cfg)
    model, log = train(cfg, train_set, test_set or None, os.path.join(args.out, "train_log.csv"),
                       verbose=not args.quiet)
    checkpoint.save(os.path.join(args.out, "model.ckpt"), model)
    _write_config(cfg, args.out)
    if test_set:
        report = evaluate_model(model, test_set)
        write_report(report, args.out)
        print(" ".join(f"{k}={v:.4f}" for k, v in report.scores().items()))


def _pgm_pairs(pred_dir, gt_dir):
    names = sorted(f for f in os.listdir(gt_dir) if f.endswith(".pgm"))
    if not names:
        raise ContractError(f"no .pgm ground-truth maps in {gt_dir}")
    pairs = []
    for name in names:
        pred_path = os.path.join(pred_dir, name)
        if not os.path.exists(pred_path):
            raise ContractError(f"prediction {pred_path} missing for ground truth {name}")
        pairs.append((netpbm.load(pred_path), netpbm.load(os.path.join(gt_dir, name))))
    return pairs


def cmd_eval(args):
    if args.pred_dir or args.gt_dir:
        if not (args.pred_dir and args.gt_dir):
            raise ContractError("--pred-dir and --gt-dir go together")
        report = evaluate_dataset(_pgm_pairs(args.pred_dir, args.gt_dir))
    else:
        if not args.checkpoint:
            raise ContractError("eval needs --pred-dir/--gt-dir or --checkpoint")
        model = checkpoint.load(args.checkpoint)
        cfg = _load_config(args)
        _, test_set = _splits(args, cfg)
        report = evaluate_model(model, test_set)
    write_report(report, args.out)
    print(" ".join(f"{k}={v:.4f}" for k, v in report.scores().items()))


def _int_list(text):
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected a list of integers, got {text!r}") from None


def cmd_ablate(args):
    cfg = _load_config(args)
    seeds = _int_list(args.seeds) if args.seeds else [cfg.seed]
    rows = ablate(_int_list(args.schemes), cfg, _splits(args, cfg), seeds, verbose=not args.quiet)
    write_table(rows, os.path.join(args.out, "ablation.csv"))
    shutil.copyfile(reference_path(), os.path.join(args.out, "reference_table2.csv"))
    _write_config(cfg, args.out)
    for row in rows:
        print(f"scheme {row.scheme:2d}: " + " ".join(f"{k}={v:.4f}" for k, v in row.report.scores().items()))


def cmd_predict(args):
    model = checkpoint.load(args.checkpoint)
    names = [name for name, _ in read_manifest(args.input)]
    for name in names:
        rgb = netpbm.load(os.path.join(args.input, "rgb", name + ".ppm"))
        depth = netpbm.load(os.path.join(args.input, "depth", name + ".pgm"))
        netpbm.save(os.path.join(args.out, name + ".pgm"), predict(model, rgb, depth))
    print(f"wrote {len(names)} saliency maps to {args.out}")


def cmd_gradcheck(args):
    results = run_suite(args.seed, args.trials, verbose=not args.quiet)
    errors = {k: v for k, v in results.items() if not k.startswith("_")}
    worst = max(errors.values())
    with open(os.path.join(args.out, "gradcheck.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "max_relative_error"])
        for name, err in errors.items():
            writer.writerow([name, repr(err)])
    print(f"max relative error {worst:.3e} over {len(errors)} cases, {args.trials} trials "
          f"({results['_checked']} coordinates, {results['_skipped']} skipped at kinks, "
          f"{results['_seconds']:.1f}s)")
    if worst >= GRAD_TOLERANCE:
        raise ContractError(f"gradient check failed: {worst:.3e} >= {GRAD_TOLERANCE}")


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="m2rnet", description="RGB-D salient object detection at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, data=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--quiet", action="store_true")
        if data:
            p.add_argument("--data", help="dataset directory (default: generate from config)")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "write a synthetic dataset", data=False)
    p.add_argument("--seed", type=int)
    p = command("train", cmd_train, "train a model and score it on the test split")
    p.add_argument("--seed", type=int)
    p = command("eval", cmd_eval, "score saliency maps or a checkpoint")
    p.add_argument("--pred-dir")
    p.add_argument("--gt-dir")
    p.add_argument("--checkpoint")
    p = command("ablate", cmd_ablate, "train and score ablation schemes")
    p.add_argument("--schemes", default="1 13", help="scheme numbers 1..13")
    p.add_argument("--seeds", help="seeds to average over (default: config seed)")
    p = command("predict", cmd_predict, "write saliency maps for a dataset directory", data=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="directory with rgb/, depth/ and manifest.txt")
    p = command("gradcheck", cmd_gradcheck, "finite-difference gradient suite", data=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except (ContractError, ConfigError, CodecError, DimensionError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

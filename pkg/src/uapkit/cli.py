"""Command-line surface: train models, generate and evaluate UAPs.

Every command resolves its full configuration up front, writes its
outputs atomically and drops a JSON manifest next to the primary output
so the run can be reproduced from the manifest alone. Exit codes:
0 success, 1 runtime/data error, 2 usage error.
"""

import argparse
import json
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version as pkg_version

import numpy as np

from . import classifier as clf
from . import datasets as ds
from .attack import AttackConfig, generate_targeted_uap, load_perturbation, save_perturbation
from .evaluation import (
    confusion_csv,
    evaluate,
    check_disjoint,
    sweep,
    write_csv,
    xi_for_zeta,
    zeta,
)
from .fileio import atomic_write_text
from .validation import check_norm_type, norm_type_str

DATA_DIR_ENV = "UAPKIT_DATA_DIR"


def _tool_version():
    try:
        return pkg_version("uapkit")
    except PackageNotFoundError:
        return "unknown"


def _resolve_data_path(source):
    if os.path.isabs(source) or os.path.exists(source):
        return source
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = os.path.join(base, source)
        if os.path.exists(candidate):
            return candidate
    return source


def load_any_dataset(args):
    """Resolve --data: 'synth', a UAPD file, a CIFAR .bin file or directory."""
    source = args.data
    if source == "synth":
        return ds.synth_dataset(
            class_count=args.synth_classes,
            n_per_class=args.synth_per_class,
            sigma=args.synth_sigma,
            seed=args.data_seed,
        )
    path = _resolve_data_path(source)
    if os.path.isdir(path):
        batches = sorted(
            os.path.join(path, f) for f in os.listdir(path) if f.endswith(".bin")
        )
        if not batches:
            raise ValueError(f"no .bin batch files in {path}")
        return ds.load_cifar10(batches)
    if not os.path.exists(path):
        raise ValueError(f"dataset not found: {source}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == ds.DATASET_MAGIC:
        return ds.load_dataset(path)
    return ds.load_cifar10([path])


def add_data_args(parser):
    parser.add_argument("--data", required=True,
                        help="'synth', a UAPD file, a CIFAR-10 .bin file or directory")
    parser.add_argument("--data-seed", type=int, default=0,
                        help="seed for synthetic data generation")
    parser.add_argument("--synth-classes", type=int, default=10)
    parser.add_argument("--synth-per-class", type=int, default=60)
    parser.add_argument("--synth-sigma", type=float, default=0.05)


def add_split_args(parser, default_per_class=50):
    parser.add_argument("--per-class", type=int, default=default_per_class,
                        help="input-set images per class; the rest is the test set")
    parser.add_argument("--split-seed", type=int, default=0)


def write_manifest(path, command, config, outputs, started):
    manifest = {
        "command": command,
        "config": config,
        "tool_version": _tool_version(),
        "duration_seconds": round(time.monotonic() - started, 3),
        "outputs": [os.path.abspath(o) for o in outputs],
    }
    for out in outputs:
        if not os.path.exists(out):
            raise RuntimeError(f"declared output missing: {out}")
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_train(args):
    started = time.monotonic()
    dataset = load_any_dataset(args)
    per_class = args.train_per_class
    if per_class is None:
        per_class = max(1, int(0.8 * dataset.class_counts().min()))
    train_set, holdout = ds.split_balanced(dataset, per_class, seed=args.split_seed)
    net = clf.Network(
        clf.build_preset(args.preset, dataset.image_shape, dataset.class_count),
        dataset.image_shape, dataset.class_count,
    )
    net.init_weights(args.seed)
    net.train_sgd(train_set.images, train_set.labels, args.epochs,
                  args.lr, args.batch_size, args.seed)
    clf.save_model(net, args.out)
    train_acc = net.accuracy(train_set.images, train_set.labels)
    holdout_acc = net.accuracy(holdout.images, holdout.labels) if len(holdout) else float("nan")
    print(f"train_accuracy={train_acc:.4f}")
    print(f"holdout_accuracy={holdout_acc:.4f}")
    config = {
        "data": args.data, "data_seed": args.data_seed,
        "synth_classes": args.synth_classes, "synth_per_class": args.synth_per_class,
        "synth_sigma": args.synth_sigma, "preset": args.preset,
        "epochs": args.epochs, "learning_rate": args.lr,
        "batch_size": args.batch_size, "seed": args.seed,
        "train_per_class": per_class, "split_seed": args.split_seed,
        "dataset_provenance": dataset.provenance,
    }
    write_manifest(args.out + ".manifest.json", "train", config, [args.out], started)
    return 0


def _resolve_xi(args, input_set):
    if (args.xi is None) == (args.zeta is None):
        raise UsageError("exactly one of --xi and --zeta is required")
    if args.xi is not None:
        return float(args.xi)
    if len(input_set) == 0:
        raise ValueError("cannot resolve --zeta on an empty input set")
    return xi_for_zeta(args.zeta, input_set.images)


def cmd_gen_uap(args):
    started = time.monotonic()
    net = clf.load_model(args.model)
    dataset = load_any_dataset(args)
    input_set, _ = ds.split_balanced(dataset, args.per_class, seed=args.split_seed)
    xi = _resolve_xi(args, input_set)
    cfg = AttackConfig(target_class=args.target, epsilon=args.eps, xi=xi,
                       p=check_norm_type(args.p), max_epochs=args.imax, seed=args.seed)
    perturbation, report = generate_targeted_uap(net, input_set.images, cfg)
    save_perturbation(perturbation, args.out, epsilon=cfg.epsilon)
    csv_path = args.csv or args.out + ".epochs.csv"
    lines = ["epoch,r_ts"]
    lines += [f"{i},{r!r}" for i, r in report.epochs]
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    final_r = report.epochs[-1][1] if report.epochs else 0.0
    print(f"r_ts_input={final_r:.4f} termination={report.termination} "
          f"updates={report.updates} degenerate_skips={report.degenerate_skips}")
    config = {
        "model": os.path.abspath(args.model), "data": args.data,
        "data_seed": args.data_seed, "synth_classes": args.synth_classes,
        "synth_per_class": args.synth_per_class, "synth_sigma": args.synth_sigma,
        "per_class": args.per_class, "split_seed": args.split_seed,
        "target_class": cfg.target_class, "epsilon": cfg.epsilon,
        "xi": cfg.xi, "zeta": args.zeta, "p": norm_type_str(cfg.p),
        "i_max": cfg.max_epochs, "seed": cfg.seed,
        "dataset_provenance": dataset.provenance,
    }
    write_manifest(args.out + ".manifest.json", "gen-uap", config,
                   [args.out, csv_path], started)
    return 0


def cmd_sweep(args):
    started = time.monotonic()
    net = clf.load_model(args.model)
    dataset = load_any_dataset(args)
    input_set, test_set = ds.split_balanced(dataset, args.per_class,
                                            seed=args.split_seed)
    grid = [float(z) for z in args.zeta_grid.split(",") if z.strip()]
    if not grid:
        raise UsageError("--zeta-grid must list at least one value")
    if args.targets == "all":
        targets = list(range(net.n_classes))
    else:
        targets = [int(t) for t in args.targets.split(",")]
    base = AttackConfig(target_class=0, epsilon=args.eps, xi=1.0,
                        p=check_norm_type(args.p), max_epochs=args.imax,
                        seed=args.seed)
    reports = []
    for target in targets:
        reports.extend(sweep(net, input_set, test_set, target, grid, base))
    write_csv(reports, args.out)
    print(f"rows={len(reports)} out={args.out}")
    config = {
        "model": os.path.abspath(args.model), "data": args.data,
        "data_seed": args.data_seed, "synth_classes": args.synth_classes,
        "synth_per_class": args.synth_per_class, "synth_sigma": args.synth_sigma,
        "per_class": args.per_class, "split_seed": args.split_seed,
        "targets": targets, "zeta_grid": grid, "epsilon": args.eps,
        "p": norm_type_str(base.p), "i_max": args.imax, "seed": args.seed,
        "dataset_provenance": dataset.provenance,
    }
    write_manifest(args.out + ".manifest.json", "sweep", config, [args.out], started)
    return 0


def cmd_eval(args):
    started = time.monotonic()
    net = clf.load_model(args.model)
    perturbation, _ = load_perturbation(args.uap)
    if tuple(perturbation.rho.shape) != tuple(net.input_shape):
        raise ValueError(
            f"perturbation shape {perturbation.rho.shape} does not match "
            f"model input shape {net.input_shape}"
        )
    dataset = load_any_dataset(args)
    input_set, test_set = ds.split_balanced(dataset, args.per_class,
                                            seed=args.split_seed)
    check_disjoint(input_set, test_set)
    chosen = input_set if args.set == "input" else test_set
    report = evaluate(net, chosen, perturbation, args.target, args.set,
                      seed=args.seed)
    write_csv([report], args.out)
    print(f"r_ts={report.r_ts!r} zeta_pct={report.zeta_pct:.2f} "
          f"out_of_range_pixels={report.out_of_range_pixels}")
    print(confusion_csv(report), end="")
    config = {
        "model": os.path.abspath(args.model), "uap": os.path.abspath(args.uap),
        "data": args.data, "data_seed": args.data_seed,
        "synth_classes": args.synth_classes, "synth_per_class": args.synth_per_class,
        "synth_sigma": args.synth_sigma, "per_class": args.per_class,
        "split_seed": args.split_seed, "set": args.set,
        "target_class": args.target, "seed": args.seed,
        "dataset_provenance": dataset.provenance,
    }
    write_manifest(args.out + ".manifest.json", "eval", config, [args.out], started)
    return 0


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uapkit",
        description="Generate and evaluate targeted universal adversarial perturbations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a preset classifier")
    add_data_args(p_train)
    p_train.add_argument("--preset", required=True, choices=clf.PRESETS)
    p_train.add_argument("--epochs", type=int, default=30)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--train-per-class", type=int, default=None)
    p_train.add_argument("--split-seed", type=int, default=0)
    p_train.add_argument("--out", required=True, help="model output path (.uapm)")
    p_train.set_defaults(func=cmd_train)

    p_gen = sub.add_parser("gen-uap", help="generate a targeted UAP")
    add_data_args(p_gen)
    add_split_args(p_gen)
    p_gen.add_argument("--model", required=True)
    p_gen.add_argument("--target", type=int, required=True)
    p_gen.add_argument("--eps", type=float, default=0.02)
    p_gen.add_argument("--xi", type=float, default=None)
    p_gen.add_argument("--zeta", type=float, default=None)
    p_gen.add_argument("--p", default="2", choices=["1", "2", "inf"])
    p_gen.add_argument("--imax", type=int, default=10)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="perturbation output path (.uapp)")
    p_gen.add_argument("--csv", default=None, help="per-epoch r_ts CSV path")
    p_gen.set_defaults(func=cmd_gen_uap)

    p_sweep = sub.add_parser("sweep", help="success-rate vs zeta sweep")
    add_data_args(p_sweep)
    add_split_args(p_sweep)
    p_sweep.add_argument("--model", required=True)
    p_sweep.add_argument("--targets", default="0",
                         help="comma list of target classes, or 'all'")
    p_sweep.add_argument("--zeta-grid", required=True,
                         help="comma list of ascending zeta percentages")
    p_sweep.add_argument("--eps", type=float, default=0.02)
    p_sweep.add_argument("--p", default="2", choices=["1", "2", "inf"])
    p_sweep.add_argument("--imax", type=int, default=10)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", required=True, help="combined CSV path")
    p_sweep.set_defaults(func=cmd_sweep)

    p_eval = sub.add_parser("eval", help="evaluate a stored perturbation")
    add_data_args(p_eval)
    add_split_args(p_eval)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--uap", required=True)
    p_eval.add_argument("--target", type=int, required=True)
    p_eval.add_argument("--set", default="test", choices=["input", "test"])
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True, help="report CSV path")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``mca {gen-data,augment,train,eval,metrics,bench}``.

Every subcommand resolves its settings as defaults < ``--config`` JSON file <
explicit flags, echoes the resolved settings to stderr and writes them to
``<out>/config.json``.  Passing that file back via ``--config`` reproduces the
run.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O or file-format
error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import augment as aug
from .bench import DEFAULT_SHAPES, format_table, run_benchmark
from .colorspace import hue_jitter, to_uint8
from .data import (
    McavError,
    MotionShapesConfig,
    generate_motionshapes,
    load_dataset,
    read_mcav,
    write_mcav,
    write_motionshapes,
)
from .metrics import MetricsReport, affinity_ratio, diversity, ece
from .smallnet import NumericalError, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, evaluate, run_training, write_log_csv

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("mca")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a flat JSON object")
    return cfg


def _resolve(args, defaults: dict, flag_keys) -> dict:
    """defaults < config file < explicitly passed flags."""
    file_cfg = _load_config(args.config)
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    resolved = {**defaults, **file_cfg}
    for key in flag_keys:
        value = getattr(args, key)
        if value is not None:
            resolved[key] = value
    return resolved


def _echo(resolved: dict, out: Path, command: str) -> None:
    text = json.dumps(resolved, indent=2, sort_keys=True)
    log.info("%s resolved config:\n%s", command, text)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(text + "\n")


def _require(resolved: dict, *keys) -> None:
    missing = [k for k in keys if resolved.get(k) in (None, "")]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


# gen-data

def _gen_defaults() -> dict:
    d = asdict(MotionShapesConfig())
    d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
    return d


def cmd_gen_data(args) -> int:
    if args.counts is not None:
        if len(args.counts) != 2:
            raise UsageError("--counts takes TRAIN,VAL")
        args.n_train, args.n_val = args.counts
    keys = ("kappa", "seed", "classes", "frames", "size", "n_train", "n_val")
    resolved = _resolve(args, _gen_defaults(), keys)
    try:
        cfg = MotionShapesConfig(**resolved)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    _echo(resolved, args.out, "gen-data")
    splits = generate_motionshapes(cfg)
    write_motionshapes(splits, cfg, args.out)
    print(json.dumps({name: len(ds) for name, ds in splits.items()}))
    return EXIT_OK


# augment

AUGMENT_DEFAULTS = {"input": None, "op": "swapmix", "seed": 0, "alpha": 1.0, "lam": None,
                    "perm": None, "delta": None}


def cmd_augment(args) -> int:
    resolved = _resolve(args, AUGMENT_DEFAULTS, ("input", "op", "seed", "alpha", "lam", "perm", "delta"))
    _require(resolved, "input")
    if resolved["op"] not in ("channel-swap", "swapmix", "hue-jitter"):
        raise UsageError(f"unknown op {resolved['op']!r}")
    rng = np.random.default_rng(resolved["seed"])
    try:
        perm = aug.parse_permutation(resolved["perm"]) if resolved["perm"] is not None else aug.sample_permutation(rng)
        lam = (aug.MixCoefficient(float(resolved["lam"]), resolved["alpha"]) if resolved["lam"] is not None
               else aug.sample_lambda(rng, resolved["alpha"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    delta = resolved["delta"]
    if delta is None:
        delta = float(rng.uniform(-180, 180))
    _echo(resolved, args.out, "augment")
    video, label = read_mcav(resolved["input"])
    if resolved["op"] == "channel-swap":
        result = aug.channel_swap(video, perm)
        applied = {"perm": aug.permutation_name(perm)}
    elif resolved["op"] == "swapmix":
        # the file format stores 8-bit samples, so the mixed video is rounded here
        result = to_uint8(aug.swap_mix(video, perm, lam))
        applied = {"perm": aug.permutation_name(perm), "lambda": lam.lam}
    else:
        try:
            result = hue_jitter(video, delta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        applied = {"delta": delta}
    target = args.out / Path(resolved["input"]).name
    write_mcav(result, target, label)
    print(json.dumps({"output": str(target), **applied}))
    return EXIT_OK


# train

def _train_defaults() -> dict:
    d = asdict(TrainConfig())
    d["lr_milestones"] = list(d["lr_milestones"])
    return {"data": None, **d}


TRAIN_FLAGS = ("data", "mode", "epochs", "batch_size", "lr", "momentum", "lambda_av", "rho", "alpha",
               "seed", "av_bidirectional")


def _load_split(root: Path, name: str, required: bool):
    directory = root / name
    if not directory.is_dir():
        if required:
            raise FileNotFoundError(f"missing split directory {directory}")
        return None
    return load_dataset(directory)


def cmd_train(args) -> int:
    resolved = _resolve(args, _train_defaults(), TRAIN_FLAGS)
    _require(resolved, "data")
    try:
        cfg = TrainConfig.from_dict({k: v for k, v in resolved.items() if k != "data"})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    _echo(resolved, args.out, "train")
    root = Path(resolved["data"])
    train = _load_split(root, "train", True)
    val = _load_split(root, "val", False)
    shifted = _load_split(root, "val_hueshift", False)
    result = run_training(cfg, train, val, shifted)
    write_log_csv(result.log, args.out / "log.csv")
    save_checkpoint(result.net, args.out / "model.ckpt")
    print(json.dumps(result.log[-1] if result.log else {}))
    return EXIT_OK


# eval

EVAL_DEFAULTS = {"checkpoint": None, "data": None, "augment": "identity", "seed": 0, "alpha": 1.0}


def cmd_eval(args) -> int:
    resolved = _resolve(args, EVAL_DEFAULTS, tuple(EVAL_DEFAULTS))
    _require(resolved, "checkpoint", "data")
    if resolved["augment"] not in aug.AUGMENTATIONS:
        raise UsageError(f"--augment must be one of {aug.AUGMENTATIONS}")
    _echo(resolved, args.out, "eval")
    net = load_checkpoint(resolved["checkpoint"])
    ds = load_dataset(resolved["data"])
    if resolved["augment"] != "identity":
        videos = aug.apply_augmentation(ds.videos, resolved["augment"],
                                        np.random.default_rng(resolved["seed"]), resolved["alpha"])
        ds = type(ds)(videos, ds.labels, ds.class_names)
    res = evaluate(net, ds)
    np.savez(args.out / "predictions.npz", probs=res.probs, labels=res.labels, loss=res.loss,
             accuracy=res.accuracy, augment=resolved["augment"])
    print(json.dumps({"accuracy": res.accuracy, "loss": res.loss, "n": len(ds)}))
    return EXIT_OK


# metrics

METRICS_DEFAULTS = {"predictions": None, "augmented": None, "log_aug": None, "log_clean": None,
                    "n_bins": 15, "seed": 0}


def _load_dump(path):
    with np.load(path) as z:
        return z["probs"], z["labels"]


def _final_train_ce(path) -> float:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise UsageError(f"training log {path} has no epochs")
    return float(rows[-1]["train_ce"])


def cmd_metrics(args) -> int:
    resolved = _resolve(args, METRICS_DEFAULTS, tuple(METRICS_DEFAULTS))
    if resolved["predictions"] is None and resolved["log_aug"] is None:
        raise UsageError("nothing to do: pass --predictions and/or --log-aug/--log-clean")
    if (resolved["log_aug"] is None) != (resolved["log_clean"] is None):
        raise UsageError("diversity needs both --log-aug and --log-clean")
    if resolved["augmented"] is not None and resolved["predictions"] is None:
        raise UsageError("affinity needs --predictions for the clean set")
    _echo(resolved, args.out, "metrics")
    report = MetricsReport(ece_bins=resolved["n_bins"], sources={})
    if resolved["predictions"] is not None:
        probs, labels = _load_dump(resolved["predictions"])
        report.accuracy = float((probs.argmax(axis=1) == labels).mean())
        report.ece = ece(probs, labels, resolved["n_bins"])
        report.sources["clean"] = resolved["predictions"]
        if resolved["augmented"] is not None:
            probs_a, labels_a = _load_dump(resolved["augmented"])
            if not np.array_equal(labels, labels_a):
                raise UsageError("prediction dumps cover different label sets")
            acc_a = float((probs_a.argmax(axis=1) == labels_a).mean())
            report.affinity = affinity_ratio(acc_a, report.accuracy)
            report.sources["augmented"] = resolved["augmented"]
    if resolved["log_aug"] is not None:
        report.diversity = diversity(_final_train_ce(resolved["log_aug"]), _final_train_ce(resolved["log_clean"]))
        report.sources["log_aug"] = resolved["log_aug"]
        report.sources["log_clean"] = resolved["log_clean"]
    text = json.dumps(report.to_dict(), indent=2)
    (args.out / "metrics.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


# bench

def cmd_bench(args) -> int:
    defaults = {"shape": [list(s) for s in DEFAULT_SHAPES], "runs": 500, "warmup": 20, "seed": 0}
    resolved = _resolve(args, defaults, ("shape", "runs", "warmup", "seed"))
    shapes = [tuple(s) for s in resolved["shape"]]
    for s in shapes:
        if len(s) != 4 or s[1] != 3 or min(s) < 1:
            raise UsageError(f"--shape must be T,3,H,W, got {','.join(map(str, s))}")
    if resolved["runs"] < 1 or resolved["warmup"] < 0:
        raise UsageError("need --runs >= 1 and --warmup >= 0")
    _echo(resolved, args.out, "bench")
    report = run_benchmark(shapes, resolved["runs"], resolved["warmup"], resolved["seed"])
    (args.out / "bench.json").write_text(json.dumps(report, indent=2) + "\n")
    print(format_table(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mca", description="Motion coherent augmentation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def command(name, func, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", help="flat JSON file of settings (flags take precedence)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "generate the MotionShapes dataset")
    p.add_argument("--kappa", type=float, help="probability that a sample's hue is its class hue")
    p.add_argument("--classes", type=_str_list, help="comma-separated motion classes")
    p.add_argument("--frames", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--counts", type=_int_list, help="TRAIN,VAL sample counts")
    p.set_defaults(n_train=None, n_val=None)

    p = command("augment", cmd_augment, "apply one augmentation to an .mcav video")
    p.add_argument("--input", help=".mcav file to augment")
    p.add_argument("--op", choices=("channel-swap", "swapmix", "hue-jitter"))
    p.add_argument("--alpha", type=float, help="Beta(alpha, alpha) parameter for lambda")
    p.add_argument("--lambda", dest="lam", type=float, help="fixed mixing weight (overrides sampling)")
    p.add_argument("--perm", help="channel order such as GBR (overrides sampling)")
    p.add_argument("--delta", type=float, help="hue shift in degrees for hue-jitter")

    p = command("train", cmd_train, "train a SmallNet classifier")
    p.add_argument("--data", help="directory written by gen-data")
    p.add_argument("--mode", choices=("baseline", "channel-swap-ce", "swapmix-ce", "expand-set",
                                      "mca-plus-ce-tilde", "mca"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--lambda-av", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--av-bidirectional", type=_bool, metavar="BOOL")

    p = command("eval", cmd_eval, "evaluate a checkpoint and dump predictions")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="split directory of .mcav files")
    p.add_argument("--augment", choices=aug.AUGMENTATIONS)
    p.add_argument("--alpha", type=float)

    p = command("metrics", cmd_metrics, "accuracy, ECE, affinity and diversity from dumps and logs")
    p.add_argument("--predictions", help="clean-set dump from eval")
    p.add_argument("--augmented", help="augmented-set dump from eval (enables affinity)")
    p.add_argument("--log-aug", help="training log of the augmentation-trained model")
    p.add_argument("--log-clean", help="training log of the clean-trained model")
    p.add_argument("--n-bins", type=int)

    p = command("bench", cmd_bench, "time hue jittering against SwapMix")
    p.add_argument("--shape", type=_int_list, action="append", help="T,C,H,W; repeatable")
    p.add_argument("--runs", type=int)
    p.add_argument("--warmup", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mca {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"mca {args.command}: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, McavError) as exc:
        print(f"mca {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # remaining value errors come from file contents (checkpoints, dumps)
        print(f"mca {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

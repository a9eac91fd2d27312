"""Command-line entry point.

One binary with subcommands covering the batch pipeline:

    synth  - render a synthetic two-camera corpus and its manifest
    pairs  - build train/test pair manifests from a corpus manifest
    train  - fit a model on a training pair manifest
    eval   - score a checkpoint on a test pair manifest
    infer  - classify a single patch pair

Values resolve as defaults < ``--config`` file (``key = value`` lines,
``#`` comments) < explicit flags, and every run echoes the fully
resolved configuration before doing work. Exit codes: 0 success,
1 usage, 2 validation/format, 3 runtime (divergence, IO).
"""

import argparse
import os
import sys

import numpy as np

from . import autograd as ag
from . import metrics as mx
from . import pairgen, siamese, synthdata, trainer
from .errors import (ConsistencyError, DimensionError, DivergedError, FormatError,
                     ParameterError, StorageError, ValidationError)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

MODEL_KINDS = {
    "car": siamese.KIND_ONE_STREAM_SHAPE,
    "plate": siamese.KIND_ONE_STREAM_PLATE,
    "two-stream": siamese.KIND_TWO_STREAM,
}


class UsageError(ParameterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config_file(path):
    """Parse ``key = value`` lines; blank lines and # comments ignored."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                if not key:
                    raise ValidationError(f"{path}:{lineno}: empty key")
                values[key.replace("-", "_")] = value
    except OSError as exc:
        raise StorageError(f"cannot read config file {path}: {exc}") from exc
    return values


def resolve_config(args, parser_defaults):
    """Merge defaults, config file, and explicit flags; echo the result."""
    merged = dict(parser_defaults)
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        if "lambda" in file_values:  # the paper's symbol; stored internally as lam
            file_values["lam"] = file_values.pop("lambda")
        unknown = set(file_values) - set(merged)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key, raw in file_values.items():
            default = parser_defaults[key]
            caster = type(default) if default is not None else str
            try:
                merged[key] = caster(raw) if caster is not bool else raw.lower() == "true"
            except ValueError as exc:
                raise ValidationError(f"config key {key}: bad value {raw!r}") from exc
    for key in merged:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    missing = [k for k, v in merged.items() if v is None]
    if missing:
        raise UsageError(f"missing required settings: {sorted(missing)}")
    print("resolved config:")
    for key in sorted(merged):
        print(f"  {key} = {merged[key]}")
    return argparse.Namespace(**merged)


def cmd_synth(args):
    defaults = {"out": None, "n_vehicles": 50, "match_fraction": 0.6, "occurrences": 3,
                "shape_classes": 10, "plate_length": 5, "noise_std": 0.02,
                "illum_low": 0.8, "illum_high": 1.2, "occlusion_prob": 0.0, "seed": 0}
    cfg = resolve_config(args, defaults)
    spec = synthdata.SynthSpec(
        n_vehicles=cfg.n_vehicles, match_fraction=cfg.match_fraction,
        occurrences_per_camera=cfg.occurrences, shape_classes=cfg.shape_classes,
        plate_length=cfg.plate_length, noise_std=cfg.noise_std,
        illumination_range=(cfg.illum_low, cfg.illum_high),
        plate_occlusion_prob=cfg.occlusion_prob, seed=cfg.seed,
    )
    manifest = synthdata.generate(spec, cfg.out)
    print(synthdata.format_stats(synthdata.stats(manifest)))
    print(f"manifest: {os.path.join(cfg.out, 'manifest.csv')}")


def cmd_pairs(args):
    defaults = {"manifest": None, "out": None, "n": 3, "lam": 5,
                "test_fraction": 0.3, "seed": 0}
    cfg = resolve_config(args, defaults)
    manifest = synthdata.load_manifest(cfg.manifest)
    ids = sorted({t.vehicle_id for t in manifest.tracks})
    train_ids, test_ids = pairgen.random_split(ids, cfg.test_fraction, cfg.seed)
    spec = pairgen.PairSetSpec(n=cfg.n, lam=cfg.lam, train_ids=train_ids,
                               test_ids=test_ids, seed=cfg.seed)
    train_pairs, test_pairs = pairgen.build_sets(spec, manifest.tracks)
    os.makedirs(cfg.out, exist_ok=True)
    pairgen.save_pairs(os.path.join(cfg.out, "train.pairs"), spec, train_pairs)
    pairgen.save_pairs(os.path.join(cfg.out, "test.pairs"), spec, test_pairs)
    print(pairgen.settings_report(spec, train_pairs, test_pairs))
    print(f"pair manifests: {cfg.out}/train.pairs {cfg.out}/test.pairs")


def cmd_train(args):
    defaults = {"pairs": None, "corpus": None, "out": None, "model": "two-stream",
                "backbone": "small-vgg", "epochs": 10, "batch_size": 32,
                "learning_rate": 1e-2, "momentum": 0.9, "val_fraction": 0.1, "seed": 0}
    cfg = resolve_config(args, defaults)
    if cfg.model not in MODEL_KINDS:
        raise UsageError(f"unknown model {cfg.model!r}; choose from {sorted(MODEL_KINDS)}")
    kind = MODEL_KINDS[cfg.model]
    if kind == siamese.KIND_TWO_STREAM:
        model = siamese.build_two_stream(cfg.backbone, seed=cfg.seed, dtype=np.float32)
    else:
        model = siamese.build_one_stream(kind, cfg.backbone, seed=cfg.seed, dtype=np.float32)
    _, pairs = pairgen.load_pairs(cfg.pairs)
    train_pairs, val_pairs = trainer.split_train_val(pairs, cfg.val_fraction, cfg.seed)
    config = trainer.TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
        momentum=cfg.momentum, seed=cfg.seed, checkpoint_dir=cfg.out,
    )
    result = trainer.train(model, train_pairs, val_pairs, config, root=cfg.corpus)
    print(f"trained {cfg.model}/{cfg.backbone}: best F {100 * result.best_f:.1f} "
          f"at epoch {result.best_epoch} ({result.epochs_run} epochs run)")
    print(f"checkpoint: {result.best_checkpoint}")
    print(f"log: {os.path.join(cfg.out, 'log.csv')}")


def cmd_eval(args):
    defaults = {"checkpoint": None, "pairs": None, "corpus": None,
                "label": "model", "out": "", "seed": 0}
    cfg = resolve_config(args, defaults)
    model = siamese.load_model(cfg.checkpoint)
    header, pairs = pairgen.load_pairs(cfg.pairs)
    cache = trainer.PatchCache(root=cfg.corpus, dtype=np.float32)
    report = trainer.evaluate_pairs(model, pairs, cache)
    row = mx.ComparisonRow(model=cfg.label, n=int(header["N"]),
                           lam=int(header["lambda"]), report=report)
    print(mx.compare([row]))
    if cfg.out:
        new = not os.path.exists(cfg.out)
        with open(cfg.out, "a", newline="", encoding="utf-8") as fh:
            rec = row.record()
            if new:
                fh.write(",".join(rec) + "\n")
            fh.write(",".join(str(rec[k]) for k in rec) + "\n")
        print(f"appended record to {cfg.out}")


def cmd_infer(args):
    defaults = {"checkpoint": None, "shape1": "", "plate1": "",
                "shape2": "", "plate2": "", "seed": 0}
    cfg = resolve_config(args, defaults)
    model = siamese.load_model(cfg.checkpoint)
    need = {
        siamese.KIND_TWO_STREAM: ("shape1", "plate1", "shape2", "plate2"),
        siamese.KIND_ONE_STREAM_SHAPE: ("shape1", "shape2"),
        siamese.KIND_ONE_STREAM_PLATE: ("plate1", "plate2"),
    }[model.kind]
    given = {k for k in ("shape1", "plate1", "shape2", "plate2") if getattr(cfg, k)}
    if given != set(need):
        raise UsageError(
            f"checkpoint kind {model.kind!r} requires exactly "
            f"--{' --'.join(need)}, got --{' --'.join(sorted(given)) or '(none)'}"
        )
    dtype = next(iter(model.parameters().values())).dtype
    patches = [synthdata.load_patch(getattr(cfg, k), dtype=dtype) for k in need]
    tensors = [ag.Tensor(p, dtype=dtype) for p in patches]
    if model.kind == siamese.KIND_TWO_STREAM:
        decision = siamese.two_stream_forward(model, *tensors)
    else:
        decision = siamese.one_stream_forward(model.net, tensors[0], tensors[1], model.head)
    p_non, p_match = decision.probs
    print(f"p(non-matching) = {p_non:.6f}  p(matching) = {p_match:.6f}")
    print(f"verdict: {decision.label}")


def build_parser():
    parser = _Parser(prog="twostream-reid",
                     description="Two-stream Siamese vehicle matching pipeline")
    subs = parser.add_subparsers(dest="command", metavar="command")

    sp = subs.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", help="corpus output directory")
    sp.add_argument("--n-vehicles", dest="n_vehicles", type=int)
    sp.add_argument("--match-fraction", dest="match_fraction", type=float)
    sp.add_argument("--occurrences", type=int)
    sp.add_argument("--shape-classes", dest="shape_classes", type=int)
    sp.add_argument("--plate-length", dest="plate_length", type=int)
    sp.add_argument("--noise-std", dest="noise_std", type=float)
    sp.add_argument("--illum-low", dest="illum_low", type=float)
    sp.add_argument("--illum-high", dest="illum_high", type=float)
    sp.add_argument("--occlusion-prob", dest="occlusion_prob", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_synth)

    pp = subs.add_parser("pairs", help="build train/test pair manifests")
    pp.add_argument("--manifest", help="corpus manifest path")
    pp.add_argument("--out", help="directory for pair manifests")
    pp.add_argument("--n", type=int, help="occurrence depth N")
    pp.add_argument("--lambda", dest="lam", type=int, help="test negative multiplier")
    pp.add_argument("--test-fraction", dest="test_fraction", type=float)
    pp.add_argument("--seed", type=int)
    pp.add_argument("--config")
    pp.set_defaults(func=cmd_pairs)

    tp = subs.add_parser("train", help="train a matching model")
    tp.add_argument("--pairs", help="training pair manifest")
    tp.add_argument("--corpus", help="corpus root directory holding the patches")
    tp.add_argument("--out", help="checkpoint/log directory")
    tp.add_argument("--model", choices=sorted(MODEL_KINDS))
    tp.add_argument("--backbone", choices=["small-vgg", "lenet5"])
    tp.add_argument("--epochs", type=int)
    tp.add_argument("--batch-size", dest="batch_size", type=int)
    tp.add_argument("--learning-rate", dest="learning_rate", type=float)
    tp.add_argument("--momentum", type=float)
    tp.add_argument("--val-fraction", dest="val_fraction", type=float)
    tp.add_argument("--seed", type=int)
    tp.add_argument("--config")
    tp.set_defaults(func=cmd_train)

    ep = subs.add_parser("eval", help="score a checkpoint on a pair manifest")
    ep.add_argument("--checkpoint")
    ep.add_argument("--pairs", help="test pair manifest")
    ep.add_argument("--corpus", help="corpus root directory holding the patches")
    ep.add_argument("--label", help="row label in the comparison record")
    ep.add_argument("--out", help="CSV file to append the record to")
    ep.add_argument("--seed", type=int)
    ep.add_argument("--config")
    ep.set_defaults(func=cmd_eval)

    ip = subs.add_parser("infer", help="classify one patch pair")
    ip.add_argument("--checkpoint")
    ip.add_argument("--shape1")
    ip.add_argument("--plate1")
    ip.add_argument("--shape2")
    ip.add_argument("--plate2")
    ip.add_argument("--seed", type=int)
    ip.add_argument("--config")
    ip.set_defaults(func=cmd_infer)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help()
            return EXIT_USAGE
        args.func(args)
        return EXIT_OK
    except ParameterError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FormatError, ConsistencyError, DimensionError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergedError as exc:
        where = f" (last checkpoint: {exc.checkpoint_path})" if exc.checkpoint_path else ""
        print(f"training diverged: {exc}{where}", file=sys.stderr)
        return EXIT_RUNTIME
    except (StorageError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

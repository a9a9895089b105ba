"""``hifi`` command line: gen, train, predict, eval, rf.

Exit codes: 0 ok, 2 usage/argument, 3 file format, 4 configuration. Every
failure prints exactly one line ``hifi: error[<kind>]: <reason>`` to stderr.
"""

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import data
from .arch import build_network
from .config import SEED_ENV, load_config
from .errors import ArgumentError, ConfigError, DimensionError, FormatError, GraphError, HifiError
from .evaluate import default_thresholds, evaluate, render_pr
from .modelfile import load_model, save_model
from .predict import predict, predict_multiscale
from .train import train

logger = logging.getLogger("hifi")

EXIT_USAGE, EXIT_FORMAT, EXIT_CONFIG = 2, 3, 4
EXIT_CODES = {"usage": EXIT_USAGE, "argument": EXIT_USAGE, "format": EXIT_FORMAT,
              "dimension": EXIT_FORMAT, "io": EXIT_FORMAT, "config": EXIT_CONFIG, "graph": EXIT_CONFIG}


class UsageError(HifiError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ commands


def cmd_gen(args):
    if args.size < data.MIN_CANVAS:
        raise ArgumentError(f"--size must be >= {data.MIN_CANVAS}, got {args.size}")
    seed = args.seed if args.seed is not None else load_config().seed
    path = data.gen_dataset(args.out, args.count, args.size, seed)
    print(f"wrote {args.count} samples to {args.out} manifest_sha256={data.manifest_hash(args.out)}")
    return path


def _train_config(args):
    overrides = {}
    if args.arch:
        overrides["arch"] = args.arch
    if args.iters is not None:
        overrides["iters"] = args.iters
    if args.data:
        overrides["data"] = args.data
    cfg = load_config(args.config, overrides)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_train(args):
    cfg = _train_config(args)
    if not cfg.data:
        raise ConfigError("no dataset: pass --data or set data in the config")
    if cfg.in_channels != 1:
        raise ConfigError(f"in_channels = {cfg.in_channels}, but dataset images are single-channel")
    samples = data.load_dataset(cfg.data, cfg.split)
    if not samples:
        raise ConfigError(f"split {cfg.split!r} of {cfg.data} is empty")
    net = build_network(cfg.arch_config(), seed=cfg.seed)
    min_side = min(min(s.image.shape) for s in samples)
    if min_side < data.MIN_CANVAS:
        raise ConfigError(f"dataset images ({min_side}px) are smaller than the minimum {data.MIN_CANVAS}px")
    log_path = args.log or os.path.splitext(args.out)[0] + ".loss.tsv"
    t0 = time.perf_counter()
    with open(log_path, "w") as log:
        rows = train(net, samples, cfg.iters, cfg.sgd_state(), seed=cfg.seed,
                     quant_convention=cfg.quant_convention, beta_convention=cfg.beta_convention,
                     augment_data=cfg.augment, log=log)
    save_model(args.out, net, cfg)
    last = f" final_loss={rows[-1][2]:.6g}" if rows else ""
    print(f"trained {cfg.arch} for {cfg.iters} iterations in {time.perf_counter() - t0:.1f}s{last}; "
          f"model={args.out} log={log_path}")
    return rows


def _input_images(path):
    """(id, path) pairs from a PGM file, a dataset root, or a directory of PGMs."""
    if os.path.isfile(path):
        return [(os.path.splitext(os.path.basename(path))[0], path)]
    if not os.path.isdir(path):
        raise ArgumentError(f"no such file or directory: {path}")
    if os.path.exists(os.path.join(path, "manifest.tsv")):
        return [(r["id"], os.path.join(path, "images", r["id"] + ".pgm")) for r in data.read_manifest(path)]
    names = sorted(n for n in os.listdir(path) if n.endswith(".pgm"))
    if not names:
        raise ArgumentError(f"no .pgm images in {path}")
    return [(n[:-4], os.path.join(path, n)) for n in names]


def cmd_predict(args):
    net, cfg = load_model(args.model)
    if cfg.in_channels != 1:
        raise FormatError(f"model expects {cfg.in_channels} input channels; inputs are grayscale PGM")
    os.makedirs(args.out, exist_ok=True)
    items = _input_images(args.input)
    run = predict_multiscale if args.multiscale else predict
    for sid, path in items:
        raw = data.read_pgm(path)
        img = raw.astype(np.float64) / (255.0 if raw.dtype == np.uint8 else 65535.0)
        y = run(net, img)
        data.write_skf(os.path.join(args.out, sid + ".skf"), y)
        data.write_pgm(os.path.join(args.out, sid + ".pgm"), data.image_to_u8(y))
    print(f"wrote {len(items)} response maps to {args.out}")


def _gt_path(root, sid):
    for p in (os.path.join(root, "scales", sid + ".skf"), os.path.join(root, sid + ".skf")):
        if os.path.exists(p):
            return p
    raise FormatError(f"no ground truth for id {sid} in {root}")


def cmd_eval(args):
    if not os.path.isdir(args.pred):
        raise ArgumentError(f"--pred {args.pred} is not a directory")
    ids = sorted(n[:-4] for n in os.listdir(args.pred) if n.endswith(".skf"))
    if not ids:
        raise ArgumentError(f"no .skf predictions in {args.pred}")
    if args.tol is not None and args.tol <= 0:
        raise ArgumentError(f"--tol must be positive, got {args.tol}")
    preds, gts = [], []
    for sid in ids:
        p = data.read_skf(os.path.join(args.pred, sid + ".skf")).astype(np.float64)
        g = data.read_skf(_gt_path(args.gt, sid)) > 0
        if p.shape != g.shape:
            raise FormatError(f"{sid}: prediction {p.shape} and ground truth {g.shape} differ in shape")
        preds.append(np.clip(p, 0.0, 1.0))
        gts.append(g)
    rep = evaluate(preds, gts, default_thresholds(args.thresholds), tol=args.tol)
    out = args.out or args.pred
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.tsv"), "w") as f:
        f.write(rep.to_tsv())
    data.write_pgm(os.path.join(out, "pr.pgm"), render_pr(rep))
    print(f"ods_f={rep.ods_f:.6f} ods_threshold={rep.ods_threshold:.4f} images={len(ids)}")
    return rep


def cmd_rf(args):
    overrides = {"arch": args.arch} if args.arch else {}
    if args.backbone:
        overrides["backbone"] = args.backbone
    cfg = load_config(args.config, overrides)
    net = build_network(cfg.arch_config(), seed=cfg.seed)
    print("so\tname\tlevel\tdeepest_group\treceptive_field\tclass_count\tstride")
    for i, so in enumerate(net.side_outputs, start=1):
        print(f"{i}\t{so.name}\t{so.level}\t{so.deepest_group}\t{so.receptive_field}\t"
              f"{so.class_count}\t{so.output_stride}")
    print("# ladder " + " ".join(str(r) for r in net.ladder))


# ------------------------------------------------------------------ parser


def build_parser():
    p = _Parser(prog="hifi", description="Hierarchical feature integration skeleton detector.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--size", type=int, default=96)
    g.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV} or 0)")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data")
    t.add_argument("--config")
    t.add_argument("--arch")
    t.add_argument("--iters", type=int)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="loss log TSV (default: <out>.loss.tsv)")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="write response maps")
    r.add_argument("--model", required=True)
    r.add_argument("--input", required=True, help="PGM file, directory of PGMs, or dataset root")
    r.add_argument("--out", required=True)
    r.add_argument("--multiscale", action="store_true", help="average over scales 0.5, 1, 1.5")
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="NMS, PR sweep and ODS F-measure")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True, help="dataset root or directory of scale SKFs")
    e.add_argument("--tol", type=float, default=None, help="pixels (default: 0.0075 x diagonal)")
    e.add_argument("--thresholds", type=int, default=99)
    e.add_argument("--out", help="report directory (default: --pred)")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("rf", help="receptive fields and class counts per side-output")
    f.add_argument("--arch")
    f.add_argument("--backbone", choices=("mini", "vgg16"))
    f.add_argument("--config")
    f.set_defaults(func=cmd_rf)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s", stream=sys.stderr)
        args.func(args)
    except HifiError as e:
        return _fail(e.kind, str(e))
    except OSError as e:
        return _fail("io", f"{e.strerror}: {e.filename}" if e.filename else str(e))
    return 0


def _fail(kind, message):
    print(f"hifi: error[{kind}]: {' '.join(message.split())}", file=sys.stderr)
    return EXIT_CODES.get(kind, 1)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``rfdn {degrade,train,sr,eval,analyze}``.

Exit codes: 0 success, 1 usage, 2 I/O or file format, 3 numeric / shape.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data
from .arch import (BlockVariant, Model, ModelConfig, WeightStore, build_rfdn, build_variant,
                   check_weights, count_mult_adds, count_params, rfdn_forward, warm_start)
from .errors import ConfigError, ShapeError, UsageError, WeightFormatError
from .metrics import evaluate
from .train import TrainConfig, train_loop
from .weightfile import load_weights, save_weights

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("rfdn")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# run config files


TRAIN_KEYS = {
    # key: (type, default)
    "hr-dir": (str, None),
    "scale": (int, 2),
    "channels": (int, 48),
    "blocks": (int, 6),
    "rate": (float, 0.5),
    "steps": (int, 1_000_000),
    "seed": (int, 0),
    "resume": (str, None),
    "out": (str, None),
    "batch": (int, 64),
    "patch": (int, 64),
    "lr": (float, 5e-4),
    "half-life": (int, 200_000),
    "checkpoint-every": (int, 10_000),
}


def read_run_config(path, allowed=TRAIN_KEYS) -> dict:
    """Parse a ``key = value`` file. Unknown keys are an error."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value", EXIT_USAGE)
        key, val = (part.strip() for part in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in allowed:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}", EXIT_USAGE)
        typ = allowed[key][0]
        try:
            values[key] = typ(val)
        except ValueError:
            raise CliError(f"{path}:{lineno}: bad value for {key!r}: {val!r}", EXIT_USAGE) from None
    return values


def resolve(args: argparse.Namespace, file_values: dict, keys=TRAIN_KEYS) -> dict:
    """Flags beat config-file values, which beat defaults."""
    out = {}
    for key, (_, default) in keys.items():
        flag = getattr(args, key.replace("-", "_"), None)
        out[key] = flag if flag is not None else file_values.get(key, default)
    return out


# --------------------------------------------------------------------------
# commands


def _images(hr_dir) -> list[Path]:
    root = Path(hr_dir)
    if not root.is_dir():
        raise CliError(f"{hr_dir}: not a directory", EXIT_IO)
    paths = data.list_images(root)
    if not paths:
        raise CliError(f"{hr_dir}: no images found", EXIT_IO)
    return paths


def cmd_degrade(args) -> int:
    paths = _images(args.hr_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for path in paths:
            pair = data.degrade(data.load_image(path), args.scale, id=path.stem)
            target = out_dir / f"{path.stem}x{args.scale}.png"
            data.save_image(pair.lr, target)
            written.append(target)
            print(f"{path.name} {pair.hr.shape[2]}x{pair.hr.shape[3]} -> "
                  f"{target.name} {pair.lr.shape[2]}x{pair.lr.shape[3]}")
    except BaseException:
        for target in written:
            target.unlink(missing_ok=True)
        raise
    return EXIT_OK


def _model_config(scale, channels, blocks, rate) -> ModelConfig:
    try:
        return ModelConfig(scale=scale, channels=channels, num_blocks=blocks, distill_rate=rate)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _load_checked(path, model: Model) -> WeightStore:
    weights = load_weights(path)
    check_weights(model, weights)
    return weights


def cmd_train(args) -> int:
    file_values = read_run_config(args.config) if args.config else {}
    opts = resolve(args, file_values)
    if not opts["hr-dir"] or not opts["out"]:
        raise CliError("train needs --hr-dir and --out", EXIT_USAGE)
    config = _model_config(opts["scale"], opts["channels"], opts["blocks"], opts["rate"])
    model, weights = build_rfdn(config, seed=opts["seed"])
    if opts["resume"]:
        loaded = load_weights(opts["resume"])
        try:
            check_weights(model, loaded)
            weights = loaded
        except ShapeError:
            # a checkpoint trained at another scale: keep everything but the head
            weights = warm_start(loaded, config, seed=opts["seed"])
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    tcfg = TrainConfig(steps=opts["steps"], batch=opts["batch"], patch=opts["patch"],
                       lr=opts["lr"], half_life=opts["half-life"], seed=opts["seed"],
                       checkpoint_every=opts["checkpoint-every"])
    pairs = []
    if tcfg.steps > 0:
        pairs = [data.degrade(data.load_image(p), config.scale, id=p.stem)
                 for p in _images(opts["hr-dir"])]

    def checkpoint(step, w):
        save_weights(w, out / f"step{step:07d}.rfdw")

    weights, trace = train_loop(model, weights, pairs, tcfg, checkpoint) if tcfg.steps else (weights, [])
    save_weights(weights, out / "model.rfdw")
    with open(out / "loss.txt", "w") as fh:
        for rec in trace:
            fh.write(rec.line() + "\n")
    print(f"wrote {out / 'model.rfdw'} after {len(trace)} steps "
          f"({count_params(model)} params)")
    return EXIT_OK


def super_resolve(model: Model, weights, lr_img: np.ndarray) -> np.ndarray:
    """Run the network on a [0, 255] image; result clamped to [0, 255] (not rounded)."""
    out = rfdn_forward(model, weights, lr_img.astype(np.float32) / np.float32(255))
    return np.clip(out * 255.0, 0, 255)


def cmd_sr(args) -> int:
    config = _model_config(args.scale, args.channels, args.blocks, args.rate)
    model = build_variant(BlockVariant.RFDB, config)
    weights = _load_checked(args.weights, model)
    sr = super_resolve(model, weights, data.load_image(args.input))
    data.save_image(sr, args.output)
    print(f"{args.input} -> {args.output} {sr.shape[2]}x{sr.shape[3]}")
    return EXIT_OK


def _workers() -> int:
    raw = os.environ.get("RFDN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise CliError(f"RFDN_THREADS must be an integer, got {raw!r}", EXIT_USAGE) from None
    return os.cpu_count() or 1


def eval_image(path: Path, scale: int, shave: int, model=None, weights=None):
    pair = data.degrade(data.load_image(path), scale, id=path.stem)
    if model is None:
        sr = data.upscale_bicubic(pair.lr, scale)
    else:
        sr = super_resolve(model, weights, pair.lr)
    return evaluate(np.round(sr), pair.hr, shave)


def cmd_eval(args) -> int:
    paths = _images(args.hr_dir)
    shave = args.scale if args.shave is None else args.shave
    model = weights = None
    if not args.bicubic:
        config = _model_config(args.scale, args.channels, args.blocks, args.rate)
        model = build_variant(BlockVariant.RFDB, config)
        weights = _load_checked(args.weights, model)
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(lambda p: eval_image(p, args.scale, shave, model, weights), paths))
    for path, res in zip(paths, results):
        print(f"{path.stem} {res.psnr_db:.4f} {res.ssim:.4f}")
    print(f"mean {np.mean([r.psnr_db for r in results]):.4f} "
          f"{np.mean([r.ssim for r in results]):.4f}")
    return EXIT_OK


def _hr_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def cmd_analyze(args) -> int:
    config = _model_config(args.scale, args.channels, args.blocks, args.rate)
    model = build_variant(args.variant, config)
    w, h = args.hr_size
    macs = count_mult_adds(model, h, w)
    print(f"variant {model.variant.value}")
    print(f"params {count_params(model)}")
    print(f"mult_adds {macs} ({macs / 1e9:.2f}G at {w}x{h})")
    return EXIT_OK


# --------------------------------------------------------------------------


def _model_flags(p, scale_default=4):
    p.add_argument("--scale", type=int, default=scale_default, choices=(2, 3, 4))
    p.add_argument("--channels", type=int, default=48)
    p.add_argument("--blocks", type=int, default=6)
    p.add_argument("--rate", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfdn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="bicubic-downsample an HR folder")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("train", help="train an RFDN on an HR folder")
    p.add_argument("--config", help="key=value file; flags override it")
    for key, (typ, _) in TRAIN_KEYS.items():
        p.add_argument(f"--{key}", type=typ, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sr", help="super-resolve one image")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    _model_flags(p)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="Y-channel PSNR/SSIM over an HR folder")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--weights")
    src.add_argument("--bicubic", action="store_true")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--shave", type=int, default=None, help="border crop (default: scale)")
    _model_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="parameter and mult-add counts")
    _model_flags(p)
    p.add_argument("--variant", choices=[v.value for v in BlockVariant], default="rfdb")
    p.add_argument("--hr-size", type=_hr_size, default=(1280, 720), metavar="WxH")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, WeightFormatError, data.ImageFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: train, encode, decode, attack, eval, jnd.

Exit codes: 0 success, 2 decode failure, 64 bad usage, 65 input that does
not fit the model (e.g. a checkpoint without URL capacity), 66 missing file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import codec, dataio, evaluation
from .config import load_config
from .distortion import DistortionSeverity, apply_distortion_chain
from .jnd import jnd_map
from .training import fit

EX_OK = 0
EX_DECODE_FAIL = 2
EX_USAGE = 64
EX_DATAERR = 65
EX_NOINPUT = 66

_SEVERITY_OPS = ("perspective", "noise", "motion_blur", "defocus_blur",
                 "color", "light", "jpeg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


class DataError(RuntimeError):
    pass


def build_parser() -> _Parser:
    parser = _Parser(prog="linkmark",
                     description="Hide and recover short URLs in images.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True, help="directory of cover images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("encode", help="hide a URL in an image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--url", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jpeg-quality", type=int, default=None,
                   help="write lossy JPEG instead of PNG (attacks the signal)")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="recover a URL from an image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("attack", help="apply the distortion chain standalone")
    p.add_argument("--image", required=True)
    p.add_argument("--severity", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    for op in _SEVERITY_OPS:
        p.add_argument(f"--severity-{op.replace('_', '-')}", type=float,
                       default=None, dest=f"severity_{op}",
                       help=f"override the {op} severity factor")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="robustness sweep along one distortion axis")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sweep", required=True, choices=evaluation.SWEEP_AXES)
    p.add_argument("--out", required=True)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None, help="max covers to use")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("jnd", help="emit the JND map of an image as grayscale PNG")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_jnd)
    return parser


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    covers = dataio.load_cover_set(args.data, cfg.image_size)
    state = None
    if args.resume:
        from .training import resume_train_state
        state = resume_train_state(args.resume)
    fit(cfg, covers, out_dir=args.out, state=state, quiet=not args.verbose)
    print(f"training finished; checkpoints and metrics in {args.out}")
    return EX_OK


def _require_url_capacity(cfg) -> None:
    if cfg.message_length != codec.CODEWORD_BITS:
        raise DataError(
            f"checkpoint carries {cfg.message_length} bits; URL coding needs "
            f"{codec.CODEWORD_BITS} (56 payload + 40 parity + 4 pad)")


def _cmd_encode(args) -> int:
    cfg, encoder, _, _ = dataio.restore_models(dataio.load_checkpoint(args.ckpt))
    _require_url_capacity(cfg)
    try:
        bits = codec.encode_text(args.url)
    except codec.PayloadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    cover = dataio.load_image(args.image, cfg.image_size)
    _, encoded = evaluation.encode_tensor(encoder, cover, bits)
    if args.jpeg_quality is not None:
        print("warning: JPEG output is lossy and attacks the hidden signal",
              file=sys.stderr)
        dataio.save_image_jpeg(encoded, args.out, args.jpeg_quality)
    else:
        dataio.save_image_png(encoded, args.out)
    print(f"encoded {args.url!r} into {args.out}")
    return EX_OK


def _cmd_decode(args) -> int:
    cfg, _, decoder, _ = dataio.restore_models(dataio.load_checkpoint(args.ckpt))
    _require_url_capacity(cfg)
    image = dataio.load_image(args.image, cfg.image_size)
    probs = evaluation.decode_tensor(decoder, image)
    hard = (probs > 0.5).to(torch.int64).tolist()
    confidence = (2.0 * (probs - 0.5).abs())
    url = codec.decode_text(hard)
    summary = {
        "url": url,
        "status": "OK" if url is not None else "DECODE_FAIL",
        "mean_confidence": round(float(confidence.mean()), 4),
        "min_confidence": round(float(confidence.min()), 4),
        "bits": "".join(str(b) for b in hard),
    }
    if args.json:
        print(json.dumps(summary))
    elif url is not None:
        print(url)
        print(f"confidence mean={summary['mean_confidence']} "
              f"min={summary['min_confidence']}")
    else:
        print("DECODE_FAIL")
        print(f"confidence mean={summary['mean_confidence']} "
              f"min={summary['min_confidence']}")
    return EX_OK if url is not None else EX_DECODE_FAIL


def _cmd_attack(args) -> int:
    if not 0.0 <= args.severity <= 1.0:
        print("error: --severity must be in [0,1]", file=sys.stderr)
        return EX_USAGE
    factors = {}
    for op in _SEVERITY_OPS:
        override = getattr(args, f"severity_{op}")
        factors[op] = args.severity if override is None else override
    try:
        severity = DistortionSeverity(**factors)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    image = dataio.load_image(args.image)
    rng = torch.Generator().manual_seed(args.seed)
    out = apply_distortion_chain(image, severity, rng)
    dataio.save_image_png(out, args.out)
    print(f"attacked image written to {args.out}")
    return EX_OK


def _cmd_eval(args) -> int:
    cfg, encoder, decoder, _ = dataio.restore_models(dataio.load_checkpoint(args.ckpt))
    covers = dataio.load_cover_set(args.data, cfg.image_size)
    if args.limit is not None:
        covers = covers[:args.limit]
    if args.levels < 2:
        print("error: --levels must be at least 2", file=sys.stderr)
        return EX_USAGE
    levels = [i / (args.levels - 1) for i in range(args.levels)]
    report = evaluation.sweep(encoder, decoder, covers, args.sweep,
                              levels=levels, seed=args.seed)
    report.write_csv(args.out)
    means = report.mean_by_level()
    print(f"sweep {args.sweep}: " + "  ".join(
        f"{lvl:.2f}:{acc:.3f}" for lvl, acc in means.items()))
    print(f"report written to {args.out}")
    return EX_OK


def _cmd_jnd(args) -> int:
    image = dataio.load_image(args.image)
    the_map = jnd_map(image)
    gray = (the_map[..., 0].clamp(0, 1).numpy() * 255.0).round().astype(np.uint8)
    Image.fromarray(gray, mode="L").save(args.out, format="PNG")
    print(f"JND map written to {args.out}")
    return EX_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EX_USAGE
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except (DataError, dataio.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATAERR


if __name__ == "__main__":
    sys.exit(main())

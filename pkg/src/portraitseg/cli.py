"""Command-line interface: every pipeline stage as a subcommand.

Exit codes: 0 success, 1 usage error, 2 runtime error. Diagnostics go to
stderr. Output files are written atomically (temp file, then rename), so
a failing invocation never leaves partial output behind.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .compositor import alpha_blend, build_kernel, gaussian_blur
from .data import generate_synthetic_dataset, load_dataset, save_dataset
from .ioutil import atomic_write_bytes
from .model import build_default_model, gradient_check, smooth_gradcheck_case
from .pipeline import PipelineConfig, run_portrait, segment
from .raster import decode_image, encode_image, matte_from_gray, matte_to_gray
from .training import TrainConfig, evaluate, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage().rstrip()}")


def _read_image(path):
    return decode_image(Path(path).read_bytes())


def _write_image(path, img):
    atomic_write_bytes(path, encode_image(img))


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        batch_size=args.batch,
        seed=args.seed,
    )
    model = build_default_model(seed=args.seed)
    model, history, state = train(model, dataset, config)
    for i, loss in enumerate(history):
        print(f"epoch {i + 1}/{len(history)} loss {loss:.6f}")
    save_checkpoint(model, state, args.out)
    print(f"saved checkpoint to {args.out} ({model.step_count} steps)")
    if args.report:
        from .report import write_training_report

        for path in write_training_report(args.report, history):
            print(f"wrote {path}")
    return 0


def _cmd_synth(args) -> int:
    samples = generate_synthetic_dataset(args.count, args.size, args.seed)
    save_dataset(samples, args.out)
    print(f"wrote {len(samples)} sample pairs to {args.out}")
    return 0


def _cmd_segment(args) -> int:
    model, _ = load_checkpoint(args.model)
    img = _read_image(args.input)
    matte = segment(model, img)
    _write_image(args.output, matte_to_gray(matte))
    return 0


def _cmd_blur(args) -> int:
    img = _read_image(args.input)
    _write_image(args.output, gaussian_blur(img, build_kernel(args.sigma)))
    return 0


def _cmd_blend(args) -> int:
    foreground = _read_image(args.fg)
    background = _read_image(args.bg)
    matte = matte_from_gray(_read_image(args.mask))
    _write_image(args.output, alpha_blend(foreground, background, matte))
    return 0


def _load_pipeline_config(args) -> PipelineConfig:
    # Precedence: explicit flags > config file > built-in defaults.
    values = {"blur_sigma": 8.0, "feather_radius": 3, "mask_threshold": 0.5, "model_path": None}
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {args.config} must hold a JSON object")
        unknown = set(loaded) - set(values)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    if args.model is not None:
        values["model_path"] = args.model
    if args.sigma is not None:
        values["blur_sigma"] = args.sigma
    if args.feather is not None:
        values["feather_radius"] = args.feather
    if args.threshold is not None:
        values["mask_threshold"] = args.threshold
    return PipelineConfig(**values)


def _cmd_portrait(args) -> int:
    config = _load_pipeline_config(args)
    if config.model_path is None and args.matte is None:
        raise _UsageError("portraitseg portrait: error: --model is required (unless --matte forces one)")
    img = _read_image(args.input)
    matte = matte_from_gray(_read_image(args.matte)) if args.matte else None
    model = None
    if matte is None:
        model, _ = load_checkpoint(config.model_path)
    _write_image(args.output, run_portrait(img, model, config, matte=matte))
    return 0


def _cmd_gradcheck(args) -> int:
    model, x, labels = smooth_gradcheck_case(seed=args.seed)
    report = gradient_check(model, x, labels, epsilon=1e-3, tolerance=1e-3)
    print(report.summary())
    return 0 if report.passed else 2


def _cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.model)
    dataset = load_dataset(args.data)
    metrics = evaluate(model, dataset)
    print(f"pixel_accuracy {metrics.pixel_accuracy:.6f}")
    print(f"mean_iou {metrics.mean_iou:.6f}")
    if args.report:
        from .report import write_evaluation_report

        for path in write_evaluation_report(args.report, metrics):
            print(f"wrote {path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="portraitseg", description="Portrait-mode rendering pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("train", help="train the segmentation network on a dataset directory")
    p.add_argument("--data", required=True, help="directory of <name>.ppm / <name>_mask.pgm pairs")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="directory for loss CSV and figure")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("segment", help="write the soft foreground matte of an image")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=_cmd_segment)

    p = sub.add_parser("blur", help="Gaussian-blur an image")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sigma", type=float, default=8.0)
    p.set_defaults(handler=_cmd_blur)

    p = sub.add_parser("blend", help="alpha-blend foreground over background with a mask")
    p.add_argument("--fg", required=True)
    p.add_argument("--bg", required=True)
    p.add_argument("--mask", required=True, help="PGM matte, 255 = foreground")
    p.add_argument("--output", required=True)
    p.set_defaults(handler=_cmd_blend)

    p = sub.add_parser("portrait", help="full pipeline: segment, blur background, blend")
    p.add_argument("--model")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--sigma", type=float, default=None, help="background blur sigma (default 8)")
    p.add_argument("--feather", type=int, default=None, help="matte feather radius (default 3)")
    p.add_argument("--threshold", type=float, default=None, help="matte threshold (default 0.5)")
    p.add_argument("--matte", help="PGM matte overriding segmentation")
    p.add_argument("--config", help="JSON config file (flags take precedence)")
    p.set_defaults(handler=_cmd_portrait)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check of the default architecture")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_gradcheck)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="directory for metrics CSV and figure")
    p.set_defaults(handler=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help exits 0
        return 0 if not exc.code else int(exc.code)

    if getattr(args, "handler", None) is None:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 1
    try:
        return args.handler(args)
    except _UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except Exception as err:
        print(f"portraitseg {args.command}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points.

Subcommands: ``train``, ``eval``, ``adjust``, ``synth``, ``serve``.  Options
resolve as flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .adjustmap import load_map, save_map
from .checkpoint import build_model, load_checkpoint
from .colorspace import lab_to_srgb, srgb_to_lab
from .config import TrainConfig, parse_config_file, train_config_from_kv
from .data import (
    SyntheticSpec,
    default_preset_transforms,
    generate_synthetic_benchmark,
    load_dataset,
    read_png,
    write_dataset,
    write_png,
)
from .evaluator import evaluate, variant_table
from .trainer import train

_VARIANTS = ("MSE", "Huber", "MSE+S", "Huber+S", "Huber+MT", "Huber+MT+S")


def _build_train_config(args: argparse.Namespace) -> TrainConfig:
    kv: dict[str, str] = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise SystemExit(f"config file not found: {path}")
        kv.update(parse_config_file(path.read_text()))
    for key in ("variant", "epochs", "seed", "k", "learning_rate", "batch_size", "rank", "profile", "canvas", "pixels_per_image", "validate_every"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            kv[key] = str(value)
    try:
        return train_config_from_kv(kv)
    except (KeyError, ValueError) as exc:
        raise SystemExit(f"bad configuration: {exc}") from exc


def _load_dataset_or_exit(root: str):
    path = Path(root)
    if not path.exists():
        raise SystemExit(f"dataset directory not found: {path}")
    try:
        return load_dataset(path)
    except (FileNotFoundError, ValueError) as exc:
        raise SystemExit(f"cannot load dataset {path}: {exc}") from exc


def _cmd_train(args: argparse.Namespace) -> int:
    config = _build_train_config(args)
    dataset = _load_dataset_or_exit(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = train(config, dataset, out_dir=out_dir)
    print(f"trained variant {config.variant}: best checkpoint at {out_dir / 'model.ckpt'} (step {ckpt.step})")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    dataset = _load_dataset_or_exit(args.data)
    reports = []
    for spec in args.checkpoint:
        path = Path(spec)
        if not path.exists():
            raise SystemExit(f"checkpoint not found: {path}")
        reports.append(evaluate(load_checkpoint(path), dataset))
    text, csv_text = variant_table(reports)
    print(text)
    if args.csv is not None:
        Path(args.csv).write_text(csv_text)
        print(f"wrote {args.csv}")
    if args.json is not None:
        payload = [dataclasses.asdict(r) for r in reports]
        Path(args.json).write_text(json.dumps(payload, indent=2))
        print(f"wrote {args.json}")
    return 0


def _cmd_adjust(args: argparse.Namespace) -> int:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise SystemExit(f"checkpoint not found: {ckpt_path}")
    image_path = Path(args.image)
    if not image_path.exists():
        raise SystemExit(f"image not found: {image_path}")
    model = build_model(load_checkpoint(ckpt_path))
    lab = srgb_to_lab(read_png(image_path))

    if args.map is not None:
        map_path = Path(args.map)
        if not map_path.exists():
            raise SystemExit(f"map not found: {map_path}")
        assignments = load_map(map_path)
        if assignments.shape != lab.shape[:2]:
            raise SystemExit(
                f"map shape {assignments.shape} does not match image shape {lab.shape[:2]}"
            )
        adjusted = model.adjust_image_with_map(lab, assignments)
    else:
        result = model.adjust_image(lab, mode=args.mode)
        adjusted = result.adjusted
        assignments = result.assignments

    write_png(Path(args.out), lab_to_srgb(adjusted))
    print(f"wrote {args.out}")
    if args.save_map is not None:
        if assignments is None:
            raise SystemExit("this model has no adjustment map to save (convolutional context)")
        save_map(Path(args.save_map), assignments, model.k)
        print(f"wrote {args.save_map}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        k=args.k,
        preset_transforms=default_preset_transforms(args.k),
        height=args.size,
        width=args.size,
        noise_sigma=args.noise_sigma,
        corruption_fraction=args.corruption,
    )
    examples = generate_synthetic_benchmark(spec, args.count, seed=args.seed)
    out = Path(args.out)
    write_dataset(out, examples)
    print(f"wrote {args.count} synthetic examples (k={args.k}) to {out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    path = Path(args.checkpoint)
    if not path.exists():
        raise SystemExit(f"checkpoint not found: {path}")
    serve(str(path), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="photoadjust", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an adjustment model")
    p_train.add_argument("--data", required=True, help="dataset root (input/, target/, parse/)")
    p_train.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p_train.add_argument("--config", help="key = value config file")
    p_train.add_argument("--variant", choices=_VARIANTS)
    p_train.add_argument("--profile", choices=("toy", "full"))
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--k", type=int)
    p_train.add_argument("--learning-rate", type=float, dest="learning_rate")
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--rank", type=int)
    p_train.add_argument("--canvas", type=int)
    p_train.add_argument("--pixels-per-image", type=int, dest="pixels_per_image")
    p_train.add_argument("--validate-every", type=int, dest="validate_every")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate checkpoints, print a variant table")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--csv", help="also write the table as CSV")
    p_eval.add_argument("--json", help="also write full reports as JSON")
    p_eval.add_argument("checkpoint", nargs="+")
    p_eval.set_defaults(func=_cmd_eval)

    p_adjust = sub.add_parser("adjust", help="adjust a single image")
    p_adjust.add_argument("--checkpoint", required=True)
    p_adjust.add_argument("--image", required=True)
    p_adjust.add_argument("--out", required=True)
    p_adjust.add_argument("--mode", choices=("hard", "soft"), default="hard")
    p_adjust.add_argument("--map", help="substitute this adjustment map (.png or .json)")
    p_adjust.add_argument("--save-map", help="write the extracted map here (.png or .json)")
    p_adjust.set_defaults(func=_cmd_adjust)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--count", type=int, default=50)
    p_synth.add_argument("--k", type=int, default=2)
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--noise-sigma", type=float, default=0.5, dest="noise_sigma")
    p_synth.add_argument("--corruption", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=_cmd_synth)

    p_serve = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p_serve.add_argument("--checkpoint", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

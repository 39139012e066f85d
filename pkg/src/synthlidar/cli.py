"""Command-line entry point: generate / process / evaluate / stats."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import pipeline
from .presets import DEFAULT_PRESET, PRESET_NAMES, UnknownPresetError
from .scene import RandomizationConfig


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default=DEFAULT_PRESET,
                   help=f"builtin preset name ({', '.join(PRESET_NAMES)}) "
                        "or a path to a preset YAML file")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthlidar",
        description="Synthetic LiDAR dataset generation and evaluation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate dense intermediate frames")
    g.add_argument("--out", required=True, help="output dataset root")
    g.add_argument("--frames", type=int, required=True, help="number of frames")
    g.add_argument("--train-ratio", type=float, default=0.5)
    g.add_argument("--config", help="scene randomization config YAML")
    _add_common(g)

    p = sub.add_parser("process", help="process dense frames into a KITTI dataset")
    p.add_argument("--dense", required=True, help="root containing dense/ frames")
    p.add_argument("--out", required=True, help="output dataset root")
    _add_common(p)

    e = sub.add_parser("evaluate", help="evaluate detections against ground truth")
    e.add_argument("--gt", required=True, help="ground-truth label directory")
    e.add_argument("--det", required=True, help="detection label directory")
    e.add_argument("--out", help="write report.txt / report.csv here")

    s = sub.add_parser("stats", help="dataset statistics: CSV tables and plots")
    s.add_argument("--root", required=True, help="KITTI dataset root")
    s.add_argument("--out", required=True, help="output directory for stats files")

    return parser


def _load_scene_config(path: str | None) -> RandomizationConfig:
    if path is None:
        return RandomizationConfig()
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    return RandomizationConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            pipeline.cmd_generate(
                Path(args.out), args.preset, args.frames, args.seed,
                train_ratio=args.train_ratio, workers=args.workers,
                scene_config=_load_scene_config(args.config))
        elif args.command == "process":
            pipeline.cmd_process(Path(args.dense), Path(args.out), args.preset,
                                 args.seed, workers=args.workers)
        elif args.command == "evaluate":
            report = pipeline.cmd_evaluate(Path(args.gt), Path(args.det), args.out)
            print(report.to_text())
        elif args.command == "stats":
            summary = pipeline.cmd_stats(Path(args.root), Path(args.out))
            print(f"labels: {sum(summary['counts'].values())}  "
                  f"intensity mean: {summary['intensity_mean']:.4f}  "
                  f"zero fraction: {summary['intensity_zero_fraction']:.4f}")
    except UnknownPresetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

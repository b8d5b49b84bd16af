"""
Command-line interface.

    techzsky synth --count 50 --size 256 --seed 7 --split 25 --out data
    techzsky train data/train --bank bank.rdgl
    techzsky detect data/test --bank bank.rdgl --out pred --overlay
    techzsky baseline data/test --method gradient --out pred_gradient
    techzsky eval pred data/test --out report.json
    techzsky sweep data/train data/test --sides 7,9,11

Exit codes: 0 success, 2 usage error, 3 data error (bad or unreadable input),
4 internal error.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from techzsky import BASELINE_METHODS, DetectionResult, TechZSky
from techzsky.config import PipelineConfig
from techzsky.errors import ConfigError, DataError, TechZSkyError
from techzsky.evaluate import EvalReport
from techzsky.logger import Logger, set_library_level

logger = Logger("cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = DataError.exit_code
EXIT_INTERNAL = TechZSkyError.exit_code


def parse_assignments(items: Sequence[str]) -> Dict[str, str]:
    """Turn repeated `--set key=value` flags into an override mapping."""
    overrides: Dict[str, str] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def parse_sides(text: str) -> List[int]:
    try:
        sides = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not sides:
        raise argparse.ArgumentTypeError("at least one filter side is required")
    return sides


def load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides: Dict[str, object] = parse_assignments(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    return config.with_overrides(overrides) if overrides else config


def format_sweep(reports: Dict[int, EvalReport]) -> str:
    lines = [f"{'side':>6} {'mu':>10} {'sigma':>10} {'min':>10} {'max':>10}"]
    for side, report in reports.items():
        lines.append(
            f"{f'{side}x{side}':>6} {report.mean:>10.4f} {report.std:>10.4f} {report.min:>10.4f} {report.max:>10.4f}"
        )
    spread = max(r.mean for r in reports.values()) - min(r.mean for r in reports.values())
    lines.append(f"spread of mu across sizes: {spread:.4f} px")
    return "\n".join(lines)


def format_detection(name: str, result: DetectionResult) -> str:
    stages = "  ".join(f"{stage}={ms:.1f}ms" for stage, ms in result.timings.items())
    dummies = sum(result.path.dummy)
    return f"{name}: cost={result.total_cost:.4f} dummies={dummies} {stages} wall={result.wall_ms:.1f}ms"


def _sky(args: argparse.Namespace, config: PipelineConfig) -> TechZSky:
    return TechZSky(config, debug=not args.quiet, progress=not args.quiet)


async def run_train(args: argparse.Namespace, config: PipelineConfig) -> int:
    summary = await _sky(args, config).train(args.dataset, out_bank=args.bank)
    print(summary.format())
    return EXIT_OK


async def _run_images(args: argparse.Namespace, config: PipelineConfig, method: Optional[str]) -> int:
    sky = _sky(args, config)
    target = Path(args.images)
    if target.is_dir():
        if method is None:
            results = await sky.detect_dir(target, args.bank, args.out, overlays=bool(args.overlay))
        else:
            results = await sky.baseline_dir(method, target, args.out, overlays=bool(args.overlay))
        for name, result in results.items():
            print(format_detection(name, result))
        return EXIT_OK

    overlay = args.overlay if isinstance(args.overlay, str) else None
    if args.overlay is True:
        base = Path(args.out) if args.out else target
        overlay = base.with_name(f"{base.stem}_overlay.png")
    if method is None:
        result = await sky.detect(target, args.bank, out_csv=args.out, overlay=overlay)
    else:
        result = await sky.baseline(method, target, out_csv=args.out, overlay=overlay)
    print(format_detection(target.stem, result))
    return EXIT_OK


async def run_detect(args: argparse.Namespace, config: PipelineConfig) -> int:
    return await _run_images(args, config, None)


async def run_baseline(args: argparse.Namespace, config: PipelineConfig) -> int:
    return await _run_images(args, config, args.method)


async def run_eval(args: argparse.Namespace, config: PipelineConfig) -> int:
    report = await _sky(args, config).evaluate(args.pred_dir, args.gt_dir, out_json=args.out)
    print(report.format_table())
    return EXIT_OK


async def run_synth(args: argparse.Namespace, config: PipelineConfig) -> int:
    seed = config.seed if args.seed is None else args.seed
    summary = await _sky(args, config).synth(args.count, args.size, seed, args.out, split=args.split)
    print(f"{summary.count} images written to {summary.out_dir}")
    return EXIT_OK


async def run_sweep(args: argparse.Namespace, config: PipelineConfig) -> int:
    reports = await _sky(args, config).sweep(args.train_dir, args.test_dir, sides=args.sides)
    print(format_sweep(reports))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'section.key = value' config file")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="override one config value (repeatable)"
    )
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--workers", type=int, help="number of images processed concurrently")
    common.add_argument("-q", "--quiet", action="store_true", help="no info logs and no progress bar")

    parser = argparse.ArgumentParser(
        prog="techzsky",
        description="Mountain skyline detection with learned filter banks and dynamic programming.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("\n\n")[1],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", parents=[common], help="learn a filter bank")
    train.add_argument("dataset", help="directory of images with <stem>.csv ground truth")
    train.add_argument("--bank", required=True, help="output bank file")
    train.set_defaults(handler=run_train)

    detect = commands.add_parser("detect", parents=[common], help="detect skylines with a filter bank")
    detect.add_argument("images", help="image file or directory of images")
    detect.add_argument("--bank", required=True, help="filter bank file")
    detect.add_argument("--out", help="output CSV (file input) or directory (directory input)")
    detect.add_argument(
        "--overlay", nargs="?", const=True, default=None, help="write overlay PNG(s), optionally to this path"
    )
    detect.set_defaults(handler=run_detect)

    baseline = commands.add_parser("baseline", parents=[common], help="detect skylines with a baseline cost")
    baseline.add_argument("images", help="image file or directory of images")
    baseline.add_argument("--method", required=True, choices=BASELINE_METHODS)
    baseline.add_argument("--out", help="output CSV (file input) or directory (directory input)")
    baseline.add_argument("--overlay", nargs="?", const=True, default=None)
    baseline.set_defaults(handler=run_baseline)

    evaluate = commands.add_parser("eval", parents=[common], help="score predictions against ground truth")
    evaluate.add_argument("pred_dir")
    evaluate.add_argument("gt_dir")
    evaluate.add_argument("--out", help="write the report as JSON")
    evaluate.set_defaults(handler=run_eval)

    synth = commands.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    synth.add_argument("--count", type=int, required=True)
    synth.add_argument("--size", type=int, default=256)
    synth.add_argument("--split", type=int, help="first SPLIT images go to train/, the rest to test/")
    synth.add_argument("--out", required=True, help="output directory")
    synth.set_defaults(handler=run_synth)

    sweep = commands.add_parser("sweep", parents=[common], help="compare filter sizes on one split")
    sweep.add_argument("train_dir")
    sweep.add_argument("test_dir")
    sweep.add_argument("--sides", type=parse_sides, default=[7, 9, 11], help="comma-separated filter sides")
    sweep.set_defaults(handler=run_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if args.quiet:
        set_library_level(logging.WARNING)
    try:
        config = load_config(args)
        return asyncio.run(args.handler(args, config))
    except (DataError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_DATA
    except Exception as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_INTERNAL
    finally:
        set_library_level(logging.DEBUG)


if __name__ == "__main__":
    sys.exit(main())

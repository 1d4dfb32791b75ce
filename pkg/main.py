# facefuse command line
# Purpose: one entry point per pipeline step; failures become a single "error: <Class>: <message>" line

import argparse
import sys
from pathlib import Path
from typing import Optional

import torch
import yaml
from pydantic import ValidationError

from config.settings import configure_logging, get_logger, settings, validate_environment
from config.train_config import TrainConfig, dump_config, load_config, merge_dicts, parse_overrides
from degrade.manifest import degrade_dir
from degrade.pipeline import DegradationRanges
from utils.errors import ConfigError, FaceFuseError
from utils.file_manager import ensure_dir

logger = get_logger("facefuse")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _resolve(args: argparse.Namespace, path: Optional[str]) -> Optional[Path]:
    """Relative output paths land under --out-dir when one is given"""
    if path is None:
        return None
    path = Path(path)
    if path.is_absolute() or args.out_dir is None:
        return path
    return Path(args.out_dir) / path


def _run_dir(args: argparse.Namespace) -> Path:
    return ensure_dir(args.out_dir or settings.out_dir)


def _read_yaml(path: Optional[str]) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    return data


def _train_config(args: argparse.Namespace, stage: str) -> TrainConfig:
    return load_config(
        args.config,
        args.set,
        stage=stage,
        seed=args.seed,
        iterations=getattr(args, "iterations", None),
        batch_size=getattr(args, "batch_size", None),
        learning_rate=getattr(args, "lr", None),
    )


# Commands

def cmd_degrade(args: argparse.Namespace) -> int:
    data = merge_dicts(_read_yaml(args.config), parse_overrides(args.set or []))
    try:
        ranges = DegradationRanges.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid degradation ranges: {e}") from e
    records = degrade_dir(args.input, _resolve(args, args.output), args.seed or 0, ranges)
    print(f"degraded {len(records)} images")
    return EXIT_OK


def cmd_synth_pairs(args: argparse.Namespace) -> int:
    from train.priors import SyntheticPairProvider, save_prior_pairs
    from utils.file_manager import list_images

    config = _train_config(args, "dam")
    synth = dict(
        warp_magnitude=config.warp_magnitude,
        texture_strength=config.texture_strength,
        identity_blur_sigma=config.identity_blur_sigma,
    )
    if args.input is not None:
        provider = SyntheticPairProvider.from_directory(args.input, seed=config.seed, **synth)
        names = [f"{p.stem}.png" for p in list_images(args.input)]
    elif args.procedural:
        size = args.size or config.image_size
        provider = SyntheticPairProvider.procedural(args.procedural, size, seed=config.seed, **synth)
        names = None
    else:
        raise ConfigError("synth-pairs needs --in or --procedural")
    written = save_prior_pairs(provider, _resolve(args, args.output), names)
    print(f"wrote {len(written)} prior pairs")
    return EXIT_OK


def cmd_train_dam(args: argparse.Namespace) -> int:
    from train.priors import DirectoryPairProvider
    from train.stage1 import train_stage1

    config = _train_config(args, "dam")
    run_dir = _run_dir(args)
    dump_config(config, run_dir / "dam_config.yaml")
    ckpt = train_stage1(config, DirectoryPairProvider(args.pairs), run_dir)
    final = ckpt.history[-1] if ckpt.history else {}
    print(f"dam checkpoint: {ckpt.path} {final}")
    return EXIT_OK


def cmd_train_tgrn(args: argparse.Namespace) -> int:
    from train.checkpoint import load_dam
    from train.priors import DirectoryPairProvider
    from train.stage2 import train_stage2

    config = _train_config(args, "tgrn")
    if args.variant is not None:
        config = config.with_variant(args.variant)
    run_dir = _run_dir(args)
    dump_config(config, run_dir / "tgrn_config.yaml")
    ckpt = train_stage2(config, load_dam(args.dam), DirectoryPairProvider(args.pairs), run_dir)
    final = ckpt.history[-1] if ckpt.history else {}
    print(f"tgrn checkpoint: {ckpt.path} {final}")
    return EXIT_OK


def _run_graph(state: dict) -> dict:
    from graph.builder import build_graph

    return build_graph().invoke(state)


def cmd_restore(args: argparse.Namespace) -> int:
    result = _run_graph({
        "i_f_path": args.i_f,
        "i_g_path": args.i_g,
        "dam_path": args.dam,
        "tgrn_path": args.tgrn,
        "out_path": str(_resolve(args, args.output)),
        "out_field_path": str(_resolve(args, args.out_field)) if args.out_field else None,
        "out_warp_path": str(_resolve(args, args.out_warp)) if args.out_warp else None,
    })
    for path in result.get("written", []):
        print(path)
    return EXIT_OK


def cmd_align(args: argparse.Namespace) -> int:
    if not args.out_field and not args.out_warp:
        raise ConfigError("align needs --out-field and/or --out-warp")
    result = _run_graph({
        "i_f_path": args.i_f,
        "i_g_path": args.i_g,
        "dam_path": args.dam,
        "tgrn_path": None,
        "out_field_path": str(_resolve(args, args.out_field)) if args.out_field else None,
        "out_warp_path": str(_resolve(args, args.out_warp)) if args.out_warp else None,
    })
    for path in result.get("written", []):
        print(path)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    from evalkit.report import evaluate_dir, format_table, write_report

    options = merge_dicts(_read_yaml(args.config), parse_overrides(args.set or []))
    options.update({"ref": str(args.ref), "test": str(args.test), "landmarks": args.landmarks})
    report = evaluate_dir(args.ref, args.test, args.landmarks)
    write_report(report, args.out_dir or ".", options)
    sys.stdout.write(format_table(report))
    return EXIT_OK


HANDLERS = {
    "degrade": cmd_degrade,
    "synth-pairs": cmd_synth_pairs,
    "train-dam": cmd_train_dam,
    "train-tgrn": cmd_train_tgrn,
    "restore": cmd_restore,
    "align": cmd_align,
    "evaluate": cmd_evaluate,
}


# Parser

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Random seed (config value when omitted)")
    parser.add_argument("--config", default=None, help="YAML config file")
    parser.add_argument("--out-dir", default=None, help="Directory for outputs; relative output paths resolve under it")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override a config key (repeatable)")


def _training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iterations", type=int, default=None, help="Optimizer steps")
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None, help="Adam learning rate")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="facefuse", description="Identity-preserving face restoration with aligned texture priors", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("degrade", help="Synthesize LQ images from a directory of HQ images", formatter_class=fmt)
    p.add_argument("--in", dest="input", required=True, help="Directory of HQ PNG/JPEG images")
    p.add_argument("--out", dest="output", required=True, help="Output directory for LQ images and manifests")
    _common(p)

    p = sub.add_parser("synth-pairs", help="Write synthetic (I_F, I_G, I_HQ) training pairs", formatter_class=fmt)
    p.add_argument("--in", dest="input", default=None, help="Directory of HQ images")
    p.add_argument("--procedural", type=int, default=0, help="Generate this many procedural faces instead of --in")
    p.add_argument("--size", type=int, default=None, help="Procedural image side (config image_size when omitted)")
    p.add_argument("--out", dest="output", required=True, help="Pair root directory")
    _common(p)

    p = sub.add_parser("train-dam", help="Stage 1: train the deformable alignment module", formatter_class=fmt)
    p.add_argument("--pairs", required=True, help="Pair root with i_f/, i_g/, hq/")
    _training(p)
    _common(p)

    p = sub.add_parser("train-tgrn", help="Stage 2: train the restoration network with a frozen DAM", formatter_class=fmt)
    p.add_argument("--pairs", required=True, help="Pair root with i_f/, i_g/, hq/ and masks/ or landmarks/")
    p.add_argument("--dam", required=True, help="Stage-1 checkpoint")
    p.add_argument("--variant", choices=["B", "C", "D"], default=None, help="Ablation variant (config value when omitted)")
    _training(p)
    _common(p)

    p = sub.add_parser("restore", help="Align I_G to I_F and fuse them", formatter_class=fmt)
    p.add_argument("--i-f", required=True, help="Identity-preserving image")
    p.add_argument("--i-g", required=True, help="Texture prior image")
    p.add_argument("--dam", required=True, help="Stage-1 checkpoint")
    p.add_argument("--tgrn", required=True, help="Stage-2 checkpoint")
    p.add_argument("--out", dest="output", required=True, help="Restored PNG")
    p.add_argument("--out-field", default=None, help="Also write the alignment field (DFLD)")
    p.add_argument("--out-warp", default=None, help="Also write the warped prior")
    _common(p)

    p = sub.add_parser("align", help="Align an external prior image to I_F", formatter_class=fmt)
    p.add_argument("--i-f", required=True, help="Identity-preserving image")
    p.add_argument("--i-g", required=True, help="Prior image to align")
    p.add_argument("--dam", required=True, help="Stage-1 checkpoint")
    p.add_argument("--out-field", default=None, help="Field output (DFLD)")
    p.add_argument("--out-warp", default=None, help="Warped prior output (PNG)")
    _common(p)

    p = sub.add_parser("evaluate", help="PSNR / SSIM / LMD of a test directory against references", formatter_class=fmt)
    p.add_argument("--ref", required=True, help="Reference image directory")
    p.add_argument("--test", required=True, help="Test image directory (matched by filename)")
    p.add_argument("--landmarks", default=None, help="Directory with ref/<stem>.txt and test/<stem>.txt")
    _common(p)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    ok, issues = validate_environment()
    if not ok:
        for issue in issues:
            logger.warning(issue)
    settings.apply()
    if args.seed is not None:
        torch.manual_seed(args.seed)

    try:
        return HANDLERS[args.command](args)
    except FaceFuseError as e:
        print(f"error: {type(e).__name__}: {e}".replace("\n", " "), file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}".replace("\n", " "), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

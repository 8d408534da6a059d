"""``srtransgan`` command-line entry point.

Subcommands: ``train``, ``infer``, ``eval``, ``saliency``. Human-readable
tables go to stdout; tab-separated reports, images and figures go to files.
Exit status is 0 only when every requested output was written; usage errors
exit with 2 and all other failures with 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, DecodeError, NonFiniteLossError, SRTransGANError, UsageError
from .evaluation import evaluate, model_upscaler
from .generator import super_resolve
from .io.checkpoint import load_checkpoint
from .io.dataset import load_dataset
from .io.images import load_image, save_image, save_pgm16
from .training.trainer import Trainer, load_generator, read_log, train_loop

log = logging.getLogger("srtransgan")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="srtransgan", description="Transformer GAN super-resolution.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train generator and discriminator")
    p.add_argument("--dataset", type=Path, help="dataset directory (overrides data.dataset)")
    p.add_argument("--steps", type=int, help="total training steps (overrides train.steps)")
    p.add_argument("--scale", type=int, choices=(2, 4), help="upscaling factor")
    p.add_argument("--ckpt", type=Path, help="resume from this checkpoint")

    p = sub.add_parser("infer", parents=[common], help="super-resolve one image")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--scale", type=int, default=2, choices=(2, 4))
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM against bicubic on a dataset")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--dataset", type=Path)
    p.add_argument("--scale", type=int, default=2, choices=(2, 4))
    p.add_argument("--channel-mode", choices=("rgb", "luma"), default="rgb")

    p = sub.add_parser("saliency", parents=[common], help="input-gradient activation map")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("lr", type=Path, help="low-resolution input image")
    p.add_argument("hr", type=Path, help="ground-truth image, exactly 2x the LR extents")
    p.add_argument("output", type=Path, help="colour map image (.png or .ppm)")
    return parser


def _run_config(args, **extra) -> RunConfig:
    overrides = {"seed": args.seed, "out": None if args.out is None else str(args.out), **extra}
    return load_config(args.config, overrides)


def _with_checkpoint_nets(run: RunConfig, ckpt) -> RunConfig:
    """Network configs always come from the checkpoint being used."""
    from .discriminator import DiscriminatorConfig
    from .generator import GeneratorConfig

    run.generator = GeneratorConfig(**ckpt.meta["generator"])
    run.discriminator = DiscriminatorConfig(**ckpt.meta["discriminator"])
    return run


def cmd_train(args) -> int:
    run = _run_config(args, steps=args.steps, scale=args.scale,
                      dataset=None if args.dataset is None else str(args.dataset))
    if run.dataset is None:
        raise UsageError("train needs a dataset (--dataset or data.dataset in the config)")
    out = Path(run.out)
    manifest = load_dataset(run.dataset, run.train.scale, run.layout)
    for name, reason in manifest.rejected:
        log.warning("skipping %s: %s", name, reason)
    pairs = manifest.load_pairs()
    if not pairs:
        raise SRTransGANError(f"dataset {run.dataset} contains no usable images")
    if args.ckpt is not None:
        ckpt = load_checkpoint(args.ckpt)
        run = _with_checkpoint_nets(run, ckpt)
        trainer = Trainer.from_checkpoint(ckpt, run.train)
    else:
        trainer = Trainer(run.generator, run.discriminator, run.train)
    run.write(out / "config.yaml")
    final = train_loop(pairs, trainer, out)
    records = read_log(out / "train_log.tsv")
    from .plotting import plot_training_curves

    plot_training_curves(records, out / "training_curves.png")
    print(f"step\t{trainer.step}\ncheckpoint\t{final}")
    if records:
        last = records[-1]
        print(f"g_rec_loss\t{last.g_rec_loss:.6g}\nd_loss\t{last.d_loss:.6g}")
    return EXIT_OK


def cmd_infer(args) -> int:
    run = _run_config(args, scale=args.scale)
    ckpt = load_checkpoint(args.ckpt)
    run = _with_checkpoint_nets(run, ckpt)
    gen = load_generator(ckpt)
    lr = load_image(args.input)
    sr = super_resolve(gen, lr, args.scale)
    save_image(sr, args.output)
    out = args.out or args.output.parent
    run.out = str(out)
    run.write(Path(out) / f"{args.output.stem}.config.yaml")
    print(f"{args.input}\t{lr.shape[2]}x{lr.shape[1]}\t->\t{args.output}\t{sr.shape[2]}x{sr.shape[1]}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = _run_config(args, scale=args.scale, dataset=None if args.dataset is None else str(args.dataset))
    if run.dataset is None:
        raise UsageError("eval needs --dataset")
    ckpt = load_checkpoint(args.ckpt)
    run = _with_checkpoint_nets(run, ckpt)
    manifest = load_dataset(run.dataset, args.scale, run.layout)
    for name, reason in manifest.rejected:
        log.warning("skipping %s: %s", name, reason)
    pairs = manifest.load_pairs()
    if not pairs:
        raise SRTransGANError(f"dataset {run.dataset} contains no usable images")
    report = evaluate(pairs, model_upscaler(load_generator(ckpt), args.scale), args.channel_mode)
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    text = report.to_tsv()
    report.write(out / "eval_report.tsv")
    from .plotting import plot_eval_report

    plot_eval_report(report, out / "eval_report.png")
    run.write(out / "config.yaml")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_saliency(args) -> int:
    run = _run_config(args)
    ckpt = load_checkpoint(args.ckpt)
    run = _with_checkpoint_nets(run, ckpt)
    lr, hr = load_image(args.lr), load_image(args.hr)
    if hr.shape[1:] != (2 * lr.shape[1], 2 * lr.shape[2]):
        raise UsageError(f"HR extents {hr.shape[1:]} must be exactly 2x LR extents {lr.shape[1:]}")
    from .plotting import plot_saliency_panel
    from .saliency import saliency_map

    sal = saliency_map(load_generator(ckpt), lr, hr)
    output = args.output
    save_image(sal.colored.transpose(2, 0, 1).astype(np.float64) / 255.0, output)
    raw_path = output.with_name(f"{output.stem}_raw.pgm")
    save_pgm16(sal.values, raw_path)
    plot_saliency_panel(lr, sal, output.with_name(f"{output.stem}_panel.png"))
    out = args.out or output.parent
    run.out = str(out)
    run.write(Path(out) / f"{output.stem}.config.yaml")
    v = sal.values
    print(f"map\t{output}\nraw\t{raw_path}\nmin\t{v.min():.6g}\nmax\t{v.max():.6g}\nmean\t{v.mean():.6g}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "infer": cmd_infer, "eval": cmd_eval, "saliency": cmd_saliency}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"srtransgan {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as exc:
        print(f"srtransgan {args.command}: training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, DecodeError, SRTransGANError, OSError, ValueError) as exc:
        print(f"srtransgan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""
cli.py - Command line entry point

    python -m vanishing_depth freqs --channels 32 --max-depth 15
    python -m vanishing_depth encode --depth d.png --out enc.npy --dump-channels chans/
    python -m vanishing_depth decode --enc enc.npy --max-depth-used 15 --out d2.png
    python -m vanishing_depth mask --kind perlin --cells 4 --target 0.5 --out m.png
    python -m vanishing_depth augment --depth d.png --out r.png --record r.jsonl
    python -m vanishing_depth synth --count 8 --seed 7 --out data/synth
    python -m vanishing_depth train --config configs/desk.txt
    python -m vanishing_depth eval --checkpoint runs/run_seed0/model.vdck --scale-sweep

Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np
from tqdm import tqdm

from vanishing_depth.config import NO_PROGRESS, OUT_DIR, TrainConfig, load_config
from vanishing_depth.lib.checkpoint import load_checkpoint
from vanishing_depth.lib.depth import (
    load_depth_png, read_intrinsics, save_depth_png, save_rgb_png, write_intrinsics,
)
from vanishing_depth.lib.errors import TrainingDivergence, VanishingDepthError
from vanishing_depth.lib.masks import MASK_KINDS, MaskSpec, make_mask, save_mask_png
from vanishing_depth.lib.pde import ENCODINGS, PdeConfig, dump_channels, encode_input, frequency_table, pde_decode
from vanishing_depth.lib.randomize import RandomizeConfig, randomize_depth
from vanishing_depth.scenes import random_scene, render_scene


# --- Subcommands ---

def cmd_freqs(args):
    cfg = PdeConfig(channels=args.channels, temperature=args.temperature, max_depth=args.max_depth)
    scale = 1000.0 if args.unit == "mm" else 1.0
    for i, wavelength in enumerate(frequency_table(cfg, args.max_depth * scale)):
        print(f"{i},{wavelength:.4f}")


def cmd_encode(args):
    depth = load_depth_png(args.depth)
    cfg = PdeConfig(
        channels=args.channels,
        temperature=args.temperature,
        max_d_mode="per_sample" if args.per_sample else "global",
        max_depth=args.max_depth,
    )
    intrinsics = read_intrinsics(args.intrinsics) if args.intrinsics else None
    encoded = encode_input(depth, args.encoding, cfg, intrinsics)
    np.save(args.out, encoded.tensor)
    print(f"encoded {args.depth} -> {args.out} {encoded.tensor.shape}, max_d used: {', '.join(f'{m:g}' for m in encoded.max_d)}")
    if args.dump_channels:
        paths = dump_channels(encoded.tensor, args.dump_channels, prefix=args.encoding)
        print(f"wrote {len(paths)} channel images to {args.dump_channels}")


def cmd_decode(args):
    enc = np.load(args.enc)
    cfg = PdeConfig(channels=args.channels, temperature=args.temperature)
    depth = np.clip(pde_decode(enc, cfg, args.max_depth_used), 0.0, None)
    save_depth_png(depth, args.out)
    print(f"decoded {args.enc} -> {args.out}")


def cmd_mask(args):
    spec = MaskSpec(kind=args.kind, target_removal=args.target, cells=args.cells, scale_divisor=args.scale_divisor)
    valid = None
    height, width = args.height, args.width
    if args.valid:
        depth = load_depth_png(args.valid)
        valid = depth > 0
        height, width = depth.shape
    mask = make_mask(spec, args.seed, height, width, valid)
    save_mask_png(mask, args.out)
    print(f"mask {args.out}: {mask.sum()} of {mask.size} pixels removed ({mask.mean():.1%})")


def cmd_augment(args):
    depth = load_depth_png(args.depth)
    out, record = randomize_depth(depth, RandomizeConfig(max_d=args.max_depth), args.seed)
    save_depth_png(out, args.out)
    if args.record:
        with open(args.record, "a", encoding="utf-8") as f:
            f.write(record.to_json() + "\n")
    print(f"augmented {args.depth} -> {args.out} ({record.mode}{', fallback' if record.fallback else ''})")


def cmd_synth(args):
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"Rendering {args.count} scenes...")
    for i in tqdm(range(args.count), disable=NO_PROGRESS):
        spec = random_scene(args.seed * 100003 + i, args.height, args.width)
        rgb, depth = render_scene(spec)
        save_rgb_png(rgb, out_dir / f"rgb_{i:04d}.png")
        save_depth_png(depth, out_dir / f"depth_{i:04d}.png")
        write_intrinsics(spec.intrinsics, out_dir / f"intrinsics_{i:04d}.txt")
    print(f"wrote {args.count} scenes to {out_dir}")


def _train_config(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    overrides = {k: getattr(args, k) for k in ("steps", "encoding", "seed") if getattr(args, k) is not None}
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_train(args):
    from vanishing_depth.pipeline import train

    cfg = _train_config(args)
    out_dir = Path(args.out) if args.out else OUT_DIR / f"run_seed{cfg.seed}"
    try:
        train(cfg, out_dir, progress=not args.no_progress and not NO_PROGRESS)
    except TrainingDivergence:
        print(f"diagnostics written to {out_dir / 'divergence.json'}", file=sys.stderr)
        raise


def cmd_eval(args):
    from vanishing_depth.evaluate import append_metrics, depth_scale_sweep, evaluate, make_eval_set

    checkpoint = Path(args.checkpoint)
    if args.config:
        cfg = load_config(args.config)
    elif (checkpoint.parent / "config.txt").is_file():
        cfg = load_config(checkpoint.parent / "config.txt")
    else:
        cfg = TrainConfig()
    model, _, meta = load_checkpoint(checkpoint)
    eval_set = make_eval_set(cfg)
    print(f"Evaluating {checkpoint} on {len(eval_set)} scenes...")

    row = evaluate(model, eval_set, cfg, step=int(meta.get("step", 0)))
    print(f"rmse: {row.rmse_mm:.1f} mm")
    print(f"auc-rmse (1:5:96%): {row.auc_rmse_mm:.1f} mm")
    if args.metrics:
        append_metrics(args.metrics, row)
        print(f"appended to {args.metrics}")
    if args.scale_sweep:
        print("\ndepth-scale study:")
        for _, r in depth_scale_sweep(model, eval_set, cfg).iterrows():
            print(f"  {r['proportion']:.2f} x max_d: {r['rmse_mm']:.1f} mm")


# --- Parser ---

def build_parser():
    parser = argparse.ArgumentParser(prog="vanishing_depth", description="Vanishing depth toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("freqs", help="print the PDE wavelength table as CSV")
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--temperature", type=float, default=3e-4)
    p.add_argument("--max-depth", type=float, default=15.0, help="meters")
    p.add_argument("--unit", choices=("mm", "m"), default="mm")
    p.set_defaults(func=cmd_freqs)

    p = sub.add_parser("encode", help="encode a depth PNG")
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True, help=".npy output")
    p.add_argument("--encoding", choices=ENCODINGS, default="pde")
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--temperature", type=float, default=3e-4)
    p.add_argument("--max-depth", type=float, default=15.0)
    p.add_argument("--per-sample", action="store_true", help="use the sample max as max_d")
    p.add_argument("--intrinsics", help="fx/fy/cx/cy text file (p3de)")
    p.add_argument("--dump-channels", help="directory for per-channel PGM images")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a PDE tensor back to a depth PNG")
    p.add_argument("--enc", required=True)
    p.add_argument("--max-depth-used", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channels", type=int, default=32)
    p.add_argument("--temperature", type=float, default=3e-4)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("mask", help="write a vanish mask PNG (255 = removed)")
    p.add_argument("--kind", choices=MASK_KINDS, default="perlin")
    p.add_argument("--cells", type=int, default=4)
    p.add_argument("--scale-divisor", type=int, default=1)
    p.add_argument("--target", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--valid", help="depth PNG; only its valid pixels can be removed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("augment", help="randomize the depth distribution of a PNG")
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=float, default=15.0)
    p.add_argument("--record", help="append the transform as a JSON line")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("synth", help="render synthetic RGBD scenes")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run vanishing-depth pretraining")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", help="run directory")
    p.add_argument("--steps", type=int)
    p.add_argument("--encoding", choices=ENCODINGS)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-progress", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--metrics", help="metrics CSV to append to")
    p.add_argument("--scale-sweep", action="store_true")
    p.set_defaults(func=cmd_eval)
    return parser


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        args.func(args)
    except (VanishingDepthError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""
pipeline.py - Vanishing-depth pretraining loop

Per sample: synthetic scene -> RGB augmentation -> depth randomization ->
vanish mask -> encode the masked depth. Per step: forward, metric decode on
every head, multi-scale balanced SI loss, backward, Adam.

Writes into the run directory:
    config.txt, losses.csv, metrics.csv, model.vdck (+ model.json)

    python -m vanishing_depth.pipeline --config configs/desk.txt
"""

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from vanishing_depth.config import NO_PROGRESS, OUT_DIR, save_config
from vanishing_depth.evaluate import evaluate, make_eval_set
from vanishing_depth.lib import autograd as ag
from vanishing_depth.lib.checkpoint import save_checkpoint
from vanishing_depth.lib.depth import validity_mask
from vanishing_depth.lib.errors import TrainingDivergence
from vanishing_depth.lib.loss import DecodeHeadParams, LossReport, ScaleTerms, metric_decode, multi_scale_loss
from vanishing_depth.lib.masks import apply_mask, make_mask, random_mask_spec, sample_removal_fraction
from vanishing_depth.lib.model import build_model
from vanishing_depth.lib.optim import Adam
from vanishing_depth.lib.pde import encode_input
from vanishing_depth.lib.randomize import randomize_depth
from vanishing_depth.lib.util import draw_seed, make_rng
from vanishing_depth.scenes import scene_bank


GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


# --- Batches ---

@dataclass
class Sample:
    rgb: np.ndarray
    gt: np.ndarray          # rendered depth after flips
    target: np.ndarray      # randomized depth the model must reproduce
    vanish: np.ndarray
    valid: np.ndarray
    encoded: object         # EncodedInput of the masked depth
    transform: object       # AppliedTransform
    removal: float
    mask_kind: str
    intrinsics: object


@dataclass
class Batch:
    step: int
    samples: list


def augment_rgb(rgb, depth, intrinsics, rng):
    """Brightness/contrast jitter, 20% grayscale, 50% horizontal flip (depth too)."""
    brightness, contrast, gray_draw, flip_draw = rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2), rng.random(), rng.random()
    mean = rgb.mean()
    out = ((rgb - mean) * contrast + mean) * brightness
    if gray_draw < 0.2:
        out = np.broadcast_to(np.tensordot(GRAY_WEIGHTS, out, axes=1), out.shape)
    if flip_draw < 0.5:
        out = out[:, :, ::-1]
        depth = depth[:, ::-1]
        intrinsics = intrinsics.flipped(depth.shape[1])
    return np.clip(out, 0.0, 1.0), np.ascontiguousarray(depth), intrinsics


def _make_sample(cfg, scene, step, rng):
    rgb, gt, k = scene
    if cfg.augment_rgb:
        rgb, gt, k = augment_rgb(rgb, gt, k, rng)
    else:
        rgb, gt = np.array(rgb), np.array(gt)

    target, transform = randomize_depth(gt, cfg.randomize_config(), draw_seed(rng))
    removal = sample_removal_fraction(cfg.schedule(), step, draw_seed(rng))
    valid = validity_mask(target)
    spec = random_mask_spec(rng, removal, cfg.height, cfg.width)
    vanish = make_mask(spec, draw_seed(rng), cfg.height, cfg.width, valid)
    encoded = encode_input(
        apply_mask(target, vanish), cfg.encoding, cfg.pde_config(), k, cfg.norm_mean, cfg.norm_std, cfg.maxd_width
    )
    return Sample(rgb, gt, target, vanish, valid, encoded, transform, removal, spec.kind, k)


def make_batch(cfg, step, seed=None):
    """Deterministic per (step, seed)."""
    seed = cfg.seed if seed is None else seed
    bank = scene_bank(seed, "train", cfg.train_scenes, cfg.height, cfg.width)
    rng = make_rng(seed, step)
    samples = [_make_sample(cfg, bank[int(rng.integers(len(bank)))], step, rng) for _ in range(cfg.batch_size)]
    return Batch(step=step, samples=samples)


# --- Loss / step ---

def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def batch_loss(model, batch, cfg):
    """Mean multi-scale loss over the batch, as one graph; returns a LossReport."""
    spec, params = cfg.multiscale(), cfg.loss_params()
    reports, total = [], None
    for sample in batch.samples:
        vectors = sample.encoded.vectors if model.cfg.maxd_conditioning else None
        heads = model.forward(sample.rgb, sample.encoded.tensor, vectors)
        decode = DecodeHeadParams(
            max_d=sample.encoded.depth_max, n=model.cfg.decode_terms, slope=cfg.leaky_slope, place_value=cfg.place_value
        )
        preds = [metric_decode(h, decode) for h in heads]
        report = multi_scale_loss(preds, sample.target, sample.vanish, sample.valid, spec, params, cfg.min_pred_depth)
        reports.append(report)
        total = report.loss if total is None else total + report.loss

    loss = total * (1.0 / len(batch.samples))
    scales = [
        ScaleTerms(
            factor=factor,
            reconstruction=_mean_or_none([r.scales[j].reconstruction for r in reports]),
            prediction=_mean_or_none([r.scales[j].prediction for r in reports]),
            combined=_mean_or_none([r.scales[j].combined for r in reports]),
        )
        for j, factor in enumerate(spec.factors)
    ]
    return LossReport(scales=scales, total=loss.item(), loss=loss)


def _diagnostics(batch, loss, grad_norms=None):
    return {
        "step": batch.step,
        "loss": repr(loss),
        "removal_fractions": [s.removal for s in batch.samples],
        "mask_kinds": [s.mask_kind for s in batch.samples],
        "transforms": [json.loads(s.transform.to_json()) for s in batch.samples],
        "max_d": [list(s.encoded.max_d) for s in batch.samples],
        "grad_norms": grad_norms or {},
    }


def train_step(model, batch, cfg, optimizer):
    """One Adam step on the trainable parameters; returns (LossReport, optimizer)."""
    model.store.zero_grad()
    report = batch_loss(model, batch, cfg)
    if not np.isfinite(report.total):
        raise TrainingDivergence(f"loss is {report.total} at step {batch.step}", _diagnostics(batch, report.total))

    ag.backward(report.loss)
    names = model.trainable_names()
    norms = {name: float(np.linalg.norm(model.store[name].gradient)) for name in names}
    if not all(np.isfinite(v) for v in norms.values()):
        bad = {k: repr(v) for k, v in norms.items() if not np.isfinite(v)}
        raise TrainingDivergence(f"non-finite gradient at step {batch.step}", _diagnostics(batch, report.total, bad))

    optimizer.step(model.store, names)
    return report, optimizer


# --- Training run ---

@dataclass
class TrainResult:
    model: object
    optimizer: Adam
    losses: pd.DataFrame
    metrics: pd.DataFrame
    out_dir: Path


def train(cfg, out_dir=None, progress=None):
    out_dir = Path(out_dir) if out_dir else OUT_DIR / f"run_seed{cfg.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.txt")
    show = (not NO_PROGRESS) if progress is None else progress

    print(f"Rendering {cfg.train_scenes} training and {cfg.eval_scenes} eval scenes...")
    scene_bank(cfg.seed, "train", cfg.train_scenes, cfg.height, cfg.width)
    eval_set = make_eval_set(cfg)

    model = build_model(cfg.model_config(), cfg.seed)
    optimizer = Adam(lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)
    print(f"Model: {model.parameter_count()} parameters, {len(model.trainable_names())} trainable tensors")

    metrics = [evaluate(model, eval_set, cfg, step=0)]
    loss_rows, depth_means = [], []
    checkpoint = out_dir / "model.vdck"

    bar = tqdm(range(cfg.steps), desc="training", disable=not show)
    for step in bar:
        done = step + 1
        batch = make_batch(cfg, step)
        try:
            report, optimizer = train_step(model, batch, cfg, optimizer)
        except TrainingDivergence as e:
            (out_dir / "divergence.json").write_text(json.dumps(e.diagnostics, indent=2), encoding="utf-8")
            raise
        loss_rows.append(report.row(done))
        depth_means.extend(float(s.target[s.valid].mean()) for s in batch.samples)
        bar.set_postfix(loss=f"{report.total:.4f}")

        if cfg.eval_every and done % cfg.eval_every == 0:
            row = evaluate(model, eval_set, cfg, step=done)
            metrics.append(row)
            tqdm.write(f"step {done}: rmse {row.rmse_mm:.1f} mm, auc-rmse {row.auc_rmse_mm:.1f} mm")
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint, model, optimizer, {"step": done, "seed": cfg.seed})

    if metrics[-1].step != cfg.steps:
        metrics.append(evaluate(model, eval_set, cfg, step=cfg.steps))
    save_checkpoint(checkpoint, model, optimizer, {"step": cfg.steps, "seed": cfg.seed})

    losses = pd.DataFrame(loss_rows)
    losses.to_csv(out_dir / "losses.csv", index=False)
    metrics_df = pd.DataFrame([m.as_dict() for m in metrics])
    metrics_df.to_csv(out_dir / "metrics.csv", index=False)

    first, last = metrics[0], metrics[-1]
    print(f"\nrandomized depth: {np.mean(depth_means):.2f} ± {np.std(depth_means):.2f} m (sample means)")
    print(f"rmse: {first.rmse_mm:.1f} -> {last.rmse_mm:.1f} mm")
    print(f"auc-rmse: {first.auc_rmse_mm:.1f} -> {last.auc_rmse_mm:.1f} mm")
    print(f"saved to {out_dir}")
    return TrainResult(model, optimizer, losses, metrics_df, out_dir)


def main():
    from vanishing_depth.cli import run_cli
    sys.exit(run_cli(["train", *sys.argv[1:]]))


if __name__ == "__main__":
    main()

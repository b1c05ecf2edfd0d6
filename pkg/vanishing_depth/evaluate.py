"""
evaluate.py - Depth completion metrics

RMSE against ground truth, the input-density sweep (keep 1, 6, ..., 96 %
of the valid depth) summarized as a trapezoid AUC, and the depth-scale
study where inputs are compressed into a fraction of max_d.

    python -m vanishing_depth.evaluate --checkpoint runs/run_seed0/model.vdck
"""

import sys
from dataclasses import dataclass

import numpy as np
import pandas as pd

from vanishing_depth.lib.depth import check_depth, fit_to_range, restore_range
from vanishing_depth.lib.errors import ContractViolation, EmptySetError
from vanishing_depth.lib.loss import DecodeHeadParams, metric_decode
from vanishing_depth.lib.masks import threshold_to_mask
from vanishing_depth.lib.pde import encode_input
from vanishing_depth.lib.util import append_rows, make_rng
from vanishing_depth.scenes import scene_bank


SWEEP_PERCENTS = tuple(range(1, 97, 5))
SWEEP_FRACTIONS = np.array(SWEEP_PERCENTS) / 100.0
SCALE_PROPORTIONS = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass(frozen=True)
class EvalSample:
    rgb: np.ndarray
    depth: np.ndarray
    intrinsics: object


@dataclass
class MetricsRow:
    step: int
    split: str
    rmse_mm: float
    auc_rmse_mm: float
    per_density: tuple

    def as_dict(self):
        row = {"step": self.step, "split": self.split, "rmse_mm": self.rmse_mm, "auc_rmse_mm": self.auc_rmse_mm}
        for pct, value in zip(SWEEP_PERCENTS, self.per_density):
            row[f"d{pct:02d}"] = value
        return row


def make_eval_set(cfg):
    bank = scene_bank(cfg.seed, "eval", cfg.eval_scenes, cfg.height, cfg.width)
    return [EvalSample(rgb, depth, k) for rgb, depth, k in bank]


# --- Metrics ---

def rmse(pred, gt):
    """RMSE over gt-valid pixels, in millimeters."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = check_depth(gt)
    if pred.shape != gt.shape:
        raise ContractViolation(f"prediction {pred.shape} vs ground truth {gt.shape}")
    valid = gt > 0
    if not valid.any():
        raise EmptySetError("ground truth has no valid pixels")
    return float(np.sqrt(np.mean((pred[valid] - gt[valid]) ** 2)) * 1000.0)


def auc(fractions, values):
    """Trapezoid area normalized by the fraction span: the mean height of the curve."""
    fractions = np.asarray(fractions, dtype=np.float64)
    return float(np.trapezoid(values, fractions) / (fractions[-1] - fractions[0]))


def spearman(x, y):
    """Rank correlation (average ranks for ties)."""
    return float(pd.Series(x).rank().corr(pd.Series(y).rank()))


# --- Prediction ---

def predict(model, rgb, depth_input, cfg, intrinsics=None):
    """
    Metric depth from the full-resolution head. With a global max_d, an
    input reaching it is scaled into range first and the output scaled back.
    """
    depth_input = check_depth(depth_input)
    scalar = 1.0
    if cfg.max_d_mode == "global":
        depth_input, scalar = fit_to_range(depth_input, cfg.max_depth, cfg.eval_fit_fraction)
    encoded = encode_input(
        depth_input, cfg.encoding, cfg.pde_config(), intrinsics, cfg.norm_mean, cfg.norm_std, cfg.maxd_width
    )
    vectors = encoded.vectors if model.cfg.maxd_conditioning else None
    heads = model.forward(rgb, encoded.tensor, vectors)
    decode = DecodeHeadParams(
        max_d=encoded.depth_max, n=model.cfg.decode_terms, slope=cfg.leaky_slope, place_value=cfg.place_value
    )
    return restore_range(metric_decode(heads[0], decode).value, scalar)


def _model_predictor(model, cfg):
    def run(sample, depth_input):
        return predict(model, sample.rgb, depth_input, cfg, sample.intrinsics)
    return run


def keep_mask(gt, fraction, seed, index):
    """Seeded uniform subset holding round(fraction·N) of the valid pixels."""
    field = make_rng(seed, index, int(round(fraction * 100))).random(gt.shape)
    return threshold_to_mask(field, fraction, gt > 0)


def auc_rmse_density_sweep(model, eval_set, cfg, fractions=SWEEP_FRACTIONS, predictor=None):
    """
    Returns (AUC-RMSE mm, per-density mean RMSE list). `predictor(sample,
    depth_input)` replaces the model when given.
    """
    if not eval_set:
        raise EmptySetError("evaluation set is empty")
    predictor = predictor or _model_predictor(model, cfg)
    curves = np.zeros((len(eval_set), len(fractions)))
    for i, sample in enumerate(eval_set):
        for j, f in enumerate(fractions):
            kept = keep_mask(sample.depth, f, cfg.sweep_seed, i)
            depth_input = np.where(kept, sample.depth, 0.0)
            curves[i, j] = rmse(predictor(sample, depth_input), sample.depth)
    per_density = curves.mean(axis=0)
    return auc(fractions, per_density), [float(v) for v in per_density]


def evaluate(model, eval_set, cfg, step=0, split="eval", predictor=None):
    """Dense-input RMSE plus the density sweep."""
    if not eval_set:
        raise EmptySetError("evaluation set is empty")
    predictor = predictor or _model_predictor(model, cfg)
    dense = float(np.mean([rmse(predictor(s, s.depth), s.depth) for s in eval_set]))
    area, per_density = auc_rmse_density_sweep(model, eval_set, cfg, predictor=predictor)
    return MetricsRow(step=step, split=split, rmse_mm=dense, auc_rmse_mm=area, per_density=tuple(per_density))


def append_metrics(path, row):
    append_rows(path, [row.as_dict()])


def depth_scale_sweep(model, eval_set, cfg, proportions=SCALE_PROPORTIONS):
    """
    Compress each input so its peak sits at proportion·max_d, predict,
    scale back, and report RMSE against the original depth.
    """
    rows = []
    for p in proportions:
        errors = []
        for sample in eval_set:
            s = p * cfg.max_depth / sample.depth.max()
            pred = predict(model, sample.rgb, sample.depth * s, cfg, sample.intrinsics) / s
            errors.append(rmse(pred, sample.depth))
        rows.append({"proportion": p, "rmse_mm": float(np.mean(errors))})
    return pd.DataFrame(rows)


def main():
    from vanishing_depth.cli import run_cli
    sys.exit(run_cli(["eval", *sys.argv[1:]]))


if __name__ == "__main__":
    main()

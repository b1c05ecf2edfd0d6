"""
loss.py - Scale-invariant depth loss, balanced and multi-scale

L_SI = α·sqrt(mean(g²) - λ·mean(g)²) with g = log(pred) - log(gt) over a
pixel set. The balanced loss averages it over the kept (reconstruction)
and vanished (prediction) pixels; the multi-scale loss sums that over the
head resolutions. metric_decode turns head coefficients into meters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .errors import ContractViolation, DomainError, EmptySetError
from .util import nearest_resize


PLACE_VALUES = ("exponential", "linear")
MIN_TERM = 0.001  # meters


# --- Params ---

@dataclass(frozen=True)
class SiLossParams:
    lam: float = 0.85
    alpha: float = 10.0

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ContractViolation(f"lambda must be in [0, 1], got {self.lam}")
        if not self.alpha > 0:
            raise ContractViolation(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class MultiScaleSpec:
    factors: tuple = (1.0, 0.5, 0.25, 0.125)
    weights: tuple = None  # None = all 1.0

    def __post_init__(self):
        if not self.factors or any(not 0 < f <= 1 for f in self.factors):
            raise ContractViolation(f"factors must lie in (0, 1], got {self.factors}")
        if self.weights is not None and (
            len(self.weights) != len(self.factors) or any(w <= 0 for w in self.weights)
        ):
            raise ContractViolation("need one positive weight per factor")

    def scale_weights(self):
        return self.weights or (1.0,) * len(self.factors)


@dataclass
class ScaleTerms:
    factor: float
    reconstruction: float  # None when the set was empty
    prediction: float
    combined: float


@dataclass
class LossReport:
    scales: list
    total: float
    loss: ag.Node = field(repr=False)

    def row(self, step):
        out = {"step": step}
        for j, s in enumerate(self.scales):
            out[f"rec_{j}"] = s.reconstruction
            out[f"pred_{j}"] = s.prediction
        out["total"] = self.total
        return out


# --- SI loss ---

def si_loss(pred, gt, pixel_set, params=SiLossParams(), min_depth=None):
    """
    pred is an H×W node in meters. With min_depth the prediction is clamped
    from below before the log; without it a nonpositive prediction on the
    set is a DomainError.
    """
    pixel_set = np.asarray(pixel_set, dtype=bool)
    gt = np.asarray(gt, dtype=np.float64)
    if pixel_set.shape != pred.shape or gt.shape != pred.shape:
        raise ContractViolation(f"shapes differ: pred {pred.shape}, gt {gt.shape}, set {pixel_set.shape}")
    count = int(pixel_set.sum())
    if count == 0:
        raise EmptySetError("scale-invariant loss over an empty pixel set")
    target = gt[pixel_set]
    if (target <= 0).any():
        raise ContractViolation("ground truth missing inside the pixel set")

    p = ag.select(pred, pixel_set)
    if min_depth is not None:
        p = ag.clamp_min(p, min_depth)
    elif (p.value <= 0).any():
        raise DomainError("nonpositive prediction inside the pixel set")

    g = ag.log(p) - np.log(target)
    mean_sq = ag.total(ag.square(g)) * (1.0 / count)
    sq_mean = ag.square(ag.total(g)) * (params.lam / count**2)
    # nonnegative for lam <= 1, up to rounding
    inner = ag.clamp_min(mean_sq - sq_mean, 0.0)
    return ag.sqrt(inner) * params.alpha


def balanced_pixel_loss(pred, gt, vanish, validity, params=SiLossParams(), min_depth=None):
    """½(L_rec + L_pred); if one set is empty the other counts alone."""
    validity = np.asarray(validity, dtype=bool)
    vanish = np.asarray(vanish, dtype=bool)
    if not validity.any():
        raise EmptySetError("no valid ground truth pixels")
    rec_set = validity & ~vanish
    pred_set = validity & vanish

    rec = si_loss(pred, gt, rec_set, params, min_depth) if rec_set.any() else None
    prd = si_loss(pred, gt, pred_set, params, min_depth) if pred_set.any() else None
    if rec is not None and prd is not None:
        combined = (rec + prd) * 0.5
    else:
        combined = rec if prd is None else prd
    return combined, {"reconstruction": rec, "prediction": prd}


def multi_scale_loss(preds, gt, vanish, validity, spec=MultiScaleSpec(), params=SiLossParams(), min_depth=1e-3):
    """Sum of weighted balanced losses, targets nearest-resized to each head."""
    if len(preds) != len(spec.factors):
        raise ContractViolation(f"{len(preds)} predictions for {len(spec.factors)} scales")
    gt = np.asarray(gt, dtype=np.float64)
    height, width = gt.shape

    scales, total = [], None
    for pred, factor, weight in zip(preds, spec.factors, spec.scale_weights()):
        expected = (max(1, round(height * factor)), max(1, round(width * factor)))
        if pred.shape != expected:
            raise ContractViolation(f"scale {factor}: prediction {pred.shape}, expected {expected}")
        h, w = expected
        gt_s = nearest_resize(gt, h, w)
        valid_s = nearest_resize(validity, h, w) & (gt_s > 0)
        vanish_s = nearest_resize(vanish, h, w)

        combined, parts = balanced_pixel_loss(pred, gt_s, vanish_s, valid_s, params, min_depth)
        weighted = combined if weight == 1.0 else combined * weight
        total = weighted if total is None else total + weighted
        scales.append(ScaleTerms(
            factor=factor,
            reconstruction=None if parts["reconstruction"] is None else parts["reconstruction"].item(),
            prediction=None if parts["prediction"] is None else parts["prediction"].item(),
            combined=combined.item(),
        ))
    return LossReport(scales=scales, total=total.item(), loss=total)


# --- Metric decode ---

def terms_for(max_d):
    """Largest n with max_d/10^n > 1 mm."""
    n = 0
    while max_d / 10 ** (n + 1) > MIN_TERM:
        n += 1
    if n < 1:
        raise ContractViolation(f"max_d {max_d} m is too small for any decode term")
    return n


def decode_terms(max_d, n, place_value="exponential"):
    """Per-coefficient weights in meters: max_d/10^i, or max_d/(10·i) for linear."""
    i = np.arange(1, n + 1, dtype=np.float64)
    if place_value == "exponential":
        return max_d / 10.0**i
    if place_value == "linear":
        return max_d / (10.0 * i)
    raise ContractViolation(f"place_value must be one of {PLACE_VALUES}, got {place_value}")


@dataclass
class DecodeHeadParams:
    max_d: float
    n: int = None
    slope: float = 0.01
    place_value: str = "exponential"

    def __post_init__(self):
        if not self.max_d > 0:
            raise ContractViolation(f"max_d must be positive, got {self.max_d}")
        if self.n is None:
            self.n = terms_for(self.max_d)

    def terms(self):
        return decode_terms(self.max_d, self.n, self.place_value)


def metric_decode(head, params):
    """leaky_relu(Σ_i v_i·term_i) per pixel; n×H×W in, H×W meters out."""
    if head.value.ndim != 3 or head.shape[0] != params.n:
        raise ContractViolation(f"head has shape {head.shape}, expected {params.n} channels")
    _, h, w = head.shape
    kernel = ag.constant(params.terms().reshape(1, params.n, 1, 1))
    summed = ag.reshape(ag.conv2d(head, kernel), (h, w))
    return ag.leaky_relu(summed, slope=params.slope)

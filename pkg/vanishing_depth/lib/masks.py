"""
masks.py - Vanish masks and the easy-to-hard removal schedule

Noise fields (single-octave Perlin, or block-upsampled uniform noise) are
thresholded at an exact quantile so the removed pixel count is controlled.
Masks are boolean H×W arrays, True = removed from the depth input.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation
from .util import make_rng


MASK_KINDS = ("uniform", "perlin")
PERLIN_CELLS = (2, 4, 8, 16)
SCALE_DIVISORS = (1, 2, 4, 8)


# --- Perlin noise ---

def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def perlin_gradients(seed, cells):
    """(cells+1)×(cells+1)×2 unit gradient vectors, (gx, gy)."""
    angles = make_rng(seed).uniform(0.0, 2.0 * np.pi, size=(cells + 1, cells + 1))
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def perlin_eval(gradients, y, x):
    """Noise at lattice coordinates (y, x), both in [0, cells]."""
    cells = gradients.shape[0] - 1
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y0 = np.clip(np.floor(y).astype(int), 0, cells - 1)
    x0 = np.clip(np.floor(x).astype(int), 0, cells - 1)
    fy = y - y0
    fx = x - x0

    def corner(iy, ix, dy, dx):
        g = gradients[iy, ix]
        return g[..., 0] * dx + g[..., 1] * dy

    n00 = corner(y0, x0, fy, fx)
    n01 = corner(y0, x0 + 1, fy, fx - 1)
    n10 = corner(y0 + 1, x0, fy - 1, fx)
    n11 = corner(y0 + 1, x0 + 1, fy - 1, fx - 1)

    u = _fade(fx)
    v = _fade(fy)
    top = n00 + u * (n01 - n00)
    bottom = n10 + u * (n11 - n10)
    return top + v * (bottom - top)


def perlin_noise(seed, height, width, cells):
    """Pixel (v, u) sits at lattice point (v·cells/H, u·cells/W)."""
    if not 1 <= cells <= min(height, width):
        raise ContractViolation(f"cells must be in [1, {min(height, width)}], got {cells}")
    ys = np.arange(height) * cells / height
    xs = np.arange(width) * cells / width
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return perlin_eval(perlin_gradients(seed, cells), yy, xx)


# --- Uniform noise ---

def uniform_noise_multiscale(seed, height, width, scale_divisor):
    """Uniform [0, 1) noise on k×k blocks (k = scale_divisor), nearest upsampled."""
    k = int(scale_divisor)
    if k < 1:
        raise ContractViolation(f"scale_divisor must be >= 1, got {scale_divisor}")
    grid = make_rng(seed).random((-(-height // k), -(-width // k)))
    return np.repeat(np.repeat(grid, k, axis=0), k, axis=1)[:height, :width]


# --- Thresholding ---

def threshold_to_mask(field, target_removal, valid=None):
    """
    Remove the round(target·N) lowest-valued eligible pixels.
    Eligible = valid pixels (all pixels when valid is None). Ties go by
    pixel index.
    """
    field = np.asarray(field, dtype=np.float64)
    if not 0 <= target_removal <= 1:
        raise ContractViolation(f"target removal must be in [0, 1], got {target_removal}")
    if not np.isfinite(field).all():
        raise ContractViolation("noise field must be finite")
    if valid is None:
        eligible = np.arange(field.size)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != field.shape:
            raise ContractViolation(f"valid mask {valid.shape} vs field {field.shape}")
        eligible = np.flatnonzero(valid)

    count = int(np.floor(target_removal * eligible.size + 0.5))
    order = np.argsort(field.reshape(-1)[eligible], kind="stable")
    mask = np.zeros(field.shape, dtype=bool)
    mask.flat[eligible[order[:count]]] = True
    return mask


# --- Specs ---

@dataclass(frozen=True)
class MaskSpec:
    kind: str
    target_removal: float
    cells: int = 4
    scale_divisor: int = 1

    def __post_init__(self):
        if self.kind not in MASK_KINDS:
            raise ContractViolation(f"mask kind must be one of {MASK_KINDS}, got {self.kind}")
        if not 0.01 <= self.target_removal <= 0.99:
            raise ContractViolation(f"target removal must be in [0.01, 0.99], got {self.target_removal}")
        if self.cells < 1 or self.scale_divisor < 1:
            raise ContractViolation("cells and scale_divisor must be >= 1")


def make_mask(spec, seed, height, width, valid=None):
    if spec.kind == "perlin":
        field = perlin_noise(seed, height, width, spec.cells)
    else:
        field = uniform_noise_multiscale(seed, height, width, spec.scale_divisor)
    return threshold_to_mask(field, spec.target_removal, valid)


def random_mask_spec(rng, target_removal, height, width):
    """Either family with even odds; lattice size / block size drawn per sample."""
    limit = min(height, width)
    kind = MASK_KINDS[int(rng.integers(2))]
    cells = [c for c in PERLIN_CELLS if c <= limit] or [1]
    divisors = [k for k in SCALE_DIVISORS if k <= limit]
    return MaskSpec(
        kind=kind,
        target_removal=target_removal,
        cells=int(rng.choice(cells)),
        scale_divisor=int(rng.choice(divisors)),
    )


def apply_mask(depth, mask):
    out = np.array(depth, dtype=np.float64)
    out[np.asarray(mask, dtype=bool)] = 0.0
    return out


def combine_masks(*masks):
    if not masks:
        raise ContractViolation("combine_masks needs at least one mask")
    return np.logical_or.reduce([np.asarray(m, dtype=bool) for m in masks])


def save_mask_png(mask, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path, format="PNG")


# --- Schedule ---

@dataclass(frozen=True)
class NoiseSchedule:
    """
    Removal fraction drawn uniformly from [lo, hi(step)].
    hi widens linearly from easy_hi to hard_hi over warmup_steps. The
    linear shape is a stand-in; only the easy/hard endpoints are known.
    """

    warmup_steps: int = 1000
    easy_hi: float = 0.30
    hard_hi: float = 0.99
    lo: float = 0.01

    def __post_init__(self):
        if self.warmup_steps < 0:
            raise ContractViolation(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if not self.lo < self.easy_hi <= self.hard_hi:
            raise ContractViolation(f"need lo < easy_hi <= hard_hi, got {self.lo}, {self.easy_hi}, {self.hard_hi}")

    def hi(self, step):
        progress = 1.0 if self.warmup_steps == 0 else min(1.0, step / self.warmup_steps)
        return self.easy_hi + (self.hard_hi - self.easy_hi) * progress


def sample_removal_fraction(schedule, step, seed):
    if step < 0:
        raise ContractViolation(f"step must be >= 0, got {step}")
    return float(make_rng(seed, step).uniform(schedule.lo, schedule.hi(step)))

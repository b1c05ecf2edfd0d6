"""
randomize.py - Depth distribution randomization

Each sample goes through one of four modes (jitter, bin rescale, offset,
identity), then anything past max_d is scaled back under it. The applied
parameters are recorded so a transform can be undone on valid pixels.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .depth import check_depth
from .errors import ContractViolation, DegenerateInputError, EmptySetError
from .util import make_rng


MODES = ("jitter", "bin_rescale", "offset", "identity")
MIN_DEPTH = 0.001  # offset floor, meters

# (lo, hi) in meters; None stands for max_d
DEFAULT_BINS = ((0.0, 1.0), (0.5, 2.0), (0.5, 5.0), (1.0, 15.0), (5.0, None))


# --- Config ---

@dataclass(frozen=True)
class RandomizeConfig:
    """
    bin_jitter moves the bin endpoints (not the drawn values) by up to
    ±bin_jitter of their value.
    """

    max_d: float = 15.0
    jitter_amplitude: float = 0.20
    bins: tuple = DEFAULT_BINS
    bin_jitter: float = 0.10
    mode_probabilities: tuple = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if not self.max_d > 0:
            raise ContractViolation(f"max_d must be positive, got {self.max_d}")
        if not 0 <= self.jitter_amplitude < 1:
            raise ContractViolation(f"jitter amplitude must be in [0, 1), got {self.jitter_amplitude}")
        if not 0 <= self.bin_jitter < 1:
            raise ContractViolation(f"bin jitter must be in [0, 1), got {self.bin_jitter}")
        probs = np.asarray(self.mode_probabilities, dtype=np.float64)
        if probs.shape != (len(MODES),) or (probs < 0).any() or not np.isclose(probs.sum(), 1.0):
            raise ContractViolation(f"mode probabilities must be {len(MODES)} values summing to 1")
        if len(self.resolved_bins()) < 2:
            raise ContractViolation("need at least two bins")
        for lo, hi in self.resolved_bins():
            if not lo < hi:
                raise ContractViolation(f"bin ({lo}, {hi}) is empty for max_d={self.max_d}")

    def resolved_bins(self):
        return [(float(lo), float(self.max_d if hi is None else hi)) for lo, hi in self.bins]


@dataclass
class AppliedTransform:
    mode: str
    scale: float = 1.0
    shift: float = 0.0
    source_range: tuple = None
    target_range: tuple = None
    bins: tuple = None
    clamp_scale: float = 1.0
    fallback: bool = False

    def invert(self, depth):
        """Undo the transform on valid pixels; exact unless the offset floor was hit."""
        depth = check_depth(depth)
        valid = depth > 0
        d = depth / self.clamp_scale
        if self.mode == "jitter":
            d = d / self.scale
        elif self.mode == "bin_rescale":
            lo, hi = self.target_range
            src_lo, src_hi = self.source_range
            d = src_lo + (d - lo) / (hi - lo) * (src_hi - src_lo)
        elif self.mode == "offset":
            d = d - self.shift
        return np.where(valid, d, 0.0)

    def to_json(self):
        return json.dumps(asdict(self))


# --- Transforms ---

def apply_jitter(depth, s, amplitude=0.20):
    depth = check_depth(depth)
    if not 1 - amplitude <= s <= 1 + amplitude:
        raise ContractViolation(f"jitter scalar {s} outside [{1 - amplitude}, {1 + amplitude}]")
    return depth * s


def apply_bin_rescale(depth, lo, hi):
    """Map the valid range affinely onto [lo, hi]."""
    depth = check_depth(depth)
    if not lo < hi:
        raise ContractViolation(f"bin rescale needs lo < hi, got ({lo}, {hi})")
    valid = depth > 0
    if not valid.any():
        raise DegenerateInputError("no valid depth to rescale")
    d_min, d_max = depth[valid].min(), depth[valid].max()
    if d_max == d_min:
        raise DegenerateInputError("constant depth has no range to rescale")
    mapped = lo + (depth - d_min) / (d_max - d_min) * (hi - lo)
    return np.where(valid, mapped, 0.0)


def apply_offset(depth, o):
    depth = check_depth(depth)
    valid = depth > 0
    std = depth[valid].std() if valid.any() else 0.0
    if abs(o) > std * (1 + 1e-12):
        raise ContractViolation(f"offset {o} exceeds the depth std {std}")
    return np.where(valid, np.maximum(depth + o, MIN_DEPTH), 0.0)


def clamp_over_max(depth, max_d, r):
    """Scale so the peak becomes max_d·(0.9 + 0.1r) when it exceeds max_d."""
    depth = check_depth(depth)
    if not 0 <= r < 1:
        raise ContractViolation(f"r must be in [0, 1), got {r}")
    peak = depth.max() if depth.size else 0.0
    if peak <= max_d:
        return depth, 1.0
    s = max_d * (0.9 + 0.1 * r) / peak
    return depth * s, s


def _draw_bin_range(rng, cfg):
    bins = cfg.resolved_bins()
    picks = sorted(int(i) for i in rng.choice(len(bins), size=2, replace=False))
    values = []
    for i in picks:
        lo, hi = bins[i]
        lo *= 1 + rng.uniform(-cfg.bin_jitter, cfg.bin_jitter)
        hi *= 1 + rng.uniform(-cfg.bin_jitter, cfg.bin_jitter)
        lo, hi = sorted((max(lo, MIN_DEPTH), max(hi, MIN_DEPTH)))
        values.append(rng.uniform(lo, hi))
    return tuple(picks), tuple(sorted(values))


def randomize_depth(depth, cfg, seed):
    """Returns (randomized depth, AppliedTransform). Deterministic per seed."""
    depth = check_depth(depth)
    valid = depth > 0
    if not valid.any():
        raise EmptySetError("randomize_depth needs at least one valid pixel")
    rng = make_rng(seed)
    mode = MODES[int(rng.choice(len(MODES), p=cfg.mode_probabilities))]
    out = depth
    record = AppliedTransform(mode=mode)

    if mode == "jitter":
        record.scale = float(rng.uniform(1 - cfg.jitter_amplitude, 1 + cfg.jitter_amplitude))
        out = apply_jitter(depth, record.scale, cfg.jitter_amplitude)
    elif mode == "bin_rescale":
        picks, (lo, hi) = _draw_bin_range(rng, cfg)
        try:
            out = apply_bin_rescale(depth, lo, hi)
            record.bins = picks
            record.target_range = (float(lo), float(hi))
            record.source_range = (float(depth[valid].min()), float(depth[valid].max()))
        except (DegenerateInputError, ContractViolation):
            record = AppliedTransform(mode="identity", fallback=True)
    elif mode == "offset":
        std = depth[valid].std()
        record.shift = float(rng.uniform(-std, std))
        out = apply_offset(depth, record.shift)

    out, record.clamp_scale = clamp_over_max(out, cfg.max_d, float(rng.random()))
    record.clamp_scale = float(record.clamp_scale)
    return out, record

"""
pde.py - Positional depth encoding

Depth d is turned into Ch/2 sin/cos pairs of 2π·(d/max_d)/T^(2i/Ch), so
every channel lies in [-1, 1]. Also here: the analytic inverse used for
verification, the 3D (|X|, |Y|, Z) variant, the digit vector that carries
max_d to the model, and the plain normalization baseline.
"""

from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np
from PIL import Image

from .depth import check_depth, depth_to_points
from .errors import ContractViolation, DepthRangeError, EmptySetError, FormatError


MAX_D_MODES = ("global", "per_sample")
ENCODINGS = ("pde", "p3de", "norm")
TOKEN_WIDTH = 768
DIGIT_BOUNDARY = 64
# integer and decimal halves get the same number of cells
MIN_VECTOR_WIDTH = 2 * DIGIT_BOUNDARY


# --- Config ---

@dataclass(frozen=True)
class PdeConfig:
    channels: int = 32
    temperature: float = 3e-4
    max_d_mode: str = "global"
    max_depth: float = 15.0  # meters, used in global mode

    def __post_init__(self):
        if self.channels < 2 or self.channels % 2:
            raise ContractViolation(f"channels must be even and >= 2, got {self.channels}")
        if not 0 < self.temperature < 1:
            raise ContractViolation(f"temperature must be in (0, 1), got {self.temperature}")
        if self.max_d_mode not in MAX_D_MODES:
            raise ContractViolation(f"max_d_mode must be one of {MAX_D_MODES}, got {self.max_d_mode}")
        if self.max_d_mode == "global" and not self.max_depth > 0:
            raise ContractViolation(f"global max depth must be positive, got {self.max_depth}")


def _divisors(cfg):
    return cfg.temperature ** (2.0 * np.arange(cfg.channels // 2) / cfg.channels)


def frequency_table(cfg, max_d):
    """Wavelengths λ_i = max_d·T^(2i/Ch), in the unit of max_d."""
    if not max_d > 0:
        raise ContractViolation(f"max_d must be positive, got {max_d}")
    return max_d * _divisors(cfg)


# --- Encode / decode ---

def _encode(values, cfg, max_d):
    ratio = values / max_d
    angles = 2.0 * np.pi * ratio[None] / _divisors(cfg)[:, None, None]
    out = np.empty((cfg.channels,) + values.shape)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def _max_over(values, valid):
    picked = values[valid]
    if picked.size == 0:
        raise EmptySetError("per-sample max depth needs at least one valid pixel")
    return float(picked.max())


def pde_encode(depth, cfg):
    """Returns (Ch×H×W encoding, max_d used). Missing pixels encode like 0."""
    depth = check_depth(depth)
    if cfg.max_d_mode == "per_sample":
        max_d = _max_over(depth, depth > 0)
    else:
        max_d = float(cfg.max_depth)
    return _encode(depth, cfg, max_d), max_d


def pde_decode(enc, cfg, max_d_used):
    """
    Coarse-to-fine phase unwrapping.
    Pair 0 covers [0, max_d) without ambiguity; each finer pair picks the
    wrap count closest to the running estimate and refines within it.
    """
    enc = np.asarray(enc, dtype=np.float64)
    if enc.ndim != 3 or enc.shape[0] != cfg.channels:
        raise ContractViolation(f"expected {cfg.channels} channels, got shape {enc.shape}")
    wavelengths = _divisors(cfg)
    phase = np.mod(np.arctan2(enc[0::2], enc[1::2]), 2.0 * np.pi) / (2.0 * np.pi)

    estimate = phase[0] * wavelengths[0]
    for i in range(1, len(wavelengths)):
        wraps = np.round(estimate / wavelengths[i] - phase[i])
        estimate = (wraps + phase[i]) * wavelengths[i]
    return estimate * max_d_used


def p3de_encode(points, cfg):
    """
    Encode |X|, |Y| and Z separately and stack them (X block, Y block, Z block).
    The sign of X/Y is not encoded; it follows from the pixel position.
    Returns (3·Ch×H×W, (max_x, max_y, max_z)).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 3 or points.shape[0] != 3:
        raise ContractViolation(f"point map must be 3×H×W, got {points.shape}")
    valid = points[2] > 0
    blocks, maxima = [], []
    for axis in (np.abs(points[0]), np.abs(points[1]), points[2]):
        if cfg.max_d_mode == "per_sample":
            max_d = _max_over(axis, valid)
            # an axis that is 0 everywhere (e.g. a single column at cx) encodes as 0 under any key
            if max_d == 0:
                max_d = 1.0
        else:
            max_d = float(cfg.max_depth)
        blocks.append(_encode(axis, cfg, max_d))
        maxima.append(max_d)
    return np.concatenate(blocks), tuple(maxima)


def normalize_encode(depth, mean, std):
    """(d - mean)/std everywhere, missing pixels included."""
    depth = check_depth(depth)
    if not std > 0:
        raise ContractViolation(f"std must be positive, got {std}")
    return (depth - mean) / std


# --- Max-depth vector ---

def _digits(max_d):
    text = format(Decimal(repr(float(max_d))), "f")
    integer, _, decimals = text.partition(".")
    return integer.lstrip("0") or "0", decimals.rstrip("0")


def encode_maxd_vector(max_d, width=TOKEN_WIDTH, boundary=DIGIT_BOUNDARY):
    """
    Digits of max_d as (digit+1)/10 cells. Integer digits end at index
    boundary-1, decimal digits start at index boundary, the rest is 0.
    """
    if not (np.isfinite(max_d) and max_d > 0):
        raise ContractViolation(f"max_d must be a positive finite number, got {max_d}")
    if not 0 < boundary < width:
        raise ContractViolation(f"boundary {boundary} must lie inside width {width}")
    integer, decimals = _digits(max_d)
    if len(integer) > boundary or len(decimals) > min(boundary, width - boundary):
        raise DepthRangeError(f"{max_d!r} has too many digits for a {width}-wide vector")

    vec = np.zeros(width)
    start = boundary - len(integer)
    for j, ch in enumerate(integer):
        vec[start + j] = (int(ch) + 1) / 10
    for j, ch in enumerate(decimals):
        vec[boundary + j] = (int(ch) + 1) / 10
    return vec


def decode_maxd_vector(vec, boundary=DIGIT_BOUNDARY):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or not 0 < boundary < vec.size:
        raise FormatError(f"not a max-depth vector: shape {vec.shape}")
    filled = vec != 0
    if (filled & ((vec < 0.1) | (vec > 1.0))).any():
        raise FormatError("cell outside the digit alphabet {0} ∪ [0.1, 1]")
    if not filled.any():
        raise FormatError("vector holds no digits")
    scaled = 10 * vec[filled]
    if np.abs(scaled - np.rint(scaled)).max() > 1e-6:
        raise FormatError("cell is not a digit value (d+1)/10")

    digits = np.zeros(vec.size, dtype=int)
    digits[filled] = np.rint(scaled).astype(int) - 1
    int_cells = np.flatnonzero(filled[:boundary])
    dec_cells = np.flatnonzero(filled[boundary:])
    if int_cells.size and (int_cells[-1] != boundary - 1 or np.any(np.diff(int_cells) != 1)):
        raise FormatError("integer digits must be contiguous and end at the boundary")
    if dec_cells.size and (dec_cells[0] != 0 or np.any(np.diff(dec_cells) != 1)):
        raise FormatError("decimal digits must be contiguous and start at the boundary")

    integer = "".join(str(d) for d in digits[int_cells]) or "0"
    decimals = "".join(str(d) for d in digits[boundary + dec_cells])
    return float(f"{integer}.{decimals}" if decimals else integer)


# --- Model input assembly ---

@dataclass
class EncodedInput:
    tensor: np.ndarray   # C×H×W
    max_d: tuple         # one key per encoded quantity
    vectors: np.ndarray  # one max-depth vector per key

    @property
    def depth_max(self):
        """Key the metric decode uses: the Z / depth one."""
        return self.max_d[-1]


def encode_input(depth, encoding, cfg, intrinsics=None, norm_mean=5.0, norm_std=5.0, width=TOKEN_WIDTH):
    """Build the depth-branch input for one of pde, p3de or norm."""
    if encoding == "pde":
        tensor, max_d = pde_encode(depth, cfg)
        keys = (max_d,)
    elif encoding == "p3de":
        if intrinsics is None:
            raise ContractViolation("p3de encoding needs camera intrinsics")
        tensor, keys = p3de_encode(depth_to_points(depth, intrinsics), cfg)
    elif encoding == "norm":
        tensor = normalize_encode(depth, norm_mean, norm_std)[None]
        keys = (float(cfg.max_depth),)
    else:
        raise ContractViolation(f"encoding must be one of {ENCODINGS}, got {encoding}")
    vectors = np.stack([encode_maxd_vector(k, width=width) for k in keys])
    return EncodedInput(tensor=tensor, max_d=keys, vectors=vectors)


def input_channels(encoding, channels):
    return {"pde": channels, "p3de": 3 * channels, "norm": 1}[encoding]


# --- Channel dump ---

def dump_channels(enc, out_dir, prefix="pde"):
    """Write each channel as an 8-bit PGM, [-1, 1] mapped to [0, 255]."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c, channel in enumerate(np.asarray(enc)):
        gray = np.rint((np.clip(channel, -1, 1) + 1) / 2 * 255).astype(np.uint8)
        path = out_dir / f"{prefix}_{c:03d}.pgm"
        Image.fromarray(gray).save(path)
        paths.append(path)
    return paths

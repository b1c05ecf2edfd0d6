"""
depth.py - Depth maps, RGB images, camera intrinsics and their file formats

A depth map is an H×W float64 array in meters where exactly 0.0 means
missing. On disk it is a 16-bit single-channel PNG in millimeters.
RGB images are 3×H×W floats in [0, 1], stored as 8-bit PNG.
"""

from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation, DepthRangeError, EmptySetError, FormatError
from .util import make_rng, read_key_values, write_key_values


MM_PER_M = 1000.0
U16_MAX = 65535
SIXTEEN_BIT_MODES = ("I;16", "I;16B", "I;16L", "I")
PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
GRAY_16 = (16, 0)


# --- Validation ---

def check_depth(depth):
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ContractViolation(f"depth map must be H×W, got shape {depth.shape}")
    if not np.isfinite(depth).all() or (depth < 0).any():
        raise ContractViolation("depth values must be finite and >= 0")
    return depth


def validity_mask(depth):
    """True where depth is present."""
    return np.asarray(depth) > 0


def check_rgb(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ContractViolation(f"rgb image must be 3×H×W, got {rgb.shape}")
    if (rgb < 0).any() or (rgb > 1).any():
        raise ContractViolation("rgb values must lie in [0, 1]")
    return rgb


# --- Depth PNG ---

def _png_sample_format(path):
    """(bit depth, color type) from the IHDR chunk, None if not a PNG."""
    with open(path, "rb") as f:
        head = f.read(26)
    if len(head) < 26 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        return None
    return head[24], head[25]


def load_depth_png(path):
    path = Path(path)
    sample = _png_sample_format(path)
    if sample != GRAY_16:
        got = "not a PNG" if sample is None else f"bit depth {sample[0]}, color type {sample[1]}"
        raise FormatError(f"{path}: expected a 16-bit single-channel PNG, got {got}")
    with Image.open(path) as img:
        # mode "I" is what older Pillow calls 16-bit grayscale
        if img.mode not in SIXTEEN_BIT_MODES:
            raise FormatError(f"{path}: expected a 16-bit single-channel PNG, got {img.mode}")
        raw = np.array(img).astype(np.int64)
    if raw.ndim != 2 or raw.min() < 0 or raw.max() > U16_MAX:
        raise FormatError(f"{path}: values outside the 16-bit range")
    return raw / MM_PER_M


def save_depth_png(depth, path):
    depth = check_depth(depth)
    mm = np.rint(depth * MM_PER_M)
    if mm.size and mm.max() > U16_MAX:
        raise DepthRangeError(f"depth {depth.max():.4f} m does not fit 16-bit millimeters")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mm.astype(np.uint16)).save(path, format="PNG")


# --- RGB PNG ---

def save_rgb_png(rgb, path):
    rgb = check_rgb(rgb)
    pixels = np.rint(rgb * 255).astype(np.uint8).transpose(1, 2, 0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels)).save(path, format="PNG")


def load_rgb_png(path):
    with Image.open(path) as img:
        pixels = np.array(img.convert("RGB"), dtype=np.float64)
    return pixels.transpose(2, 0, 1) / 255.0


# --- Intrinsics ---

@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self, height, width):
        if not (self.fx > 0 and self.fy > 0):
            raise ContractViolation(f"focal lengths must be positive: fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < width and 0 <= self.cy < height):
            raise ContractViolation(f"principal point ({self.cx}, {self.cy}) outside {width}×{height}")
        return self

    def flipped(self, width):
        """Intrinsics of the horizontally mirrored image."""
        return Intrinsics(self.fx, self.fy, width - 1 - self.cx, self.cy)


def random_intrinsics(seed, height, width):
    """fx = fy uniform in [0.5, 2]·min(h, w); principal point within ±10% of center."""
    if height < 2 or width < 2:
        raise ContractViolation(f"image must be at least 2×2, got {height}×{width}")
    rng = make_rng(seed)
    f = rng.uniform(0.5, 2.0) * min(height, width)
    cx = width / 2 * (1 + rng.uniform(-0.1, 0.1))
    cy = height / 2 * (1 + rng.uniform(-0.1, 0.1))
    return Intrinsics(fx=f, fy=f, cx=cx, cy=cy)


def read_intrinsics(path):
    values = read_key_values(path)
    expected = {"fx", "fy", "cx", "cy"}
    if set(values) != expected:
        raise FormatError(f"{path}: expected keys fx, fy, cx, cy, got {sorted(values)}")
    try:
        return Intrinsics(**{k: float(values[k]) for k in ("fx", "fy", "cx", "cy")})
    except (TypeError, ValueError):
        raise FormatError(f"{path}: intrinsics values must be numbers") from None


def write_intrinsics(k, path):
    write_key_values(path, {key: repr(float(v)) for key, v in asdict(k).items()})


# --- Geometry / statistics ---

def depth_to_points(depth, k):
    """Back-project to a 3×H×W camera-frame point map. u = column, v = row."""
    depth = check_depth(depth)
    h, w = depth.shape
    k.validate(h, w)
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    x = (u - k.cx) * depth / k.fx
    y = (v - k.cy) * depth / k.fy
    x[depth == 0] = 0.0
    y[depth == 0] = 0.0
    return np.stack([x, y, depth])


def depth_stats(depth):
    """(mean, population std, density) over valid pixels."""
    depth = check_depth(depth)
    valid = depth[depth > 0]
    if valid.size == 0:
        raise EmptySetError("depth map has no valid pixels")
    return float(valid.mean()), float(valid.std()), valid.size / depth.size


# --- Range fitting at inference ---

def fit_to_range(depth, max_d, fraction=0.9):
    """
    Scale a sample whose depth reaches max_d down to fraction·max_d.
    Returns (scaled depth, scalar); the scalar is 1.0 when nothing changed.
    """
    depth = check_depth(depth)
    if not 0 < fraction <= 1:
        raise ContractViolation(f"fraction must be in (0, 1], got {fraction}")
    peak = depth.max() if depth.size else 0.0
    if peak < max_d:
        return depth, 1.0
    scalar = fraction * max_d / peak
    return depth * scalar, scalar


def restore_range(pred, scalar):
    return np.asarray(pred, dtype=np.float64) / scalar

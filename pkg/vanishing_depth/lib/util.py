"""
util.py - Small helpers shared across the library

Seeded generators, nearest-neighbor resizing, key-value text files and
CSV appends.
"""

from pathlib import Path

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from .errors import ContractViolation


# --- Randomness ---

def make_rng(seed, *keys):
    """Generator keyed by (seed, *keys); same keys, same stream."""
    if keys:
        return np.random.default_rng([int(seed), *(int(k) for k in keys)])
    return np.random.default_rng(seed)


def draw_seed(rng):
    return int(rng.integers(0, 2**31 - 1))


# --- Resizing ---

def nearest_resize(array, height, width):
    """
    Nearest-neighbor resize of an H×W (or C×H×W) array.
    Output pixel o samples input floor(o·in/out), so booleans stay boolean.
    """
    array = np.asarray(array)
    if array.ndim not in (2, 3):
        raise ContractViolation(f"nearest_resize expects 2-D or 3-D, got {array.shape}")
    if height < 1 or width < 1:
        raise ContractViolation(f"nearest_resize target {height}×{width}")
    in_h, in_w = array.shape[-2:]
    rows = (np.arange(height) * in_h) // height
    cols = (np.arange(width) * in_w) // width
    return array[..., rows[:, None], cols[None, :]]


# --- Key-value text files ---

def read_key_values(path):
    """Parse a flat key=value file (dotenv syntax). Missing file is an error."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return dict(dotenv_values(path))


def write_key_values(path, values):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for key, value in values.items():
            f.write(f"{key}={value}\n")


# --- CSV ---

def append_rows(path, rows):
    """Append dict rows to a CSV, writing the header only for a new file."""
    path = Path(path)
    if not rows:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(rows)
    df.to_csv(path, mode="a", header=not path.exists(), index=False)

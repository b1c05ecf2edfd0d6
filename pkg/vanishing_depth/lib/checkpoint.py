"""
checkpoint.py - "VDCK" array files and model checkpoints

Layout (little-endian): magic "VDCK", u32 version, u32 array count, then
per array: u32 name length, utf-8 name, u8 dtype tag (1 = f64), u32 rank,
rank × u32 extents, f64 payload. A model checkpoint stores param/<name>
arrays plus Adam state, with the model config in a JSON file next to it.
"""

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import ModelConfig, build_model
from .optim import Adam


MAGIC = b"VDCK"
VERSION = 1
DTYPE_F64 = 1

_HEADER = struct.Struct("<4sII")


# --- Raw arrays ---

def write_arrays(path, arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(arrays)))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name], dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BI", DTYPE_F64, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr).tobytes())


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def read_arrays(path):
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    magic, version, count = reader.unpack(_HEADER.format)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a VDCK file")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")

    arrays = {}
    for _ in range(count):
        (length,) = reader.unpack("<I")
        name = reader.take(length).decode("utf-8")
        tag, rank = reader.unpack("<BI")
        if tag != DTYPE_F64:
            raise FormatError(f"{path}: array {name} has unknown dtype tag {tag}")
        shape = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        payload = reader.take(8 * size)
        arrays[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.pos != len(reader.data):
        raise FormatError(f"{path}: trailing bytes after {count} arrays")
    return arrays


# --- Model checkpoints ---

def sidecar_path(path):
    return Path(path).with_suffix(".json")


def save_checkpoint(path, model, optimizer=None, meta=None):
    arrays = {f"param/{name}": node.value for name, node in model.store.items()}
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    write_arrays(path, arrays)
    sidecar = {
        "model": asdict(model.cfg),
        "optimizer": None if optimizer is None else optimizer.settings(),
        "meta": meta or {},
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def _model_config(raw):
    raw = dict(raw)
    raw["widths"] = tuple(raw["widths"])
    raw["fusion_stages"] = tuple(raw["fusion_stages"])
    return ModelConfig(**raw)


def load_checkpoint(path):
    """Returns (model, optimizer or None, meta)."""
    path = Path(path)
    side = sidecar_path(path)
    if not side.is_file():
        raise FileNotFoundError(f"checkpoint config not found: {side}")
    try:
        sidecar = json.loads(side.read_text(encoding="utf-8"))
        cfg = _model_config(sidecar["model"])
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise FormatError(f"{side}: bad checkpoint config ({e})") from None

    arrays = read_arrays(path)
    model = build_model(cfg, seed=0)
    for name in model.store.names():
        key = f"param/{name}"
        if key not in arrays:
            raise FormatError(f"{path}: missing parameter {name}")
        model.store.set_value(name, arrays[key])

    optimizer = None
    if sidecar.get("optimizer"):
        settings = sidecar["optimizer"]
        optimizer = Adam(lr=settings["lr"], betas=tuple(settings["betas"]), eps=settings["eps"])
        optimizer.load_state(arrays)
    return model, optimizer, sidecar.get("meta", {})

"""
config.py - Training configuration

TrainConfig holds every knob of the pipeline. Config files are flat
key=value text (same syntax as .env), keys are TrainConfig field names.
Process defaults come from the environment / .env.
"""

import os
from dataclasses import dataclass, fields, asdict
from pathlib import Path

from dotenv import load_dotenv

from vanishing_depth.lib.errors import ContractViolation, FormatError
from vanishing_depth.lib.loss import MultiScaleSpec, SiLossParams, terms_for
from vanishing_depth.lib.masks import NoiseSchedule
from vanishing_depth.lib.model import ModelConfig
from vanishing_depth.lib.pde import ENCODINGS, MIN_VECTOR_WIDTH, PdeConfig, input_channels
from vanishing_depth.lib.randomize import RandomizeConfig
from vanishing_depth.lib.util import read_key_values, write_key_values

load_dotenv()


# --- Config ---
OUT_DIR = Path(os.getenv("VD_OUT_DIR", "runs"))
NO_PROGRESS = os.getenv("VD_NO_PROGRESS", "0").strip().lower() in ("1", "true", "yes")


@dataclass
class TrainConfig:
    # desk scale: the reference setup is 224 px, batch 128
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    height: int = 64
    width: int = 64
    train_scenes: int = 512
    eval_scenes: int = 16
    eval_every: int = 250
    checkpoint_every: int = 500

    # input encoding
    encoding: str = "pde"
    pde_channels: int = 32
    pde_temperature: float = 3e-4
    max_d_mode: str = "global"
    max_depth: float = 15.0
    norm_mean: float = 5.0
    norm_std: float = 5.0

    # augmentation
    jitter_amplitude: float = 0.20
    bin_jitter: float = 0.10
    augment_rgb: bool = True

    # vanish schedule (linear widening is a stand-in shape)
    warmup_steps: int = 1000
    easy_hi: float = 0.30
    hard_hi: float = 0.99
    removal_lo: float = 0.01

    # loss
    si_lambda: float = 0.85
    si_alpha: float = 10.0
    min_pred_depth: float = 1e-3

    # model
    widths: tuple = (16, 32, 64, 128)
    fusion_stages: tuple = (0, 1, 2, 3)
    heads: int = 4
    decoder_width: int = 32
    place_value: str = "exponential"
    rgb_frozen: bool = False
    maxd_conditioning: bool = True
    maxd_width: int = 768
    leaky_slope: float = 0.01

    # evaluation
    sweep_seed: int = 1234
    eval_fit_fraction: float = 0.9

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ContractViolation("steps and batch_size must be >= 1")
        if not self.lr > 0:
            raise ContractViolation(f"lr must be positive, got {self.lr}")
        if self.encoding not in ENCODINGS:
            raise ContractViolation(f"encoding must be one of {ENCODINGS}, got {self.encoding}")
        if self.train_scenes < 1 or self.eval_scenes < 1:
            raise ContractViolation("scene counts must be >= 1")
        if self.maxd_width < MIN_VECTOR_WIDTH:
            raise ContractViolation(f"maxd_width must be at least {MIN_VECTOR_WIDTH}, got {self.maxd_width}")

    # --- derived component configs ---

    def pde_config(self):
        return PdeConfig(self.pde_channels, self.pde_temperature, self.max_d_mode, self.max_depth)

    def randomize_config(self):
        return RandomizeConfig(max_d=self.max_depth, jitter_amplitude=self.jitter_amplitude, bin_jitter=self.bin_jitter)

    def schedule(self):
        return NoiseSchedule(self.warmup_steps, self.easy_hi, self.hard_hi, self.removal_lo)

    def loss_params(self):
        return SiLossParams(lam=self.si_lambda, alpha=self.si_alpha)

    def multiscale(self):
        return MultiScaleSpec(factors=self.model_config().scale_factors())

    def decode_terms(self):
        """Head size, fixed by the configured max depth."""
        return terms_for(self.max_depth)

    def model_config(self):
        return ModelConfig(
            in_channels=input_channels(self.encoding, self.pde_channels),
            widths=tuple(self.widths),
            fusion_stages=tuple(self.fusion_stages),
            heads=self.heads,
            decode_terms=self.decode_terms(),
            decoder_width=self.decoder_width,
            rgb_frozen=self.rgb_frozen,
            maxd_conditioning=self.maxd_conditioning,
            maxd_width=self.maxd_width,
            maxd_vectors=3 if self.encoding == "p3de" else 1,
            slope=self.leaky_slope,
        )


# --- File I/O ---

def _cast(kind, raw, key):
    text = (raw or "").strip()
    try:
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
        return kind(text)
    except ValueError:
        raise FormatError(f"config key '{key}': cannot read {raw!r} as {kind.__name__}") from None


def _field_types():
    defaults = TrainConfig.__dataclass_fields__
    return {f.name: type(defaults[f.name].default) for f in fields(TrainConfig)}


def load_config(path):
    """Read a key=value config file. Unknown keys are an error."""
    values = read_key_values(path)
    types = _field_types()
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise FormatError(f"{path}: unknown config key '{unknown[0]}'")
    return TrainConfig(**{k: _cast(types[k], v, k) for k, v in values.items()})


def save_config(cfg, path):
    out = {}
    for key, value in asdict(cfg).items():
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        out[key] = value
    write_key_values(path, out)

"""
model.py - Toy RGBD encoder-decoder

Two stride-2 conv branches (RGB, depth). At the fusion stages the RGB
features are injected into the depth branch through a squeeze-and-excite
gate. An FPN top-down path feeds one head per output scale (1, 1/2, 1/4,
...), each emitting n metric-decode coefficients per pixel.

Parameter names: rgb.s{k}.*, depth.s{k}.*, depth.maxd.weight,
fuse.s{k}.*, fpn.lat{k}.*, head{j}.*
"""

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import ContractViolation
from .pde import MIN_VECTOR_WIDTH
from .util import make_rng


# --- Config ---

@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 32
    widths: tuple = (16, 32, 64, 128)
    fusion_stages: tuple = (0, 1, 2, 3)
    heads: int = 4
    decode_terms: int = 4
    decoder_width: int = 32
    rgb_frozen: bool = False
    maxd_conditioning: bool = True
    maxd_width: int = 768
    maxd_vectors: int = 1
    slope: float = 0.01
    excite_reduction: int = 4

    def __post_init__(self):
        if self.in_channels < 1 or not self.widths or any(w < 1 for w in self.widths):
            raise ContractViolation("channel counts and widths must be positive")
        if not 1 <= self.heads <= len(self.widths):
            raise ContractViolation(f"heads must be in [1, {len(self.widths)}], got {self.heads}")
        if any(not 0 <= s < len(self.widths) for s in self.fusion_stages):
            raise ContractViolation(f"fusion stages {self.fusion_stages} outside {len(self.widths)} stages")
        if self.decode_terms < 1 or self.decoder_width < 1:
            raise ContractViolation("decode_terms and decoder_width must be positive")
        if self.maxd_width < 1 or self.maxd_vectors < 1 or self.excite_reduction < 1:
            raise ContractViolation("maxd_width, maxd_vectors and excite_reduction must be positive")
        if self.maxd_conditioning and self.maxd_width < MIN_VECTOR_WIDTH:
            raise ContractViolation(f"maxd_width must be at least {MIN_VECTOR_WIDTH}, got {self.maxd_width}")

    @property
    def stages(self):
        return len(self.widths)

    def scale_factors(self):
        return tuple(1.0 / 2**j for j in range(self.heads))


def _layout(cfg):
    """(name, shape) of every parameter in construction order."""
    specs = []
    c_rgb, c_depth = 3, cfg.in_channels
    for s, w in enumerate(cfg.widths):
        specs.append((f"rgb.s{s}.weight", (w, c_rgb, 3, 3)))  # no bias: zero RGB in, zero RGB out
        specs.append((f"depth.s{s}.weight", (w, c_depth, 3, 3)))
        specs.append((f"depth.s{s}.bias", (w,)))
        c_rgb = c_depth = w
    if cfg.maxd_conditioning:
        specs.append(("depth.maxd.weight", (cfg.widths[0], cfg.maxd_width * cfg.maxd_vectors, 1, 1)))
    for s in sorted(set(cfg.fusion_stages)):
        w = cfg.widths[s]
        hidden = max(1, 2 * w // cfg.excite_reduction)
        specs.append((f"fuse.s{s}.excite1.weight", (hidden, 2 * w, 1, 1)))
        specs.append((f"fuse.s{s}.excite1.bias", (hidden,)))
        specs.append((f"fuse.s{s}.excite2.weight", (2 * w, hidden, 1, 1)))
        specs.append((f"fuse.s{s}.excite2.bias", (2 * w,)))
        specs.append((f"fuse.s{s}.project_rgb.weight", (w, w, 1, 1)))
        specs.append((f"fuse.s{s}.project_depth.weight", (w, w, 1, 1)))
    dw = cfg.decoder_width
    for s, w in enumerate(cfg.widths):
        specs.append((f"fpn.lat{s}.weight", (dw, w, 1, 1)))
        specs.append((f"fpn.lat{s}.bias", (dw,)))
    for j in range(cfg.heads):
        specs.append((f"head{j}.conv.weight", (dw, dw, 3, 3)))
        specs.append((f"head{j}.conv.bias", (dw,)))
        specs.append((f"head{j}.out.weight", (cfg.decode_terms, dw, 1, 1)))
        specs.append((f"head{j}.out.bias", (cfg.decode_terms,)))
    return specs


def parameter_count(cfg):
    return sum(int(np.prod(shape)) for _, shape in _layout(cfg))


# --- Fusion ---

@dataclass
class FusionBlock:
    excite1_weight: ag.Node
    excite1_bias: ag.Node
    excite2_weight: ag.Node
    excite2_bias: ag.Node
    project_rgb: ag.Node
    project_depth: ag.Node


def se_fuse(rgb_feat, depth_feat, block, slope=0.01, trace=None, prefix="fuse"):
    """
    concat -> global mean -> 1×1 -> leaky -> 1×1 -> sigmoid gates; each
    modality is gated, projected 1×1 to the depth width, and added on top
    of depth_feat.
    """
    if rgb_feat.value.ndim != 3 or depth_feat.value.ndim != 3 or rgb_feat.shape[1:] != depth_feat.shape[1:]:
        raise ContractViolation(f"fusion inputs differ spatially: {rgb_feat.shape} vs {depth_feat.shape}")
    c_rgb, c_depth = rgb_feat.shape[0], depth_feat.shape[0]
    joined = ag.concat([rgb_feat, depth_feat])
    squeeze = ag.reduce("mean", joined, axes=(1, 2), keepdims=True)
    hidden = ag.leaky_relu(ag.conv2d(squeeze, block.excite1_weight, block.excite1_bias), slope)
    gates = ag.sigmoid(ag.conv2d(hidden, block.excite2_weight, block.excite2_bias))

    rgb_gated = rgb_feat * ag.broadcast_to(ag.channels(gates, 0, c_rgb), rgb_feat.shape)
    depth_gated = depth_feat * ag.broadcast_to(ag.channels(gates, c_rgb, c_rgb + c_depth), depth_feat.shape)
    rgb_part = ag.conv2d(rgb_gated, block.project_rgb)
    depth_part = ag.conv2d(depth_gated, block.project_depth)
    if trace is not None:
        trace[f"{prefix}.gates"] = gates.value.reshape(-1)
        trace[f"{prefix}.rgb_part"] = rgb_part.value
        trace[f"{prefix}.depth_part"] = depth_part.value
    return depth_feat + rgb_part + depth_part


def rgb_amplitude(rgb_part, depth_part):
    """|rgb|₁ / (|rgb|₁ + |depth|₁), 0 when both vanish."""
    a = float(np.abs(rgb_part).sum())
    b = float(np.abs(depth_part).sum())
    return 0.0 if a + b == 0 else a / (a + b)


# --- Model ---

class RgbdModel:
    def __init__(self, cfg, store):
        self.cfg = cfg
        self.store = store

    def trainable_names(self):
        return [name for name, node in self.store.items() if node.requires_grad]

    def parameter_count(self):
        return self.store.size()

    def fusion_block(self, stage):
        p = self.store
        return FusionBlock(
            excite1_weight=p[f"fuse.s{stage}.excite1.weight"],
            excite1_bias=p[f"fuse.s{stage}.excite1.bias"],
            excite2_weight=p[f"fuse.s{stage}.excite2.weight"],
            excite2_bias=p[f"fuse.s{stage}.excite2.bias"],
            project_rgb=p[f"fuse.s{stage}.project_rgb.weight"],
            project_depth=p[f"fuse.s{stage}.project_depth.weight"],
        )

    def _inputs(self, rgb, depth_enc):
        rgb = rgb if isinstance(rgb, ag.Node) else ag.constant(rgb)
        depth = depth_enc if isinstance(depth_enc, ag.Node) else ag.constant(depth_enc)
        if rgb.value.ndim != 3 or rgb.shape[0] != 3:
            raise ContractViolation(f"rgb input must be 3×H×W, got {rgb.shape}")
        if depth.value.ndim != 3 or depth.shape[0] != self.cfg.in_channels:
            raise ContractViolation(f"depth input must be {self.cfg.in_channels}×H×W, got {depth.shape}")
        if rgb.shape[1:] != depth.shape[1:]:
            raise ContractViolation(f"rgb {rgb.shape} and depth {depth.shape} differ spatially")
        step = 2**self.cfg.stages
        h, w = depth.shape[1:]
        if h % step or w % step:
            raise ContractViolation(f"input {h}×{w} is not divisible by {step}")
        return rgb, depth

    def _conditioning(self, maxd_vec):
        if not self.cfg.maxd_conditioning:
            return None
        if maxd_vec is None:
            raise ContractViolation("model expects a max-depth vector")
        vec = np.asarray(maxd_vec, dtype=np.float64).reshape(-1)
        expected = self.cfg.maxd_width * self.cfg.maxd_vectors
        if vec.size != expected:
            raise ContractViolation(f"max-depth vector has {vec.size} cells, expected {expected}")
        return ag.conv2d(ag.constant(vec.reshape(-1, 1, 1)), self.store["depth.maxd.weight"])

    def forward(self, rgb, depth_enc, maxd_vec=None, trace=None):
        """List of head outputs, head j is decode_terms×(H/2^j)×(W/2^j)."""
        cfg, p = self.cfg, self.store
        r, d = self._inputs(rgb, depth_enc)
        height, width = d.shape[1:]
        cond = self._conditioning(maxd_vec)

        features = []
        for s in range(cfg.stages):
            r = ag.leaky_relu(ag.conv2d(r, p[f"rgb.s{s}.weight"], stride=2, padding=1), cfg.slope)
            d = ag.conv2d(d, p[f"depth.s{s}.weight"], p[f"depth.s{s}.bias"], stride=2, padding=1)
            if s == 0 and cond is not None:
                d = d + ag.broadcast_to(cond, d.shape)
            d = ag.leaky_relu(d, cfg.slope)
            if trace is not None:
                trace[f"rgb.s{s}"] = r.value
                trace[f"depth.s{s}"] = d.value
            if s in cfg.fusion_stages:
                d = se_fuse(r, d, self.fusion_block(s), cfg.slope, trace, prefix=f"fuse.s{s}")
            features.append(d)

        # top-down
        pyramid = [None] * cfg.stages
        above = None
        for s in reversed(range(cfg.stages)):
            level = ag.conv2d(features[s], p[f"fpn.lat{s}.weight"], p[f"fpn.lat{s}.bias"])
            if above is not None:
                level = level + ag.bilinear_resize(above, *level.shape[1:])
            pyramid[s] = above = level

        heads = []
        for j in range(cfg.heads):
            x = ag.conv2d(pyramid[j], p[f"head{j}.conv.weight"], p[f"head{j}.conv.bias"], padding=1)
            x = ag.leaky_relu(x, cfg.slope)
            x = ag.conv2d(x, p[f"head{j}.out.weight"], p[f"head{j}.out.bias"])
            heads.append(ag.bilinear_resize(x, height // 2**j, width // 2**j))
        return heads


def build_model(cfg, seed):
    """Uniform ±1/sqrt(fan_in) weights, zero biases; head coefficient 0 starts at 1."""
    rng = make_rng(seed)
    store = ag.ParameterStore()
    for name, shape in _layout(cfg):
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
            value = rng.uniform(-bound, bound, size=shape)
        else:
            value = np.zeros(shape)
            if name.startswith("head") and name.endswith(".out.bias"):
                value[0] = 1.0
        store.add(name, value, requires_grad=not (cfg.rgb_frozen and name.startswith("rgb.")))
    return RgbdModel(cfg, store)


def fusion_rgb_amplitude(model, rgb, depth_enc, maxd_vec=None):
    """Per fusion stage: share of the RGB contribution in what fusion adds."""
    trace = {}
    model.forward(rgb, depth_enc, maxd_vec, trace=trace)
    return amplitudes_from_trace(trace, model.cfg.fusion_stages)


def amplitudes_from_trace(trace, stages):
    return {
        s: rgb_amplitude(trace[f"fuse.s{s}.rgb_part"], trace[f"fuse.s{s}.depth_part"])
        for s in sorted(set(stages))
    }

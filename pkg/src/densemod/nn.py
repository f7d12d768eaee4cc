"""Network blocks and the two generator architectures.

Both generators share one backbone: a head convolution, six dense modulation
blocks driven by a 16-channel feature map that a self-feature extraction
module computes from the input image itself, and a pixel-shuffle upsampling
tail. The super-resolution model runs the backbone at input resolution and
upsamples x4 at the end; the detail-enhancement model moves the features to
quarter resolution with space-to-depth first, re-injects full-resolution
head information through SPADE layers, and upsamples back.

Parameters live in a :class:`ParamStore` keyed by hierarchical dotted names
(e.g. ``"sfe.res1.conv1.weight"``); every forward function is a pure
function of its inputs and the store.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as dt
from .optim import he_init
from .tensor import ShapeError, Tensor

MODES = ("super_resolution", "detail_enhance")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a generator; parameters are built from it."""

    mode: str
    num_blocks: int = 6
    channels: int = 16
    scale: int = 4
    kernel: int = 3
    leaky_slope: float = 0.1
    use_spade: Optional[bool] = None
    seed: int = 0
    global_skip: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.scale < 1 or self.scale & (self.scale - 1):
            raise ValueError(f"scale must be a power of 2, got {self.scale}")
        if self.kernel != 3:
            raise ValueError("only 3x3 backbone kernels are supported")
        if self.num_blocks < 1 or self.channels < 1:
            raise ValueError("num_blocks and channels must be positive")
        if self.use_spade is None:
            object.__setattr__(self, "use_spade", self.mode == "detail_enhance")

    @property
    def upsample_stages(self):
        return int(self.scale).bit_length() - 1

    def spade_positions(self):
        """Block indices (1-based) followed by a SPADE injection."""
        if not self.use_spade:
            return ()
        n = min(3, self.num_blocks)
        return tuple(-(-self.num_blocks * (i + 1) // n) for i in range(n))


class ParamStore:
    """Ordered, uniquely named collection of learnable tensors."""

    def __init__(self):
        self._params = {}

    def add(self, name, t):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._params[name] = t

    def __getitem__(self, name):
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def total_parameters(self):
        return sum(p.numel for p in self._params.values())

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def set_requires_grad(self, flag):
        for p in self._params.values():
            p.requires_grad = bool(flag)


@dataclass
class ModulationParams:
    """Per-pixel scale and shift, spatially matching the tensor they modulate."""

    alpha: Tensor
    beta: Tensor


def modulate(x, m):
    """y = alpha * x + beta, elementwise."""
    if m.alpha.shape != x.shape or m.beta.shape != x.shape:
        raise ShapeError(
            f"modulate: alpha {m.alpha.shape} / beta {m.beta.shape} "
            f"must match x {x.shape}")
    return dt.add(dt.mul(m.alpha, x), m.beta)


# ---------------------------------------------------------------------------
# building the parameter store
# ---------------------------------------------------------------------------

def _conv_param_count(cin, cout, k):
    return cout * cin * k * k + cout


def _conv_layout(spec):
    """(name, cin, cout, k, bias_fill) for every conv in creation order."""
    c = spec.channels
    s2 = spec.scale * spec.scale
    layers = [
        ("sfe.in", 3, c, 3, 0.0),
        ("sfe.res1.conv1", c, c, 3, 0.0),
        ("sfe.res1.conv2", c, c, 3, 0.0),
        ("sfe.res2.conv1", c, c, 3, 0.0),
        ("sfe.res2.conv2", c, c, 3, 0.0),
        ("sfe.mid1", c, c, 3, 0.0),
        ("sfe.mid2", c, c, 3, 0.0),
        ("sfe.out", c, c, 3, 0.0),
    ]
    if spec.mode == "detail_enhance":
        layers.append(("sfe.reduce", c * s2, c, 1, 0.0))
    layers.append(("head", 3, c, 3, 0.0))
    if spec.mode == "detail_enhance":
        layers.append(("reduce", c * s2, c, 1, 0.0))
        layers.append(("guide", c * s2, c, 1, 0.0))
    spade_after = spec.spade_positions()
    for k in range(1, spec.num_blocks + 1):
        prefix = f"block{k}"
        for i in range(1, 5):
            layers.append((f"{prefix}.conv{i}", i * c, c, 3, 0.0))
        layers.append((f"{prefix}.fuse", 5 * c, c, 1, 0.0))
        layers.append((f"{prefix}.mod.shared", c, c, 1, 0.0))
        # scale branch starts at 1 so training begins near identity modulation
        layers.append((f"{prefix}.mod.alpha", c, c, 1, 1.0))
        layers.append((f"{prefix}.mod.beta", c, c, 1, 0.0))
        if k in spade_after:
            j = spade_after.index(k) + 1
            layers.append((f"spade{j}.shared", c, c, 3, 0.0))
            layers.append((f"spade{j}.alpha", c, c, 3, 0.0))
            layers.append((f"spade{j}.beta", c, c, 3, 0.0))
    tail_ch = 3 * s2
    layers.append(("tail.expand", c, tail_ch, 3, 0.0))
    for stage in range(1, spec.upsample_stages):
        tail_ch //= 4
        layers.append((f"tail.mid{stage}", tail_ch, tail_ch, 3, 0.0))
    return layers


# Residual-branch output convolutions start at zero so every block (and
# SPADE injection) is an identity map at initialization. Pure He init lets
# the variance compound multiplicatively across the six residual blocks
# (measured output std ~300 on [0,1] inputs), which poisons Adam's moment
# estimates for thousands of iterations.
def _zero_initialized(name):
    if name.endswith(".fuse") or name.endswith(".mod.beta"):
        return True
    return name.startswith("spade") and (name.endswith(".alpha")
                                         or name.endswith(".beta"))


def build_generator_params(spec):
    """ParamStore for the generator described by ``spec``.

    Weights are He-initialized except the residual-branch outputs (block
    fusion, modulation shift, SPADE parameter convs), which start at zero;
    biases start at zero except the modulation scale branch, which starts
    at one.
    """
    rng = np.random.default_rng(spec.seed)
    store = ParamStore()
    for name, cin, cout, k, bias_fill in _conv_layout(spec):
        w = he_init((cout, cin, k, k), fan_in=cin * k * k, rng=rng)
        if _zero_initialized(name):
            w = np.zeros_like(w)
        store.add(f"{name}.weight", Tensor(w, requires_grad=True))
        store.add(f"{name}.bias",
                  dt.full((1, cout, 1, 1), bias_fill, requires_grad=True))
    return store


def expected_param_count(spec):
    """Closed-form parameter count for the generator built from ``spec``."""
    return sum(_conv_param_count(cin, cout, k)
               for _, cin, cout, k, _ in _conv_layout(spec))


def parameter_shapes(spec):
    """(name, shape) for every parameter of the generator, in store order."""
    out = []
    for name, cin, cout, k, _ in _conv_layout(spec):
        out.append((f"{name}.weight", (cout, cin, k, k)))
        out.append((f"{name}.bias", (1, cout, 1, 1)))
    return out


CRITIC_CHANNELS = (32, 64, 64, 64)
CRITIC_SLOPE = 0.2
CRITIC_MIN_INPUT = 16


def build_critic_params(seed=0):
    """Patch critic: four stride-2 3x3 convs and a linear 1x1 score head."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    cin = 3
    for i, cout in enumerate(CRITIC_CHANNELS, start=1):
        w = he_init((cout, cin, 3, 3), fan_in=cin * 9, rng=rng)
        store.add(f"critic.conv{i}.weight", Tensor(w, requires_grad=True))
        store.add(f"critic.conv{i}.bias", dt.zeros((1, cout, 1, 1), requires_grad=True))
        cin = cout
    w = he_init((1, cin, 1, 1), fan_in=cin, rng=rng)
    store.add("critic.head.weight", Tensor(w, requires_grad=True))
    store.add("critic.head.bias", dt.zeros((1, 1, 1, 1), requires_grad=True))
    return store


def expected_critic_param_count():
    total, cin = 0, 3
    for cout in CRITIC_CHANNELS:
        total += _conv_param_count(cin, cout, 3)
        cin = cout
    return total + _conv_param_count(cin, 1, 1)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _conv(x, params, name, stride=1):
    w = params[f"{name}.weight"]
    pad = 1 if w.shape[2] == 3 else 0
    return dt.conv2d(x, w, params[f"{name}.bias"], stride=stride, pad=pad)


def _residual_block(x, params, prefix, slope):
    h = dt.leaky_relu(_conv(x, params, f"{prefix}.conv1"), slope)
    h = _conv(h, params, f"{prefix}.conv2")
    return dt.add(x, h)


def sfe_forward(img, params, spec):
    """Self-feature extraction: the feature map every modulation layer reads.

    Two residual blocks book-ended by plain convolutions; in detail-enhance
    mode the output is moved to the backbone's quarter resolution with
    space-to-depth plus a 1x1 reduction.
    """
    if img.shape[1] != 3:
        raise ShapeError(f"sfe_forward: expected 3 input channels, got {img.shape[1]}")
    slope = spec.leaky_slope
    h = dt.leaky_relu(_conv(img, params, "sfe.in"), slope)
    h = _residual_block(h, params, "sfe.res1", slope)
    h = _residual_block(h, params, "sfe.res2", slope)
    h = dt.leaky_relu(_conv(h, params, "sfe.mid1"), slope)
    h = dt.leaky_relu(_conv(h, params, "sfe.mid2"), slope)
    h = _conv(h, params, "sfe.out")
    if spec.mode == "detail_enhance":
        h = _conv(dt.space_to_depth(h, spec.scale), params, "sfe.reduce")
    return h


def modulation_layer(feat, ai_feat, params, prefix, slope=0.1):
    """Per-pixel scale/shift derived from the self-extracted feature map.

    One shared 1x1 convolution feeds two parallel 1x1 branches. The scale
    and shift depend only on ``ai_feat``; ``feat`` fixes the expected
    spatial size. Zero weights with the default bias initialization
    (alpha bias 1, beta bias 0) make the result an identity modulation.
    """
    if ai_feat.shape[0] != feat.shape[0] or ai_feat.shape[2:] != feat.shape[2:]:
        raise ShapeError(
            f"modulation_layer: feature map [N,H,W]="
            f"{(feat.shape[0],) + feat.shape[2:]} does not match ai map "
            f"{(ai_feat.shape[0],) + ai_feat.shape[2:]}")
    shared = dt.leaky_relu(_conv(ai_feat, params, f"{prefix}.shared"), slope)
    alpha = _conv(shared, params, f"{prefix}.alpha")
    beta = _conv(shared, params, f"{prefix}.beta")
    return ModulationParams(alpha=alpha, beta=beta)


def dense_modulation_block(x, ai_feat, params, prefix, slope=0.1):
    """Densely connected convolutions, fused, modulated, plus local residual.

    Each of the four internal 3x3 convolutions consumes the concatenation of
    the block input and all previous outputs (16/32/48/64 channels at the
    default width); a 1x1 convolution fuses back to the base width before
    modulation. With all convolution parameters zeroed the block is a
    bit-exact identity.
    """
    feats = [x]
    for i in range(1, 5):
        inp = feats[0] if len(feats) == 1 else dt.concat_channels(feats)
        feats.append(dt.leaky_relu(_conv(inp, params, f"{prefix}.conv{i}"), slope))
    fused = _conv(dt.concat_channels(feats), params, f"{prefix}.fuse")
    m = modulation_layer(fused, ai_feat, params, f"{prefix}.mod", slope)
    return dt.add(x, modulate(fused, m))


def spade_layer(x, guide, params, prefix, slope=0.1, eps=1e-5):
    """Per-channel normalization followed by guide-driven spatial modulation.

    The guide (already reduced to x's resolution) passes one shared 3x3
    convolution, then one 3x3 convolution per modulation parameter.
    """
    if guide.shape[0] != x.shape[0] or guide.shape[2:] != x.shape[2:]:
        raise ShapeError(
            f"spade_layer: guide [N,H,W]={(guide.shape[0],) + guide.shape[2:]} "
            f"does not match x {(x.shape[0],) + x.shape[2:]}")
    shared = dt.leaky_relu(_conv(guide, params, f"{prefix}.shared"), slope)
    alpha = _conv(shared, params, f"{prefix}.alpha")
    beta = _conv(shared, params, f"{prefix}.beta")
    xn = dt.instance_norm(x, eps=eps)
    return modulate(xn, ModulationParams(alpha=alpha, beta=beta))


def _upsample_tail(h, params, spec):
    # expand to 3*scale^2 channels, then shuffle x2 per stage with one
    # intermediate convolution between stages
    h = _conv(h, params, "tail.expand")
    for stage in range(1, spec.upsample_stages + 1):
        h = dt.pixel_shuffle(h, 2)
        if stage < spec.upsample_stages:
            h = dt.leaky_relu(_conv(h, params, f"tail.mid{stage}"), spec.leaky_slope)
    return h


def sr_generator_forward(img, params, spec, train=False):
    """x4 super-resolution; output is clamped to [0,1] only at inference."""
    if spec.mode != "super_resolution":
        raise ValueError("sr_generator_forward needs a super_resolution spec")
    slope = spec.leaky_slope
    ai = sfe_forward(img, params, spec)
    h = dt.leaky_relu(_conv(img, params, "head"), slope)
    for k in range(1, spec.num_blocks + 1):
        h = dense_modulation_block(h, ai, params, f"block{k}", slope)
    h = _upsample_tail(h, params, spec)
    if spec.global_skip:
        h = dt.add(h, dt.nearest_upsample(img, spec.scale))
    return h if train else dt.clamp(h, 0.0, 1.0)


def enh_generator_forward(img, params, spec, train=False):
    """Same-resolution detail enhancement over a x4-downsampled backbone."""
    if spec.mode != "detail_enhance":
        raise ValueError("enh_generator_forward needs a detail_enhance spec")
    n, c, h_in, w_in = img.shape
    if h_in % spec.scale or w_in % spec.scale:
        raise ShapeError(
            f"enh_generator_forward: H={h_in}, W={w_in} must be divisible "
            f"by {spec.scale}")
    slope = spec.leaky_slope
    ai = sfe_forward(img, params, spec)
    head = dt.leaky_relu(_conv(img, params, "head"), slope)
    packed = dt.space_to_depth(head, spec.scale)
    h = _conv(packed, params, "reduce")
    guide = _conv(packed, params, "guide")
    spade_after = spec.spade_positions()
    for k in range(1, spec.num_blocks + 1):
        h = dense_modulation_block(h, ai, params, f"block{k}", slope)
        if k in spade_after:
            j = spade_after.index(k) + 1
            h = dt.add(h, spade_layer(h, guide, params, f"spade{j}", slope))
    h = _upsample_tail(h, params, spec)
    if spec.global_skip:
        h = dt.add(h, img)
    return h if train else dt.clamp(h, 0.0, 1.0)


def generator_forward(img, params, spec, train=False):
    if spec.mode == "super_resolution":
        return sr_generator_forward(img, params, spec, train=train)
    return enh_generator_forward(img, params, spec, train=train)


def critic_forward(img, params):
    """Patch-level critic scores; no output nonlinearity."""
    n, c, h, w = img.shape
    if h < CRITIC_MIN_INPUT or w < CRITIC_MIN_INPUT:
        raise ShapeError(
            f"critic_forward: input {h}x{w} is smaller than the receptive "
            f"field ({CRITIC_MIN_INPUT}x{CRITIC_MIN_INPUT})")
    out = img
    for i in range(1, len(CRITIC_CHANNELS) + 1):
        out = dt.leaky_relu(_conv(out, params, f"critic.conv{i}", stride=2),
                            CRITIC_SLOPE)
    return _conv(out, params, "critic.head")
